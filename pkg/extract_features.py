#!/usr/bin/env python3
"""
Gaborフィルタバンク特徴量抽出スクリプト

WAVファイルから log-Mel / Gabor 特徴量を抽出してHTKまたはCSV形式で保存し、
音素クラスの類似度分析、フィルタの書き出し、設定情報の表示を行います。

    python extract_features.py gbfb --subgroup htm in.wav -o out.htk
    python extract_features.py combine --preset lhtm a.wav b.wav --out-dir feats/
    python extract_features.py similarity --features f.htk --labels f.lab --phones phones/phones_large_vocab.txt --out sim.csv
    python extract_features.py info
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from pydantic import ValidationError

from audio_io import atomic_output, read_feature_matrix, read_labels, read_phone_list, write_csv_matrix
from features import COMBINATION_PRESETS, parse_combination
from models import (
    ConvolutionMethodEnum,
    GfbConfig,
    MelConfig,
    OutputFormatEnum,
    PipelineConfig,
    SubgroupEnum,
)
from services import FeatureExtractionService, FileResult, TaskEnum, output_path_for
from similarity import (
    angle_cutoff,
    bandwidth,
    class_centroids,
    confusion_pairs,
    normalize_features,
    rcm_order,
    reorder,
    similarity_matrix,
    threshold_matrix,
)

logger = logging.getLogger(__name__)

# MelConfig と GfbConfig の両方に反映するキー
SHARED_KEYS = {"frame_shift_s": "frame_shift_s", "n_channels": "n_mel_channels"}
TUPLE_KEYS = {"temporal_mods_hz", "spectral_mods_cpc"}
PIPELINE_KEYS = {"subgroup", "output_format", "method", "seed", "jobs", "combination"}


class UsageError(Exception):
    """コマンドラインまたは設定ファイルの使い方の誤り（終了コード1）"""


class CliArgumentParser(argparse.ArgumentParser):
    """エラー時に終了せず UsageError を送出する ArgumentParser"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _parse_tuple(key: str, text: str) -> Optional[Tuple[float, ...]]:
    if text.strip().lower() in ("", "none"):
        return None
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as e:
        raise UsageError(f"{key} はカンマ区切りの数値で指定してください: {text!r}") from e


def read_config_file(path: str) -> Dict[str, str]:
    """
    key=value 形式の設定ファイルを読み込む

    Args:
        path: 設定ファイルのパス

    Returns:
        Dict[str, str]: キーと値（値のないキーは除外）
    """
    if not os.path.isfile(path):
        raise UsageError(f"設定ファイルが見つかりません: {path}")
    values = {key: value for key, value in dotenv_values(path).items() if value is not None}
    known = set(MelConfig.model_fields) | set(GfbConfig.model_fields) | PIPELINE_KEYS | set(SHARED_KEYS)
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"設定ファイル {path} に不明なキーがあります: {', '.join(unknown)}")
    return values


def build_config(args: argparse.Namespace) -> PipelineConfig:
    """
    設定ファイルとコマンドラインフラグから PipelineConfig を組み立てる（フラグが優先）

    Args:
        args: 解析済み引数

    Returns:
        PipelineConfig: 検証済み設定
    """
    settings: Dict[str, object] = dict(read_config_file(args.config)) if args.config else {}
    for key in PIPELINE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if getattr(args, "preset", None):
        settings["combination"] = args.preset
    elif getattr(args, "parts", None):
        settings["combination"] = args.parts

    mel: Dict[str, object] = {}
    gfb: Dict[str, object] = {}
    pipeline: Dict[str, object] = {}
    for key, value in settings.items():
        if key in TUPLE_KEYS:
            value = _parse_tuple(key, str(value))
        if key in SHARED_KEYS:
            mel.setdefault(key, value)
            gfb.setdefault(SHARED_KEYS[key], value)
        elif key in MelConfig.model_fields:
            mel[key] = value
        elif key in GfbConfig.model_fields:
            gfb[key] = value
        else:
            pipeline[key] = value

    if "combination" in pipeline:
        try:
            seed = int(pipeline.get("seed", 0))
            pipeline["combination"] = parse_combination(str(pipeline["combination"]), seed=seed)
        except ValueError as e:
            raise UsageError(str(e)) from e
    if "jobs" not in pipeline:
        pipeline["jobs"] = os.cpu_count() or 1
    return PipelineConfig(mel=MelConfig(**mel), gfb=GfbConfig(**gfb), **pipeline)


def config_digest(config: PipelineConfig) -> str:
    """設定の正規化JSONの SHA-256（並列数 jobs は含めない）"""
    canonical = json.dumps(config.model_dump(mode="json", exclude={"jobs"}), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _plan_outputs(inputs: Sequence[str], output: Optional[str], out_dir: Optional[str], config: PipelineConfig) -> List[Tuple[str, str]]:
    if output is not None:
        if len(inputs) != 1:
            raise UsageError("-o/--output は入力が1ファイルの時のみ指定できます（複数なら --out-dir）")
        return [(inputs[0], output)]
    directory = out_dir or "."
    jobs = [(src, output_path_for(src, directory, config.output_format)) for src in inputs]
    targets = [dst for _, dst in jobs]
    if len(set(targets)) != len(targets):
        raise UsageError("同じファイル名の入力があり、出力ファイルが重複します")
    Path(directory).mkdir(parents=True, exist_ok=True)
    return jobs


def command_features(args: argparse.Namespace, task: TaskEnum) -> int:
    """melspec / gbfb / combine サブコマンド"""
    config = build_config(args)
    if task == TaskEnum.COMBINE and config.combination is None:
        raise UsageError("combine には --preset または --parts が必要です")
    jobs = _plan_outputs(args.inputs, args.output, args.out_dir, config)

    logger.info("%s: %d ファイル, 並列数 %d", task.value, len(jobs), min(config.jobs, len(jobs)))
    service = FeatureExtractionService(config)
    results: List[FileResult] = service.process_batch(task, jobs)
    failed = [r for r in results if r.error is not None]
    for result in results:
        if result.error is None:
            print(f"✅ {result.input_path} → {result.output_path} ({result.frames} フレーム × {result.dim} 次元)")
    for result in failed:
        print(f"❌ {result.input_path}: {result.error}", file=sys.stderr)
    if failed:
        return 2
    print(f"処理完了: {len(results)} ファイル")
    return 0


def _write_order(path: str, phonemes: Sequence[str], order: Sequence[int]) -> None:
    with atomic_output(path) as tmp_path:
        with open(tmp_path, "w", encoding="utf-8") as f:
            for i in order:
                f.write(f"{i}\t{phonemes[i]}\n")


def _write_pairs(path: str, pairs) -> None:
    df = pd.DataFrame(pairs, columns=["phoneme_a", "phoneme_b", "similarity", "angle_deg"])
    with atomic_output(path) as tmp_path:
        df.to_csv(tmp_path, index=False, float_format="%.17g", encoding="utf-8", lineterminator="\n")


def command_similarity(args: argparse.Namespace) -> int:
    """similarity サブコマンド"""
    if not 0 < args.threshold_deg < 180:
        raise UsageError(f"--threshold-deg は (0, 180) の範囲で指定してください: {args.threshold_deg}")
    matrix = read_feature_matrix(args.features, frame_shift_s=args.frame_shift)
    labels = read_labels(args.labels)
    phones = read_phone_list(args.phones)
    if not args.no_normalize:
        matrix = normalize_features(matrix)

    centroids = class_centroids(matrix, labels, phones)
    for phoneme in centroids.dropped:
        print(f"⚠️ フレームがないため除外: {phoneme}")
    sm = similarity_matrix(centroids)
    order = rcm_order(sm, args.threshold_deg)
    ordered = reorder(threshold_matrix(sm, args.threshold_deg), order)
    cutoff = angle_cutoff(args.threshold_deg)

    # 出力は [0, 1] に切り詰める
    write_csv_matrix(np.clip(ordered.values, 0.0, 1.0), args.out, row_names=ordered.phonemes, col_names=ordered.phonemes)
    if args.order_out:
        _write_order(args.order_out, sm.phonemes, order)
    if args.pairs_out:
        _write_pairs(args.pairs_out, confusion_pairs(sm, min_similarity=cutoff))

    print(f"✅ 類似度行列: {len(sm.phonemes)} 音素 → {args.out}")
    print(
        f"帯域幅 (cos {args.threshold_deg}° = {cutoff:.5f}): "
        f"{bandwidth(sm.values, cutoff=cutoff)} → {bandwidth(sm.values, order, cutoff=cutoff)}"
    )
    return 0


def command_filter_dump(args: argparse.Namespace) -> int:
    """filter-dump サブコマンド"""
    config = build_config(args)
    fb = FeatureExtractionService(config).filterbank(config.subgroup)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = [
        {
            "filter_id": f.filter_id,
            "f_n_hz": f.params.f_n_hz,
            "f_k_cpc": f.params.f_k_cpc,
            "orientation": f.params.orientation,
            "w_n": f.params.w_n,
            "w_k": f.params.w_k,
            "channels": " ".join(str(c) for c in channels),
        }
        for f, channels in zip(fb.filters, fb.sampling)
    ]
    with atomic_output(out_dir / "filters.csv") as tmp_path:
        pd.DataFrame(rows).to_csv(tmp_path, index=False, float_format="%.17g", encoding="utf-8", lineterminator="\n")
    for f in fb.filters:
        write_csv_matrix(f.kernel, out_dir / f"kernel_{f.filter_id:02d}.csv")

    print(f"✅ {len(fb.filters)} フィルタを書き出しました: {out_dir} ({fb.subgroup.value}, {fb.dim} 次元)")
    return 0


def command_info(args: argparse.Namespace) -> int:
    """info サブコマンド"""
    config = build_config(args)
    service = FeatureExtractionService(config)

    print("Gaborフィルタバンク設定")
    print("=" * 40)
    print(f"{'サブグループ':<10} {'フィルタ数':>8} {'次元数':>8}")
    for subgroup in SubgroupEnum:
        fb = service.filterbank(subgroup)
        print(f"{subgroup.value:<10} {len(fb.filters):>8} {fb.dim:>8}")
    print("-" * 40)
    print("結合プリセット:")
    for name in COMBINATION_PRESETS:
        combination = parse_combination(name, seed=config.seed)
        print(f"  {name:<8} {COMBINATION_PRESETS[name]:<18} {service.combination_dim(combination):>6} 次元")
    print("-" * 40)
    print(f"設定ダイジェスト (SHA-256): {config_digest(config)}")
    return 0


def _add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value 形式の設定ファイル（フラグが優先）")
    parser.add_argument("--verbose", "-v", action="count", default=0, help="ログを詳細に (-vv でDEBUG)")


def _add_pipeline_arguments(parser: argparse.ArgumentParser, with_subgroup: bool = True) -> None:
    if with_subgroup:
        parser.add_argument(
            "--subgroup", "-s",
            choices=[s.value for s in SubgroupEnum],
            help="フィルタのサブグループ (デフォルト: full)",
        )
    parser.add_argument(
        "--method",
        choices=[m.value for m in ConvolutionMethodEnum],
        help="畳み込みの実装 (デフォルト: direct)",
    )


def _add_batch_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("inputs", nargs="+", help="入力WAVファイル (16 kHz, 16-bit, モノラル)")
    parser.add_argument("--output", "-o", help="出力ファイル（入力が1つの時）")
    parser.add_argument("--out-dir", help="出力ディレクトリ (デフォルト: 現在のディレクトリ)")
    parser.add_argument(
        "--format", "-f",
        dest="output_format",
        choices=[f.value for f in OutputFormatEnum],
        help="出力形式 (デフォルト: htk)",
    )
    parser.add_argument("--jobs", "-j", type=int, help="並列プロセス数 (デフォルト: CPUコア数)")


def build_parser() -> argparse.ArgumentParser:
    parser = CliArgumentParser(
        prog="extract_features.py",
        description="スペクトル時間Gaborフィルタバンクによる音声特徴量抽出",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="<subcommand>", parser_class=CliArgumentParser)
    subparsers.required = True

    melspec = subparsers.add_parser("melspec", help="log-Melスペクトログラム (MFSC) を抽出")
    _add_common_arguments(melspec)
    _add_batch_arguments(melspec)

    gbfb = subparsers.add_parser("gbfb", help="Gaborフィルタバンク特徴量を抽出")
    _add_common_arguments(gbfb)
    _add_batch_arguments(gbfb)
    _add_pipeline_arguments(gbfb)

    combine = subparsers.add_parser("combine", help="特徴量セットを連結して抽出")
    _add_common_arguments(combine)
    _add_batch_arguments(combine)
    _add_pipeline_arguments(combine, with_subgroup=False)
    group = combine.add_mutually_exclusive_group()
    group.add_argument("--preset", choices=list(COMBINATION_PRESETS), help="結合プリセット")
    group.add_argument("--parts", help="結合パーツ（例: htm,zeros:202,random:202:7）")
    combine.add_argument("--seed", type=int, help="random パーツの乱数シード (デフォルト: 0)")

    similarity = subparsers.add_parser("similarity", help="音素重心のコサイン類似度行列を計算")
    _add_common_arguments(similarity)
    similarity.add_argument("--features", required=True, help="特徴量/活性化ファイル (.htk または .csv)")
    similarity.add_argument("--labels", required=True, help="フレーム単位ラベルファイル")
    similarity.add_argument("--phones", required=True, help="音素リスト（1行1シンボル）")
    similarity.add_argument("--threshold-deg", type=float, default=45.0, help="角度しきい値 (デフォルト: 45)")
    similarity.add_argument("--out", required=True, help="類似度行列CSV（RCM順）")
    similarity.add_argument("--order-out", help="RCM順序の出力ファイル")
    similarity.add_argument("--pairs-out", help="混同しやすい音素ペアのCSV")
    similarity.add_argument("--frame-shift", type=float, default=0.01, help="CSV入力のフレームシフト秒 (デフォルト: 0.01)")
    similarity.add_argument("--no-normalize", action="store_true", help="平均・分散正規化を行わない")

    dump = subparsers.add_parser("filter-dump", help="フィルタのカーネルとパラメータをCSVに書き出す")
    _add_common_arguments(dump)
    _add_pipeline_arguments(dump)
    dump.add_argument("--out-dir", required=True, help="出力ディレクトリ")

    info = subparsers.add_parser("info", help="フィルタ数・次元数・設定ダイジェストを表示")
    _add_common_arguments(info)
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING - 10 * min(verbosity, 2)
    logging.basicConfig(format="%(levelname)s: %(message)s")
    logging.getLogger().setLevel(level)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    コマンドラインを実行して終了コードを返す

    Args:
        argv: 引数リスト（None なら sys.argv[1:]）

    Returns:
        int: 0=成功, 1=使い方の誤り, 2=データエラー
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _configure_logging(args.verbose)
        if args.command == "melspec":
            return command_features(args, TaskEnum.MELSPEC)
        if args.command == "gbfb":
            return command_features(args, TaskEnum.GBFB)
        if args.command == "combine":
            return command_features(args, TaskEnum.COMBINE)
        if args.command == "similarity":
            return command_similarity(args)
        if args.command == "filter-dump":
            return command_filter_dump(args)
        return command_info(args)
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else 0
    except UsageError as e:
        print(f"❌ {e}", file=sys.stderr)
        return 1
    except ValidationError as e:
        errors = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        print(f"❌ 設定が不正です: {errors}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return 2


def main():
    return run()


if __name__ == "__main__":
    exit(main())
