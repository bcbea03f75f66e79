"""
コマンドライン (extract_features.py) とバッチ処理サービスのテスト
"""

import re
import struct
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from audio_io import AudioSignal, read_csv_matrix, read_htk, write_csv_matrix, write_wav
from extract_features import build_config, build_parser, config_digest, run
from generate_sample_wav import generate_am_tone, generate_chirp, generate_noise, generate_sine_wave
from models import OutputFormatEnum, PipelineConfig, SubgroupEnum
from services import FeatureExtractionService, TaskEnum


@pytest.fixture
def wav_dir(tmp_path):
    """1秒のWAVを3個用意"""
    directory = tmp_path / "wav"
    directory.mkdir()
    write_wav(generate_sine_wave(1000, 1.0), directory / "sine.wav")
    write_wav(generate_chirp(200, 4000, 1.0), directory / "chirp.wav")
    write_wav(generate_am_tone(700, 4.0, 1.2), directory / "am.wav")
    return directory


@pytest.fixture
def similarity_inputs(tmp_path):
    """3音素の特徴量CSV・ラベル・音素リスト"""
    rng = np.random.default_rng(0)
    means = {"AA": [3.0, 0.0, 0.0, 1.0], "IY": [2.5, 0.5, 0.0, 1.0], "S": [-3.0, 0.0, 2.0, -1.0]}
    blocks, lines, start = [], [], 0
    for phoneme in ("AA", "S", "IY", "AA"):
        blocks.append(rng.normal(means[phoneme], 0.3, size=(15, 4)))
        lines.append(f"{start} {start + 15} {phoneme}")
        start += 15
    features = tmp_path / "act.csv"
    write_csv_matrix(np.vstack(blocks), features, col_names=[f"u{i}" for i in range(4)])
    labels = tmp_path / "utt.lab"
    labels.write_text("\n".join(lines) + "\n", encoding="utf-8")
    phones = tmp_path / "phones.txt"
    phones.write_text("AA\nIY\nS\nZH\n", encoding="utf-8")
    return features, labels, phones


class TestFeatureCommands:
    """melspec / gbfb / combine のテスト"""

    def test_gbfb_htm_htk(self, wav_dir, tmp_path, capsys):
        """HTM の HTK 出力は sampSize = 4·202"""
        out = tmp_path / "out.htk"
        assert run(["gbfb", "--subgroup", "htm", str(wav_dir / "sine.wav"), "-o", str(out)]) == 0
        n_samples, samp_period, samp_size, parm_kind = struct.unpack(">iihh", out.read_bytes()[:12])
        assert (n_samples, samp_period, samp_size, parm_kind) == (98, 100000, 4 * 202, 9)
        assert "✅" in capsys.readouterr().out

    def test_byte_identical_reruns(self, wav_dir, tmp_path):
        """同じ入力とフラグから同じバイト列"""
        outputs = []
        for name in ("a.htk", "b.htk"):
            out = tmp_path / name
            assert run(["gbfb", "-s", "ltm", str(wav_dir / "chirp.wav"), "-o", str(out)]) == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_melspec_csv(self, wav_dir, tmp_path):
        """melspec は31次元、CSVのヘッダは mel:chNN"""
        out = tmp_path / "mel.csv"
        assert run(["melspec", "--format", "csv", str(wav_dir / "sine.wav"), "-o", str(out)]) == 0
        values, _, cols = read_csv_matrix(out, row_names=False)
        assert values.shape == (98, 31)
        assert cols[0] == "mel:ch00"

    def test_combine_zhtm(self, wav_dir, tmp_path):
        """ZHTM は404次元で先頭202次元が0"""
        out = tmp_path / "zhtm.csv"
        assert run(["combine", "--preset", "zhtm", "-f", "csv", str(wav_dir / "chirp.wav"), "-o", str(out)]) == 0
        values, _, cols = read_csv_matrix(out, row_names=False)
        assert values.shape == (98, 404)
        assert not np.any(values[:, :202])
        assert cols[202].startswith("htm:gbfb:")

    def test_combine_rhtm_seed(self, wav_dir, tmp_path):
        """RHTM はシードが同じなら同一、違えば異なる"""
        paths = [tmp_path / f"r{i}.htk" for i in range(3)]
        for path, seed in zip(paths, ("3", "3", "4")):
            assert run(["combine", "--preset", "rhtm", "--seed", seed, str(wav_dir / "am.wav"), "-o", str(path)]) == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()
        assert paths[0].read_bytes() != paths[2].read_bytes()

    def test_combine_parts(self, wav_dir, tmp_path):
        """--parts で任意の結合"""
        out = tmp_path / "parts.htk"
        assert run(["combine", "--parts", "mfsc,dc", str(wav_dir / "sine.wav"), "-o", str(out)]) == 0
        assert read_htk(out).dim == 31 + 51

    def test_batch_matches_single_runs(self, wav_dir, tmp_path):
        """並列バッチの結果は1ファイルずつの実行と同一"""
        inputs = sorted(str(p) for p in wav_dir.glob("*.wav"))
        batch_dir = tmp_path / "batch"
        assert run(["gbfb", "-s", "htm", "--jobs", "2", "--out-dir", str(batch_dir), *inputs]) == 0
        for src in inputs:
            single = tmp_path / "single.htk"
            assert run(["gbfb", "-s", "htm", "--jobs", "1", src, "-o", str(single)]) == 0
            stem = Path(src).stem
            assert (batch_dir / f"{stem}.htk").read_bytes() == single.read_bytes()

    def test_missing_input_data_error(self, tmp_path, capsys):
        """存在しない入力は終了コード2、stderr に1行"""
        assert run(["gbfb", str(tmp_path / "nope.wav"), "-o", str(tmp_path / "x.htk")]) == 2
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1 and err[0].startswith("❌")
        assert not (tmp_path / "x.htk").exists()

    def test_wrong_sample_rate(self, tmp_path):
        """16 kHz 以外の WAV はデータエラー"""
        path = tmp_path / "8k.wav"
        write_wav(AudioSignal(np.zeros(8000), 8000), path)
        assert run(["melspec", str(path), "-o", str(tmp_path / "m.htk")]) == 2


class TestUsageErrors:
    """使い方の誤り（終了コード1）のテスト"""

    def test_bogus_subgroup(self, wav_dir, capsys):
        """不正なサブグループは有効な値を列挙して終了コード1"""
        assert run(["gbfb", "--subgroup", "bogus", str(wav_dir / "sine.wav")]) == 1
        err = capsys.readouterr().err
        for name in ("full", "ltm", "mtm", "htm", "dc"):
            assert name in err

    def test_help(self, capsys):
        """--help は終了コード0"""
        assert run(["gbfb", "--help"]) == 0
        assert "--subgroup" in capsys.readouterr().out

    def test_no_subcommand(self):
        """サブコマンドなしは終了コード1"""
        assert run([]) == 1

    def test_output_with_multiple_inputs(self, wav_dir, tmp_path):
        """複数入力に -o は使えない"""
        inputs = [str(p) for p in wav_dir.glob("*.wav")]
        assert run(["gbfb", *inputs, "-o", str(tmp_path / "x.htk")]) == 1

    def test_combine_without_parts(self, wav_dir):
        """combine には --preset か --parts が必要"""
        assert run(["combine", str(wav_dir / "sine.wav")]) == 1

    def test_bad_parts(self, wav_dir):
        """不正な結合パーツ"""
        assert run(["combine", "--parts", "htm,nothing", str(wav_dir / "sine.wav")]) == 1

    def test_invalid_config_no_output(self, wav_dir, tmp_path, capsys):
        """検証に失敗した設定では何も書き込まない"""
        config = tmp_path / "bad.env"
        config.write_text("max_time_frames=100\n", encoding="utf-8")
        out = tmp_path / "x.htk"
        assert run(["gbfb", "--config", str(config), str(wav_dir / "sine.wav"), "-o", str(out)]) == 1
        assert not out.exists()
        assert "max_time_frames" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path):
        """設定ファイルの不明なキー"""
        config = tmp_path / "bad.env"
        config.write_text("window=hann\n", encoding="utf-8")
        assert run(["info", "--config", str(config)]) == 1


class TestConfig:
    """設定ファイルとフラグの組み立てのテスト"""

    def test_flags_override_file(self, tmp_path):
        """フラグが設定ファイルより優先"""
        config = tmp_path / "run.env"
        config.write_text("subgroup=dc\nseed=5\nnu=3.5\ntemporal_mods_hz=0,2.4,3.9,6.2,9.9,15.7,25\n", encoding="utf-8")
        args = build_parser().parse_args(["gbfb", "--config", str(config), "--subgroup", "htm", "x.wav"])
        cfg = build_config(args)
        assert cfg.subgroup == SubgroupEnum.HTM
        assert cfg.seed == 5
        assert cfg.gfb.temporal_mods_hz[-1] == 25.0

    def test_shared_keys(self, tmp_path):
        """n_channels は Mel とフィルタバンクの両方に反映"""
        config = tmp_path / "run.env"
        config.write_text("n_channels=23\n", encoding="utf-8")
        cfg = build_config(build_parser().parse_args(["info", "--config", str(config)]))
        assert cfg.mel.n_channels == 23
        assert cfg.gfb.n_mel_channels == 23

    def test_digest_stable(self):
        """同じ設定は同じダイジェスト、異なる設定は異なる"""
        assert config_digest(PipelineConfig()) == config_digest(PipelineConfig())
        assert config_digest(PipelineConfig()) != config_digest(PipelineConfig(seed=1))

    def test_digest_independent_of_cpu_count(self, monkeypatch, capsys):
        """CPUコア数（既定の並列数）が違ってもダイジェストは同じ"""
        digests = []
        for cores in (4, 16):
            monkeypatch.setattr("os.cpu_count", lambda: cores)
            config = build_config(build_parser().parse_args(["info"]))
            assert config.jobs == cores
            digests.append(config_digest(config))
            assert run(["info"]) == 0
        assert digests[0] == digests[1]
        printed = re.findall(r"[0-9a-f]{64}", capsys.readouterr().out)
        assert printed == [digests[0], digests[0]]

    def test_digest_ignores_jobs(self):
        """並列数だけが違う設定は同じダイジェスト"""
        assert config_digest(PipelineConfig(jobs=1)) == config_digest(PipelineConfig(jobs=8))


class TestInfoAndDump:
    """info / filter-dump のテスト"""

    def test_info(self, capsys):
        """フィルタ数59、次元数 657/202/51、プリセット、ダイジェスト"""
        assert run(["info"]) == 0
        out = capsys.readouterr().out
        assert re.search(r"full\s+59\s+657", out)
        assert re.search(r"htm\s+18\s+202", out)
        assert re.search(r"dc\s+5\s+51", out)
        assert re.search(r"dchtm\s+dc,htm\s+253", out)
        assert re.search(r"zhtm\s+zeros:202,htm\s+404", out)
        assert re.search(r"[0-9a-f]{64}", out)

    def test_filter_dump(self, tmp_path):
        """filters.csv と各カーネルのCSV"""
        out_dir = tmp_path / "filters"
        assert run(["filter-dump", "--subgroup", "htm", "--out-dir", str(out_dir)]) == 0
        table = pd.read_csv(out_dir / "filters.csv")
        assert len(table) == 18
        assert set(table["f_n_hz"]) == {15.7, 25.0}
        first = table.iloc[0]
        kernel, _, _ = read_csv_matrix(out_dir / f"kernel_{first['filter_id']:02d}.csv", row_names=False, col_names=False)
        assert kernel.shape == (first["w_k"], first["w_n"])
        assert sum(len(str(c).split()) for c in table["channels"]) == 202


class TestSimilarityCommand:
    """similarity サブコマンドのテスト"""

    def test_similarity_outputs(self, similarity_inputs, tmp_path, capsys):
        """類似度行列・RCM順序・混同ペアを書き出す"""
        features, labels, phones = similarity_inputs
        out, order_out, pairs_out = tmp_path / "sim.csv", tmp_path / "perm.txt", tmp_path / "pairs.csv"
        code = run([
            "similarity", "--features", str(features), "--labels", str(labels), "--phones", str(phones),
            "--threshold-deg", "45", "--out", str(out), "--order-out", str(order_out), "--pairs-out", str(pairs_out), "--no-normalize",
        ])
        assert code == 0
        values, rows, cols = read_csv_matrix(out)
        assert sorted(rows) == ["AA", "IY", "S"]
        assert rows == cols
        assert np.allclose(np.diag(values), 1.0)
        assert np.all((values >= 0) & (values <= 1))
        order_lines = order_out.read_text(encoding="utf-8").splitlines()
        assert [line.split("\t")[1] for line in order_lines] == rows
        pairs = pd.read_csv(pairs_out)
        assert set(pairs.iloc[0][["phoneme_a", "phoneme_b"]]) == {"AA", "IY"}
        assert "ZH" in capsys.readouterr().out

    def test_similarity_deterministic(self, similarity_inputs, tmp_path):
        """同じ入力から同じCSV"""
        features, labels, phones = similarity_inputs
        outputs = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            assert run(["similarity", "--features", str(features), "--labels", str(labels),
                        "--phones", str(phones), "--out", str(out)]) == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_labels_beyond_features(self, similarity_inputs, tmp_path):
        """ラベルが特徴量より長ければデータエラー"""
        features, _, phones = similarity_inputs
        labels = tmp_path / "long.lab"
        labels.write_text("0 500 AA\n", encoding="utf-8")
        assert run(["similarity", "--features", str(features), "--labels", str(labels),
                    "--phones", str(phones), "--out", str(tmp_path / "s.csv")]) == 2


class TestFeatureExtractionService:
    """FeatureExtractionService のテスト"""

    def test_process_file(self, wav_dir, tmp_path):
        """1ファイルの処理結果"""
        service = FeatureExtractionService(PipelineConfig(subgroup=SubgroupEnum.DC, output_format=OutputFormatEnum.CSV))
        result = service.process_file(TaskEnum.GBFB, str(wav_dir / "am.wav"), str(tmp_path / "am.csv"))
        assert result.error is None
        assert (result.frames, result.dim) == (118, 51)

    def test_process_file_error(self, tmp_path):
        """失敗は例外ではなく error に入る"""
        bad = tmp_path / "bad.wav"
        bad.write_bytes(b"RIFF")
        result = FeatureExtractionService().process_file(TaskEnum.MELSPEC, str(bad), str(tmp_path / "o.htk"))
        assert result.error is not None

    def test_combination_dim(self):
        """音声なしで結合後の次元数"""
        from features import parse_combination
        service = FeatureExtractionService()
        assert service.combination_dim(parse_combination("dchtm")) == 253
        assert service.combination_dim(parse_combination("mfsc,zeros:5")) == 36

    def test_noise_pipeline_shapes(self):
        """音声 → log-Mel → 特徴量でフレーム数が保存される"""
        service = FeatureExtractionService(PipelineConfig(subgroup=SubgroupEnum.MTM))
        matrix = service.extract(generate_noise(0.5))
        assert matrix.values.shape == (48, 202)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
