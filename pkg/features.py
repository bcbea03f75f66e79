"""
Gaborフィルタバンク特徴量の抽出と結合
log-Melスペクトログラムとの2D畳み込み、臨界サンプリング、特徴量セットの連結
"""

import logging
from typing import Mapping, Optional, Union

import numpy as np
from scipy.signal import correlate2d, fftconvolve

from audio_io import FeatureMatrix
from gbfb import FilterbankSpec, GaborFilter
from mel_frontend import LogMelSpectrogram
from models import (
    CombinationSpec,
    ConvolutionMethodEnum,
    FeatureSetEnum,
    FeatureSetPart,
    PaddingPolicy,
    UniformRandomPart,
    ZerosPart,
)

logger = logging.getLogger(__name__)

# 結果表の結合設定
COMBINATION_PRESETS = {
    "lhtm": "ltm,htm",
    "mhtm": "mtm,htm",
    "dchtm": "dc,htm",
    "rhtm": "random:202,htm",
    "zhtm": "zeros:202,htm",
}


def pad_spectrogram(values: np.ndarray, pad_t: int, pad_c: int, padding: PaddingPolicy) -> np.ndarray:
    """時間方向・周波数方向のはみ出し部分をパディング"""
    temporal_mode = "edge" if padding.temporal == "replicate" else "constant"
    spectral_mode = "edge" if padding.spectral == "replicate" else "constant"
    padded = np.pad(values, ((pad_t, pad_t), (0, 0)), mode=temporal_mode)
    return np.pad(padded, ((0, 0), (pad_c, pad_c)), mode=spectral_mode)


def convolve2d(
    spec: Union[LogMelSpectrogram, np.ndarray],
    kernel: Union[GaborFilter, np.ndarray],
    padding: PaddingPolicy = PaddingPolicy(),
    method: ConvolutionMethodEnum = ConvolutionMethodEnum.DIRECT,
) -> np.ndarray:
    """
    スペクトログラムとカーネルの2D相関（カーネル中心を各出力セルに合わせる）

    Args:
        spec: frames × channels のスペクトログラム
        kernel: W_k × W_n のカーネル（両辺とも奇数）
        padding: はみ出し部分の扱い
        method: direct（参照実装）または fft

    Returns:
        np.ndarray: 入力と同じ frames × channels の出力
    """
    values = spec.values if isinstance(spec, LogMelSpectrogram) else np.asarray(spec, dtype=np.float64)
    taps = kernel.kernel if isinstance(kernel, GaborFilter) else np.asarray(kernel, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] < 1:
        raise ValueError(f"スペクトログラムは1フレーム以上の2次元配列である必要があります: shape={values.shape}")
    if taps.ndim != 2 or taps.shape[0] % 2 == 0 or taps.shape[1] % 2 == 0:
        raise ValueError(f"カーネルのサイズは奇数である必要があります: shape={taps.shape}")

    w_k, w_n = taps.shape
    padded = pad_spectrogram(values, (w_n - 1) // 2, (w_k - 1) // 2, padding)
    # カーネルは (周波数, 時間)、スペクトログラムは (時間, 周波数)
    taps = taps.T
    if ConvolutionMethodEnum(method) == ConvolutionMethodEnum.FFT:
        return fftconvolve(padded, taps[::-1, ::-1], mode="valid")
    return correlate2d(padded, taps, mode="valid")


def extract_features(
    spec: LogMelSpectrogram,
    fb: FilterbankSpec,
    method: ConvolutionMethodEnum = ConvolutionMethodEnum.DIRECT,
) -> FeatureMatrix:
    """
    フィルタごとに畳み込み、選択チャネルを順に連結して特徴量ベクトルを作る

    Args:
        spec: log-Melスペクトログラム
        fb: 構築済みフィルタバンク
        method: 畳み込みの実装

    Returns:
        FeatureMatrix: frames × fb.dim の特徴量
    """
    if spec.n_channels != fb.config.n_mel_channels:
        raise ValueError(
            f"チャネル数が一致しません: スペクトログラム {spec.n_channels}, フィルタバンク {fb.config.n_mel_channels}"
        )
    blocks = [
        convolve2d(spec, f, method=method)[:, list(channels)]
        for f, channels in zip(fb.filters, fb.sampling)
    ]
    values = np.hstack(blocks) if blocks else np.zeros((spec.frames, 0))
    return FeatureMatrix(values=values, frame_shift_s=spec.frame_shift_s, dim_provenance=fb.provenance())


def parse_combination(text: str, seed: int = 0) -> CombinationSpec:
    """
    `htm,zeros:202,random:202:7` 形式またはプリセット名 (lhtm 等) を解析

    Args:
        text: 結合設定の文字列
        seed: seed を省略した random パーツに使う値

    Returns:
        CombinationSpec: 解析結果
    """
    text = COMBINATION_PRESETS.get(text.strip().lower(), text)
    parts = []
    for token in (t.strip().lower() for t in text.split(",")):
        if not token:
            continue
        name, *args = token.split(":")
        try:
            if name == "zeros" and len(args) == 1:
                parts.append(ZerosPart(dim=int(args[0])))
            elif name == "random" and len(args) in (1, 2):
                parts.append(UniformRandomPart(dim=int(args[0]), seed=int(args[1]) if len(args) == 2 else seed))
            elif not args:
                parts.append(FeatureSetPart(feature_set=FeatureSetEnum(name)))
            else:
                raise ValueError(token)
        except ValueError as e:
            valid = ", ".join(s.value for s in FeatureSetEnum)
            raise ValueError(
                f"結合パーツ '{token}' が不正です（{valid}, zeros:D, random:D[:SEED] のいずれか）"
            ) from e
    return CombinationSpec(parts=tuple(parts))


def combine_features(
    frames: int,
    parts: CombinationSpec,
    inputs: Mapping[FeatureSetEnum, FeatureMatrix],
    frame_shift_s: Optional[float] = None,
) -> FeatureMatrix:
    """
    結合設定の順に特徴量を水平連結

    Args:
        frames: フレーム数
        parts: 結合設定
        inputs: 特徴量セット → 特徴量行列
        frame_shift_s: 出力のフレームシフト（None なら入力から、入力がなければ 0.01）

    Returns:
        FeatureMatrix: 連結した特徴量
    """
    blocks, provenance = [], []
    for part in parts.parts:
        if isinstance(part, FeatureSetPart):
            if part.feature_set not in inputs:
                raise ValueError(f"特徴量セット {part.feature_set.value} が入力にありません")
            matrix = inputs[part.feature_set]
            if matrix.frames != frames:
                raise ValueError(
                    f"フレーム数が一致しません: {part.feature_set.value} は {matrix.frames} フレーム, 期待 {frames}"
                )
            if frame_shift_s is None:
                frame_shift_s = matrix.frame_shift_s
            blocks.append(matrix.values)
            provenance.extend(f"{part.feature_set.value}:{p}" for p in matrix.dim_provenance)
        elif isinstance(part, ZerosPart):
            blocks.append(np.zeros((frames, part.dim)))
            provenance.extend(f"zeros:{i:03d}" for i in range(part.dim))
        elif isinstance(part, UniformRandomPart):
            rng = np.random.default_rng(part.seed)
            blocks.append(rng.uniform(-1.0, 1.0, size=(frames, part.dim)))
            provenance.extend(f"random:{i:03d}" for i in range(part.dim))

    values = np.hstack(blocks) if blocks else np.zeros((frames, 0))
    if values.shape[1] == 0:
        raise ValueError("結合後の次元数が0です")
    return FeatureMatrix(
        values=values,
        frame_shift_s=frame_shift_s if frame_shift_s is not None else 0.01,
        dim_provenance=tuple(provenance),
    )
