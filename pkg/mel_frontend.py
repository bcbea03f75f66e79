"""
log-Melスペクトログラム（ETSI DSR フロントエンド準拠、31チャネル）
MFSCベースライン特徴量とGaborフィルタリングの共通入力
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window, lfilter

from audio_io import AudioSignal, FeatureMatrix
from models import MelConfig

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# ETSI ES 201 108 のオフセット補償ノッチフィルタ係数
OFFSET_POLE = 0.999


@dataclass(frozen=True)
class LogMelSpectrogram:
    """frames × n_channels の対数Melエネルギー"""
    values: np.ndarray
    frame_shift_s: float
    channel_center_hz: np.ndarray

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


def mel_scale(f_hz: ArrayLike) -> ArrayLike:
    """Mel(x) = 2595 log10(1 + x/700)"""
    f = np.asarray(f_hz, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError(f"周波数は0以上である必要があります: {f_hz}")
    mel = 2595.0 * np.log10(1.0 + f / 700.0)
    return float(mel) if mel.ndim == 0 else mel


def mel_inverse(mel: ArrayLike) -> ArrayLike:
    """mel_scale の逆関数 700 (10^(m/2595) - 1)"""
    m = np.asarray(mel, dtype=np.float64)
    f = 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    return float(f) if f.ndim == 0 else f


def channel_centers_hz(cfg: MelConfig) -> np.ndarray:
    """
    Mel軸上で等間隔に並ぶチャネル中心周波数

    両端 (f_low, f_high) を含めて n_channels+1 等分し、内側の点を中心とする
    """
    mel_low, mel_high = mel_scale(cfg.f_low_hz), mel_scale(cfg.f_high_hz)
    step = (mel_high - mel_low) / (cfg.n_channels + 1)
    return mel_inverse(mel_low + step * np.arange(1, cfg.n_channels + 1))


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """
    三角フィルタの重み行列

    Returns:
        np.ndarray: n_channels × (fft_size/2 + 1)、各三角形のピークは1
    """
    centers = channel_centers_hz(cfg)
    edges = np.concatenate(([cfg.f_low_hz], centers, [cfg.f_high_hz]))
    bin_hz = np.arange(cfg.fft_size // 2 + 1) * cfg.sample_rate_hz / cfg.fft_size

    left, center, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_hz[None, :] - left) / (center - left)
    falling = (right - bin_hz[None, :]) / (right - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def frame_count(n_samples: int, cfg: MelConfig) -> int:
    """floor((N - frame_len) / shift) + 1"""
    if n_samples < cfg.frame_length:
        return 0
    return (n_samples - cfg.frame_length) // cfg.frame_step + 1


def log_mel_spectrogram(signal: AudioSignal, cfg: MelConfig = MelConfig()) -> LogMelSpectrogram:
    """
    音声信号から log-Mel スペクトログラムを計算

    Args:
        signal: 入力音声（cfg.sample_rate_hz と一致すること）
        cfg: フロントエンド設定

    Returns:
        LogMelSpectrogram: frames × n_channels の自然対数エネルギー
    """
    if signal.sample_rate_hz != cfg.sample_rate_hz:
        raise ValueError(
            f"サンプリング周波数が一致しません: 入力 {signal.sample_rate_hz} Hz, 設定 {cfg.sample_rate_hz} Hz"
        )
    if len(signal.samples) < cfg.frame_length:
        raise ValueError(
            f"信号が1フレームより短いです: {len(signal.samples)} サンプル < {cfg.frame_length} サンプル"
        )

    x = signal.samples
    if cfg.offset_compensation:
        x = lfilter([1.0, -1.0], [1.0, -OFFSET_POLE], x)
    if cfg.preemphasis > 0:
        x = lfilter([1.0, -cfg.preemphasis], [1.0], x)

    frames = sliding_window_view(x, cfg.frame_length)[:: cfg.frame_step]
    window = get_window("hamming", cfg.frame_length, fftbins=False)
    spectrum = np.abs(np.fft.rfft(frames * window, n=cfg.fft_size, axis=1)) ** cfg.spectrum_power

    energies = spectrum @ mel_filterbank(cfg).T
    values = np.log(np.maximum(energies, cfg.energy_floor))
    logger.debug("log-Mel: %d フレーム × %d チャネル", values.shape[0], values.shape[1])
    return LogMelSpectrogram(values=values, frame_shift_s=cfg.frame_shift_s, channel_center_hz=channel_centers_hz(cfg))


def nearest_channel(centers_hz: Sequence[float], target_hz: float) -> int:
    """target_hz に最も近い中心周波数のチャネル（同距離なら小さい番号）"""
    distances = np.abs(np.asarray(centers_hz, dtype=np.float64) - target_hz)
    return int(np.argmin(distances))


def center_channel_1khz(cfg: MelConfig = MelConfig()) -> int:
    """中心周波数が 1 kHz に最も近いチャネル番号（0始まり）"""
    return nearest_channel(channel_centers_hz(cfg), 1000.0)


def mfsc_features(spec: LogMelSpectrogram) -> FeatureMatrix:
    """ベースラインMFSC特徴量（log-Melチャネルそのもの）"""
    return FeatureMatrix(
        values=spec.values.copy(),
        frame_shift_s=spec.frame_shift_s,
        dim_provenance=tuple(f"mel:ch{c:02d}" for c in range(spec.n_channels)),
    )
