"""
スペクトル時間Gaborフィルタバンク
変調周波数グリッド、フィルタ生成、サブグループ選択、臨界サンプリング
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from mel_frontend import center_channel_1khz
from models import GfbConfig, MelConfig, SUBGROUP_TEMPORAL_MODS_HZ, SubgroupEnum

logger = logging.getLogger(__name__)

# peak_response で使うFFTグリッドのオーバーサンプリング率
RESPONSE_OVERSAMPLING = 8
# サブグループの周波数照合の許容誤差（生成された 2.44 Hz と 2.4 Hz などを同一視）
SUBGROUP_REL_TOL = 0.02


@dataclass(frozen=True)
class FilterParams:
    """Gaborフィルタ1個の生成パラメータ"""
    f_n_hz: float
    f_k_cpc: float
    orientation: int
    w_n: int
    w_k: int

    @property
    def n0(self) -> int:
        return (self.w_n - 1) // 2

    @property
    def k0(self) -> int:
        return (self.w_k - 1) // 2

    @property
    def is_dc(self) -> bool:
        return self.f_n_hz == 0 and self.f_k_cpc == 0


@dataclass(frozen=True, eq=False)
class GaborFilter:
    """実数値2Dカーネル（W_k × W_n）と生成パラメータ"""
    filter_id: int
    params: FilterParams
    kernel: np.ndarray


@dataclass(frozen=True, eq=False)
class FilterbankSpec:
    """構築済みフィルタバンク（不変、スレッド間で共有可能）"""
    config: GfbConfig
    subgroup: SubgroupEnum
    center_channel: int
    filters: Tuple[GaborFilter, ...]
    sampling: Tuple[Tuple[int, ...], ...]

    @property
    def dim(self) -> int:
        return sum(len(channels) for channels in self.sampling)

    def provenance(self) -> Tuple[str, ...]:
        """各特徴量次元の由来 `gbfb:fNN:chMM`"""
        return tuple(
            f"gbfb:f{f.filter_id:02d}:ch{channel:02d}"
            for f, channels in zip(self.filters, self.sampling)
            for channel in channels
        )


def round_to_odd(x: float) -> int:
    """最も近い奇数（偶数ちょうどの場合は上側）"""
    return 2 * int(math.floor(x / 2 + 1e-9)) + 1


def modulation_axis(f_max: float, size_max: int, nu: float, distance: float) -> Tuple[float, ...]:
    """
    伝達関数のオーバーラップが一定になる変調周波数の列

    Args:
        f_max: 最大変調周波数（cycles/sample 単位）
        size_max: 最大フィルタサイズ（最小周波数 ν/(2·size_max) を決める）
        nu: 包絡内の振動数
        distance: 隣接フィルタ間の距離（帯域幅比）

    Returns:
        Tuple[float, ...]: 0 を先頭にした昇順の変調周波数
    """
    c = 4.0 * distance / nu
    if not 0 < c < 1:
        raise ValueError(f"オーバーラップ定数 c={c:.3f} は (0, 1) の範囲である必要があります")
    ratio = (1.0 + c) / (1.0 - c)
    f_min = nu / (2.0 * size_max)
    count = 1
    if f_max > f_min:
        count = int(math.floor(math.log(f_max / f_min) / math.log(ratio))) + 1
    values = f_max / ratio ** np.arange(count - 1, -1, -1)
    return (0.0,) + tuple(float(v) for v in values)


def spectral_axis(cfg: GfbConfig) -> Tuple[float, ...]:
    if cfg.spectral_mods_cpc is not None:
        return cfg.spectral_mods_cpc
    return modulation_axis(cfg.max_spectral_mod_cpc, cfg.max_freq_channels, cfg.nu, cfg.spectral_distance)


def support_size(f_cycles: float, cap: int, nu: float) -> int:
    """定Q則 W = ν/f（上限 cap、奇数に丸め）。f=0 は上限サイズ"""
    if f_cycles < 0:
        raise ValueError(f"変調周波数は0以上である必要があります: {f_cycles}")
    if f_cycles == 0:
        return cap
    return round_to_odd(min(nu / f_cycles, cap))


def modulation_grid(cfg: GfbConfig = GfbConfig()) -> List[FilterParams]:
    """
    (時間変調, スペクトル変調, 向き) の全組み合わせ

    スペクトル変調ごとに時間変調を並べ、両方が正の組には向き -1 のフィルタを追加する
    """
    grid: List[FilterParams] = []
    for f_k in spectral_axis(cfg):
        w_k = support_size(f_k, cfg.max_freq_channels, cfg.nu)
        for f_n in cfg.temporal_mods_hz:
            w_n = support_size(f_n * cfg.frame_shift_s, cfg.max_time_frames, cfg.nu)
            grid.append(FilterParams(f_n, f_k, +1, w_n, w_k))
            if f_n > 0 and f_k > 0:
                grid.append(FilterParams(f_n, f_k, -1, w_n, w_k))
    return grid


def hann_envelope(width: int) -> np.ndarray:
    """中心でピーク1となるHann窓（周期 width+1）"""
    m = np.arange(width) - (width - 1) / 2
    return 0.5 * (1.0 + np.cos(2.0 * np.pi * m / (width + 1)))


def peak_response(kernel: np.ndarray) -> float:
    """カーネルの2D周波数応答の最大振幅（オーバーサンプリングしたFFTグリッド上）"""
    w_k, w_n = kernel.shape
    response = np.fft.rfft2(kernel, s=(RESPONSE_OVERSAMPLING * w_k, RESPONSE_OVERSAMPLING * w_n))
    return float(np.abs(response).max())


def build_gabor_filter(params: FilterParams, cfg: GfbConfig = GfbConfig(), filter_id: int = 0) -> GaborFilter:
    """
    複素正弦波キャリアの実部 × Hann包絡 でGaborカーネルを生成

    DC成分を包絡の定数倍で打ち消し、周波数応答のピークが1になるよう正規化する

    Args:
        params: 変調周波数・向き・サイズ
        cfg: フィルタバンク設定
        filter_id: フィルタ番号

    Returns:
        GaborFilter: W_k × W_n のカーネル
    """
    if params.f_n_hz < 0 or params.f_k_cpc < 0:
        raise ValueError(f"変調周波数は0以上である必要があります: ({params.f_n_hz}, {params.f_k_cpc})")
    if cfg.nu <= 0:
        raise ValueError(f"ν は正である必要があります: {cfg.nu}")
    if params.orientation not in (1, -1):
        raise ValueError(f"向きは +1 か -1 です: {params.orientation}")
    if params.w_n % 2 == 0 or params.w_k % 2 == 0:
        raise ValueError(f"サイズは奇数である必要があります: W_n={params.w_n}, W_k={params.w_k}")

    omega_n = 2.0 * np.pi * params.f_n_hz * cfg.frame_shift_s
    omega_k = 2.0 * np.pi * params.f_k_cpc * params.orientation
    n = np.arange(params.w_n) - params.n0
    k = np.arange(params.w_k) - params.k0

    envelope = np.outer(hann_envelope(params.w_k), hann_envelope(params.w_n))
    kernel = envelope * np.cos(omega_n * n[None, :] + omega_k * k[:, None])
    if not params.is_dc:
        kernel = kernel - envelope * (kernel.sum() / envelope.sum())
    kernel = kernel / peak_response(kernel)
    return GaborFilter(filter_id=filter_id, params=params, kernel=kernel)


def subgroup_indices(grid: Sequence[FilterParams], subgroup: SubgroupEnum) -> List[int]:
    """
    サブグループに属するグリッド上の位置（フィルタ番号として使う）

    Returns:
        List[int]: grid のインデックス（昇順）
    """
    subgroup = SubgroupEnum(subgroup)
    if subgroup == SubgroupEnum.FULL:
        return list(range(len(grid)))
    if subgroup == SubgroupEnum.DC:
        return [i for i, p in enumerate(grid) if p.f_n_hz == 0]

    targets = SUBGROUP_TEMPORAL_MODS_HZ[subgroup]
    temporal = sorted({p.f_n_hz for p in grid})
    for target in targets:
        if not any(math.isclose(f, target, rel_tol=SUBGROUP_REL_TOL) for f in temporal):
            raise ValueError(
                f"サブグループ {subgroup.value} の時間変調 {target} Hz がグリッドにありません: {temporal}"
            )
    return [
        i for i, p in enumerate(grid)
        if any(math.isclose(p.f_n_hz, target, rel_tol=SUBGROUP_REL_TOL) for target in targets)
    ]


def select_subgroup(grid: Sequence[FilterParams], subgroup: SubgroupEnum) -> List[FilterParams]:
    """サブグループに属するフィルタのパラメータ（グリッド順）"""
    return [grid[i] for i in subgroup_indices(grid, subgroup)]


def critical_channels(params: FilterParams, cfg: GfbConfig = GfbConfig(), center_channel: Optional[int] = None) -> List[int]:
    """
    臨界サンプリングで残すチャネル

    1 kHz のチャネルを中心に、包絡の実効幅の1/4ずつずらしたチャネルを選ぶ。
    純粋に時間方向のフィルタ (f_k = 0) は中心チャネルのみ。

    Args:
        params: フィルタのパラメータ
        cfg: フィルタバンク設定
        center_channel: 中心チャネル（None なら既定Melフロントエンドの 1 kHz チャネル）

    Returns:
        List[int]: 昇順のチャネル番号
    """
    if center_channel is None:
        center_channel = center_channel_1khz(MelConfig(n_channels=cfg.n_mel_channels))
    if not 0 <= center_channel < cfg.n_mel_channels:
        raise ValueError(f"中心チャネル {center_channel} が範囲外です (0..{cfg.n_mel_channels - 1})")
    if params.f_k_cpc == 0:
        return [center_channel]
    step = max(1, int(math.floor((params.w_k + 1) * cfg.effective_extent / 4 + 1e-9)))
    return list(range(center_channel % step, cfg.n_mel_channels, step))


@lru_cache(maxsize=32)
def build_filterbank(
    cfg: GfbConfig = GfbConfig(),
    subgroup: SubgroupEnum = SubgroupEnum.FULL,
    center_channel: Optional[int] = None,
) -> FilterbankSpec:
    """
    サブグループのフィルタと選択チャネルをまとめて構築（設定ごとにキャッシュ）

    Returns:
        FilterbankSpec: 構築済みフィルタバンク
    """
    subgroup = SubgroupEnum(subgroup)
    if center_channel is None:
        center_channel = center_channel_1khz(MelConfig(n_channels=cfg.n_mel_channels))
    grid = modulation_grid(cfg)
    indices = subgroup_indices(grid, subgroup)
    filters = tuple(build_gabor_filter(grid[i], cfg, filter_id=i) for i in indices)
    sampling = tuple(tuple(critical_channels(f.params, cfg, center_channel)) for f in filters)
    fb = FilterbankSpec(cfg, subgroup, center_channel, filters, sampling)
    logger.info("フィルタバンク構築: %s (%d フィルタ, %d 次元)", subgroup.value, len(filters), fb.dim)
    return fb


def frequency_response_1d(kernel: np.ndarray, n_points: int = 8192) -> Tuple[np.ndarray, np.ndarray]:
    """
    時間方向の振幅応答（周波数方向に総和したプロファイルのDTFT）

    Returns:
        Tuple: (周波数 [cycles/frame], 振幅)
    """
    profile = kernel.sum(axis=0)
    return np.fft.rfftfreq(n_points), np.abs(np.fft.rfft(profile, n=n_points))
