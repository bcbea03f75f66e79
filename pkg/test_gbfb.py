"""
Gaborフィルタバンク（グリッド・フィルタ生成・サブグループ・臨界サンプリング）のテスト
"""

import numpy as np
import pytest
from pydantic import ValidationError

from gbfb import (
    FilterParams,
    build_filterbank,
    build_gabor_filter,
    critical_channels,
    frequency_response_1d,
    hann_envelope,
    modulation_axis,
    modulation_grid,
    peak_response,
    round_to_odd,
    select_subgroup,
    spectral_axis,
    subgroup_indices,
    support_size,
)
from models import GfbConfig, SubgroupEnum

CFG = GfbConfig()


@pytest.fixture(scope="module")
def full_bank():
    return build_filterbank(CFG, SubgroupEnum.FULL)


class TestModulationAxes:
    """変調周波数軸のテスト"""

    def test_spectral_axis(self):
        """一定オーバーラップ則によるスペクトル変調 (c = 0.343)"""
        axis = spectral_axis(CFG)
        assert len(axis) == 5
        assert axis[0] == 0.0
        assert axis[-1] == pytest.approx(0.25)
        assert axis[1:4] == pytest.approx((0.0293, 0.0599, 0.1223), abs=5e-5)

    def test_temporal_axis_regenerated(self):
        """時間方向の距離 0.2 で既定の時間変調が再現される"""
        axis_hz = [f / CFG.frame_shift_s for f in modulation_axis(0.25, 99, 3.5, 0.2)]
        assert axis_hz == pytest.approx(CFG.temporal_mods_hz, abs=0.07)

    def test_ratio_constant(self):
        """隣接する非零周波数の比は一定"""
        axis = np.array(modulation_axis(0.25, 69, 3.5, 0.3)[1:])
        ratios = axis[1:] / axis[:-1]
        assert np.allclose(ratios, ratios[0])

    def test_invalid_overlap(self):
        """オーバーラップ定数が (0, 1) 外ならエラー"""
        with pytest.raises(ValueError):
            modulation_axis(0.25, 69, 3.5, 1.0)

    @pytest.mark.parametrize("x,expected", [(14.0, 15), (145.8, 145), (28.6, 29), (1.0, 1), (0.2, 1), (3.0, 3)])
    def test_round_to_odd(self, x, expected):
        """2·floor(x/2)+1"""
        assert round_to_odd(x) == expected


class TestModulationGrid:
    """変調周波数グリッドのテスト"""

    def test_default_59(self):
        """既定設定は 35 + 6·4 = 59 エントリ"""
        assert len(modulation_grid(CFG)) == 59

    def test_single_dc(self):
        """時間 {0}・スペクトル {0} は1エントリ"""
        cfg = GfbConfig(temporal_mods_hz=(0.0,), spectral_mods_cpc=(0.0,))
        grid = modulation_grid(cfg)
        assert len(grid) == 1
        assert grid[0].is_dc

    @pytest.mark.parametrize("temporal,spectral", [
        ((0.0, 5.0), (0.0, 0.1)),
        ((0.0, 3.0, 9.0, 20.0), (0.0, 0.2)),
        ((0.0, 4.0), (0.0, 0.05, 0.1, 0.2, 0.4)),
    ])
    def test_grid_size_formula(self, temporal, spectral):
        """|grid| = T·S + (T−1)(S−1)"""
        cfg = GfbConfig(temporal_mods_hz=temporal, spectral_mods_cpc=spectral)
        t, s = len(temporal), len(spectral)
        assert len(modulation_grid(cfg)) == t * s + (t - 1) * (s - 1)

    def test_ordering_and_orientation(self):
        """スペクトル優先・時間・向きの順、分離可能なフィルタは向き +1 のみ"""
        grid = modulation_grid(CFG)
        keys = [(p.f_k_cpc, p.f_n_hz, -p.orientation) for p in grid]
        assert keys == sorted(keys)
        assert len(set(keys)) == len(keys)
        for p in grid:
            if p.f_n_hz == 0 or p.f_k_cpc == 0:
                assert p.orientation == 1

    def test_deterministic(self):
        """同じ設定から同じグリッド"""
        assert modulation_grid(CFG) == modulation_grid(GfbConfig())


class TestSupport:
    """フィルタサイズ（定Q則）のテスト"""

    def test_25hz_15_frames(self):
        """25 Hz は W_n = 15 フレーム"""
        assert support_size(25.0 * 0.01, 99, 3.5) == 15

    def test_2_4hz_capped(self):
        """2.4 Hz は上限の 99 フレーム"""
        assert support_size(2.4 * 0.01, 99, 3.5) == 99

    def test_zero_uses_cap(self):
        """変調0は上限サイズ"""
        assert support_size(0.0, 69, 3.5) == 69

    def test_constant_q(self):
        """上限に達しない軸では W·f = 3.5 ± 丸め、上限の軸は 99 / 69"""
        for p in modulation_grid(CFG):
            for f, w, cap in ((p.f_n_hz * CFG.frame_shift_s, p.w_n, 99), (p.f_k_cpc, p.w_k, 69)):
                assert w % 2 == 1
                if f == 0 or CFG.nu / f >= cap:
                    assert w == cap
                else:
                    assert abs(w * f - CFG.nu) <= f + 1e-12


class TestGaborFilter:
    """フィルタ生成のテスト"""

    def test_kernel_shapes(self, full_bank):
        """カーネルは W_k × W_n で上限 69×99 以内"""
        for f in full_bank.filters:
            assert f.kernel.shape == (f.params.w_k, f.params.w_n)
            assert f.kernel.shape[0] <= 69 and f.kernel.shape[1] <= 99

    def test_zero_mean(self, full_bank):
        """DC以外のカーネルの総和は0"""
        for f in full_bank.filters:
            if not f.params.is_dc:
                assert abs(f.kernel.sum()) <= 1e-9 * np.abs(f.kernel).sum()

    def test_unit_peak_response(self, full_bank):
        """周波数応答の最大振幅は1"""
        for f in full_bank.filters:
            assert peak_response(f.kernel) == pytest.approx(1.0, abs=1e-6)

    def test_dc_filter_is_envelope(self):
        """(0, 0) のカーネルは正規化したHann包絡（全て正）"""
        f = build_gabor_filter(FilterParams(0.0, 0.0, 1, 99, 69), CFG)
        envelope = np.outer(hann_envelope(69), hann_envelope(99))
        assert np.all(f.kernel > 0)
        assert np.allclose(f.kernel, envelope / envelope.sum())

    def test_envelope_peaks_at_center(self):
        """包絡は中心でピーク1、対称"""
        env = hann_envelope(15)
        assert env[7] == pytest.approx(1.0)
        assert np.allclose(env, env[::-1])
        assert np.all(env > 0)

    def test_orientation_flip(self):
        """向き -1 のカーネルは +1 のカーネルを周波数方向に反転したもの"""
        plus = build_gabor_filter(FilterParams(9.9, 0.1223, 1, 35, 29), CFG)
        minus = build_gabor_filter(FilterParams(9.9, 0.1223, -1, 35, 29), CFG)
        assert np.allclose(minus.kernel, plus.kernel[::-1, :], atol=1e-12)

    def test_negative_frequency(self):
        """負の変調周波数はエラー"""
        with pytest.raises(ValueError):
            build_gabor_filter(FilterParams(-1.0, 0.0, 1, 15, 15), CFG)

    def test_even_support(self):
        """偶数サイズはエラー"""
        with pytest.raises(ValueError):
            build_gabor_filter(FilterParams(25.0, 0.0, 1, 14, 15), CFG)

    def test_constant_overlap(self):
        """隣接する時間フィルタの伝達関数は等しい高さで交差する"""
        axis = modulation_axis(0.25, CFG.max_time_frames, CFG.nu, CFG.temporal_distance)[1:]
        uncapped = [f for f in axis if CFG.nu / f < CFG.max_time_frames]
        responses = []
        for f in uncapped:
            params = FilterParams(f / CFG.frame_shift_s, 0.0, 1, support_size(f, 99, CFG.nu), 69)
            responses.append(frequency_response_1d(build_gabor_filter(params, CFG).kernel))

        heights = []
        for (f_a, (freqs, h_a)), (f_b, (_, h_b)) in zip(
            zip(uncapped, responses), zip(uncapped[1:], responses[1:])
        ):
            band = (freqs >= f_a) & (freqs <= f_b)
            diff = h_a[band] - h_b[band]
            crossings = np.nonzero(np.diff(np.sign(diff)))[0]
            assert crossings.size >= 1
            i = crossings[0]
            heights.append(0.5 * (h_a[band][i] + h_b[band][i]))

        assert len(heights) >= 3
        mean = np.mean(heights)
        for height in heights:
            assert abs(height - mean) <= 0.05 * mean


class TestSubgroups:
    """サブグループ選択のテスト"""

    @pytest.mark.parametrize("subgroup,count", [
        (SubgroupEnum.FULL, 59),
        (SubgroupEnum.LTM, 18),
        (SubgroupEnum.MTM, 18),
        (SubgroupEnum.HTM, 18),
        (SubgroupEnum.DC, 5),
    ])
    def test_filter_counts(self, subgroup, count):
        """サブグループごとのフィルタ数"""
        assert len(select_subgroup(modulation_grid(CFG), subgroup)) == count

    def test_htm_frequencies(self):
        """HTM は 15.7 Hz と 25 Hz のフィルタのみ"""
        grid = modulation_grid(CFG)
        temporal = {p.f_n_hz for p in select_subgroup(grid, SubgroupEnum.HTM)}
        assert temporal == {15.7, 25.0}

    def test_dc_one_per_spectral(self):
        """DC はスペクトル変調ごとに1個"""
        grid = modulation_grid(CFG)
        spectral = [p.f_k_cpc for p in select_subgroup(grid, SubgroupEnum.DC)]
        assert spectral == list(spectral_axis(CFG))

    def test_indices_match_params(self):
        """インデックスはフィルタ番号、パラメータと同じ順序"""
        grid = modulation_grid(CFG)
        indices = subgroup_indices(grid, SubgroupEnum.MTM)
        assert [grid[i] for i in indices] == select_subgroup(grid, SubgroupEnum.MTM)
        assert all(isinstance(p, FilterParams) for p in select_subgroup(grid, SubgroupEnum.MTM))
        fb = build_filterbank(CFG, SubgroupEnum.MTM)
        assert [f.filter_id for f in fb.filters] == indices

    def test_missing_frequencies(self):
        """サブグループの周波数がグリッドになければエラー"""
        grid = modulation_grid(GfbConfig(temporal_mods_hz=(0.0, 4.0, 8.0)))
        with pytest.raises(ValueError, match="htm"):
            select_subgroup(grid, SubgroupEnum.HTM)

    def test_regenerated_axis_matches_subgroups(self):
        """生成した時間変調軸でもサブグループが選択できる"""
        axis_hz = tuple(f / 0.01 for f in modulation_axis(0.25, 99, 3.5, 0.2))
        grid = modulation_grid(GfbConfig(temporal_mods_hz=axis_hz))
        assert len(select_subgroup(grid, SubgroupEnum.LTM)) == 18


class TestCriticalSampling:
    """臨界サンプリングのテスト"""

    def test_pure_temporal_single_channel(self):
        """f_k = 0 は 1 kHz チャネルのみ"""
        assert critical_channels(FilterParams(25.0, 0.0, 1, 15, 69), CFG) == [10]

    def test_smallest_extent_all_channels(self):
        """f_k = 0.25 (W_k = 15) は全31チャネル"""
        assert critical_channels(FilterParams(25.0, 0.25, 1, 15, 15), CFG) == list(range(31))

    @pytest.mark.parametrize("w_k,count", [(69, 4), (59, 5), (29, 10), (15, 31)])
    def test_counts_per_extent(self, w_k, count):
        """スペクトルサイズごとの選択チャネル数"""
        channels = critical_channels(FilterParams(9.9, 0.1, 1, 35, w_k), CFG)
        assert len(channels) == count
        assert 10 in channels
        assert channels == sorted(set(channels))

    def test_dimensions(self, full_bank):
        """FULL 657、各サブグループ 202、DC 51 次元"""
        assert full_bank.dim == 657
        for subgroup in (SubgroupEnum.LTM, SubgroupEnum.MTM, SubgroupEnum.HTM):
            assert build_filterbank(CFG, subgroup).dim == 202
        assert build_filterbank(CFG, SubgroupEnum.DC).dim == 51

    def test_provenance(self, full_bank):
        """各次元の由来はフィルタ番号とチャネル番号"""
        provenance = full_bank.provenance()
        assert len(provenance) == 657
        assert provenance[0] == "gbfb:f00:ch10"
        assert len(set(provenance)) == 657

    def test_out_of_range_center(self):
        """範囲外の中心チャネルはエラー"""
        with pytest.raises(ValueError):
            critical_channels(FilterParams(0.0, 0.1, 1, 99, 29), CFG, center_channel=31)

    def test_cached(self):
        """同じ設定のフィルタバンクは再利用される"""
        assert build_filterbank(GfbConfig(), SubgroupEnum.HTM) is build_filterbank(GfbConfig(), SubgroupEnum.HTM)


class TestGfbConfig:
    """GfbConfig の検証"""

    def test_even_cap_rejected(self):
        """最大サイズは奇数"""
        with pytest.raises(ValidationError):
            GfbConfig(max_time_frames=100)

    def test_axis_must_start_at_zero(self):
        """変調周波数の集合は0を含む"""
        with pytest.raises(ValidationError):
            GfbConfig(temporal_mods_hz=(2.4, 25.0))

    def test_axis_strictly_increasing(self):
        """狭義単調増加"""
        with pytest.raises(ValidationError):
            GfbConfig(spectral_mods_cpc=(0.0, 0.2, 0.1))

    def test_above_nyquist(self):
        """時間変調はフレームレートのナイキスト以下"""
        with pytest.raises(ValidationError):
            GfbConfig(temporal_mods_hz=(0.0, 60.0))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
