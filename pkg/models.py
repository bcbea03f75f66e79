"""
Pydanticモデル定義
特徴量抽出パイプラインの設定スキーマとAPIレスポンススキーマ
"""

import math
from enum import Enum
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class SubgroupEnum(str, Enum):
    """Gaborフィルタバンクのサブグループ"""
    FULL = "full"
    LTM = "ltm"
    MTM = "mtm"
    HTM = "htm"
    DC = "dc"


class FeatureSetEnum(str, Enum):
    """結合設定で参照できる特徴量セット（サブグループ + MFSCベースライン）"""
    FULL = "full"
    LTM = "ltm"
    MTM = "mtm"
    HTM = "htm"
    DC = "dc"
    MFSC = "mfsc"


class OutputFormatEnum(str, Enum):
    """出力ファイル形式"""
    HTK = "htk"
    CSV = "csv"


class ConvolutionMethodEnum(str, Enum):
    """2D畳み込みの実装"""
    DIRECT = "direct"
    FFT = "fft"


# サブグループごとの時間変調周波数 (Hz)
SUBGROUP_TEMPORAL_MODS_HZ = {
    SubgroupEnum.LTM: (2.4, 3.9),
    SubgroupEnum.MTM: (6.2, 9.9),
    SubgroupEnum.HTM: (15.7, 25.0),
}


class MelConfig(BaseModel):
    """ETSI DSRフロントエンド準拠のlog-Melスペクトログラム設定"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    sample_rate_hz: int = Field(default=16000, gt=0, description="サンプリング周波数 (Hz)")
    n_channels: int = Field(default=31, ge=1, description="Melチャネル数")
    frame_length_s: float = Field(default=0.025, gt=0, description="フレーム長（秒）")
    frame_shift_s: float = Field(default=0.010, gt=0, description="フレームシフト（秒）")
    preemphasis: float = Field(default=0.97, ge=0, lt=1, description="プリエンファシス係数")
    fft_size: int = Field(default=512, gt=0, description="FFT点数")
    f_low_hz: float = Field(default=64.0, ge=0, description="最低周波数 (Hz)")
    f_high_hz: float = Field(default=8000.0, gt=0, description="最高周波数 (Hz)")
    energy_floor: float = Field(default=1e-10, gt=0, description="対数前のエネルギー下限")
    offset_compensation: bool = Field(default=True, description="ETSIのDCオフセット除去を行うか")
    spectrum_power: float = Field(default=2.0, gt=0, description="スペクトルの指数（2.0=パワー, 1.0=振幅）")

    @property
    def frame_length(self) -> int:
        """フレーム長（サンプル数）"""
        return int(round(self.frame_length_s * self.sample_rate_hz))

    @property
    def frame_step(self) -> int:
        """フレームシフト（サンプル数）"""
        return int(round(self.frame_shift_s * self.sample_rate_hz))

    @model_validator(mode="after")
    def _check_ranges(self) -> "MelConfig":
        if not self.f_low_hz < self.f_high_hz:
            raise ValueError(f"f_low_hz ({self.f_low_hz}) は f_high_hz ({self.f_high_hz}) より小さい必要があります")
        if self.f_high_hz > self.sample_rate_hz / 2:
            raise ValueError(f"f_high_hz ({self.f_high_hz}) がナイキスト周波数 ({self.sample_rate_hz / 2}) を超えています")
        if self.frame_step < 1:
            raise ValueError("frame_shift_s が短すぎます（1サンプル未満）")
        if self.fft_size < self.frame_length:
            raise ValueError(f"fft_size ({self.fft_size}) はフレーム長 ({self.frame_length} サンプル) 以上が必要です")
        return self


class GfbConfig(BaseModel):
    """Gaborフィルタバンク設定"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    temporal_mods_hz: Tuple[float, ...] = Field(
        default=(0.0, 2.4, 3.9, 6.2, 9.9, 15.7, 25.0),
        description="時間変調周波数 (Hz)、0を含み昇順",
    )
    spectral_mods_cpc: Optional[Tuple[float, ...]] = Field(
        default=None,
        description="スペクトル変調周波数 (cycles/channel)。Noneなら一定オーバーラップ則で生成",
    )
    nu: float = Field(default=3.5, gt=0, description="包絡内の振動数 ν")
    max_time_frames: int = Field(default=99, ge=1, description="時間方向の最大サイズ（フレーム）")
    max_freq_channels: int = Field(default=69, ge=1, description="周波数方向の最大サイズ（チャネル）")
    frame_shift_s: float = Field(default=0.010, gt=0, description="フレームシフト（秒）")
    n_mel_channels: int = Field(default=31, ge=1, description="入力Melチャネル数")
    max_spectral_mod_cpc: float = Field(default=0.25, gt=0, le=0.5, description="最大スペクトル変調 (cycles/channel)")
    temporal_distance: float = Field(default=0.2, gt=0, description="隣接時間フィルタ間の距離（帯域幅比）")
    spectral_distance: float = Field(default=0.3, gt=0, description="隣接スペクトルフィルタ間の距離（帯域幅比）")
    effective_extent: float = Field(default=0.4, gt=0, le=1, description="臨界サンプリングで用いる包絡の実効幅（W+1に対する比）")

    @field_validator("temporal_mods_hz", "spectral_mods_cpc")
    @classmethod
    def _check_axis(cls, value: Optional[Tuple[float, ...]]) -> Optional[Tuple[float, ...]]:
        if value is None:
            return value
        if len(value) == 0 or value[0] != 0:
            raise ValueError("変調周波数の集合は0から始まる必要があります")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("変調周波数は狭義単調増加である必要があります")
        if any(not math.isfinite(v) for v in value):
            raise ValueError("変調周波数に非有限値が含まれています")
        return tuple(float(v) for v in value)

    @model_validator(mode="after")
    def _check_sizes(self) -> "GfbConfig":
        # 中心サンプルを定義するため最大サイズは奇数
        if self.max_time_frames % 2 == 0 or self.max_freq_channels % 2 == 0:
            raise ValueError("max_time_frames と max_freq_channels は奇数である必要があります")
        nyquist_hz = 0.5 / self.frame_shift_s
        if self.temporal_mods_hz[-1] > nyquist_hz:
            raise ValueError(f"時間変調周波数がナイキスト ({nyquist_hz} Hz) を超えています")
        if self.spectral_mods_cpc is not None and self.spectral_mods_cpc[-1] > 0.5:
            raise ValueError("スペクトル変調周波数は 0.5 cycles/channel 以下である必要があります")
        return self


class PaddingPolicy(BaseModel):
    """畳み込み時のパディング方針"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    spectral: Literal["zero", "replicate"] = Field(default="zero", description="周波数方向のはみ出し")
    temporal: Literal["replicate", "zero"] = Field(default="replicate", description="時間方向のはみ出し")


class FeatureSetPart(BaseModel):
    """結合パーツ: 特徴量セット参照"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["set"] = "set"
    feature_set: FeatureSetEnum


class ZerosPart(BaseModel):
    """結合パーツ: ゼロ行列"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["zeros"] = "zeros"
    dim: int = Field(gt=0)


class UniformRandomPart(BaseModel):
    """結合パーツ: [-1, 1] 一様乱数"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["random"] = "random"
    dim: int = Field(gt=0)
    seed: int = Field(default=0, ge=0)


CombinationPart = Union[FeatureSetPart, ZerosPart, UniformRandomPart]


class CombinationSpec(BaseModel):
    """特徴量の結合設定（左から順に水平連結）"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    parts: Tuple[CombinationPart, ...] = Field(min_length=1)

    @property
    def feature_sets(self) -> List[FeatureSetEnum]:
        """参照される特徴量セット（重複なし、出現順）"""
        seen: List[FeatureSetEnum] = []
        for part in self.parts:
            if isinstance(part, FeatureSetPart) and part.feature_set not in seen:
                seen.append(part.feature_set)
        return seen


class PipelineConfig(BaseModel):
    """CLIパイプライン全体の設定（処理開始前に検証される）"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    mel: MelConfig = Field(default_factory=MelConfig)
    gfb: GfbConfig = Field(default_factory=GfbConfig)
    subgroup: SubgroupEnum = Field(default=SubgroupEnum.FULL)
    combination: Optional[CombinationSpec] = Field(default=None)
    output_format: OutputFormatEnum = Field(default=OutputFormatEnum.HTK)
    method: ConvolutionMethodEnum = Field(default=ConvolutionMethodEnum.DIRECT)
    seed: int = Field(default=0, ge=0)
    jobs: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_consistency(self) -> "PipelineConfig":
        if self.mel.n_channels != self.gfb.n_mel_channels:
            raise ValueError(
                f"Melチャネル数 ({self.mel.n_channels}) とフィルタバンク入力チャネル数 ({self.gfb.n_mel_channels}) が一致しません"
            )
        if not math.isclose(self.mel.frame_shift_s, self.gfb.frame_shift_s):
            raise ValueError("MelConfig と GfbConfig のフレームシフトが一致しません")
        return self


class HealthResponse(BaseModel):
    """ヘルスチェックレスポンス"""
    status: str = Field(description="サービスステータス")
    service: str = Field(description="サービス名")
    version: str = Field(description="バージョン")
    filter_count: Optional[int] = Field(None, description="既定フィルタバンクのフィルタ数")


class ErrorResponse(BaseModel):
    """エラーレスポンス"""
    error: str = Field(description="エラーメッセージ")
    detail: Optional[str] = Field(None, description="詳細なエラー情報")
    error_code: Optional[str] = Field(None, description="エラーコード")


class FilterInfo(BaseModel):
    """フィルタ1個分のパラメータ"""
    filter_id: int = Field(description="フィルタ番号（フィルタバンク内の順序）")
    f_n_hz: float = Field(description="時間変調周波数 (Hz)")
    f_k_cpc: float = Field(description="スペクトル変調周波数 (cycles/channel)")
    orientation: int = Field(description="向き (+1 / -1)")
    w_n: int = Field(description="時間方向サイズ（フレーム）")
    w_k: int = Field(description="周波数方向サイズ（チャネル）")
    channels: List[int] = Field(description="臨界サンプリングで選択されたチャネル")


class FilterbankInfoResponse(BaseModel):
    """フィルタバンク情報レスポンス"""
    subgroup: SubgroupEnum = Field(description="サブグループ")
    filter_count: int = Field(description="フィルタ数")
    dim: int = Field(description="特徴量次元数")
    filters: List[FilterInfo] = Field(description="フィルタ一覧")


class FeaturesResponse(BaseModel):
    """特徴量抽出レスポンス"""
    filename: str = Field(description="処理されたファイル名")
    subgroup: SubgroupEnum = Field(description="使用したサブグループ")
    frames: int = Field(description="フレーム数")
    dim: int = Field(description="特徴量次元数")
    frame_shift_s: float = Field(description="フレームシフト（秒）")
    values: Optional[List[List[float]]] = Field(None, description="特徴量行列（include_values=true の時のみ）")
    processing_time: Optional[float] = Field(None, description="処理時間（秒）")
