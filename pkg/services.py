"""
サービスレイヤー
WAV → log-Mel → Gabor特徴量 のパイプラインとファイル単位のバッチ処理
"""

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from audio_io import AudioSignal, FeatureMatrix, read_wav, write_csv_matrix, write_htk
from features import combine_features, extract_features
from gbfb import FilterbankSpec, build_filterbank
from mel_frontend import LogMelSpectrogram, log_mel_spectrogram, mfsc_features
from models import (
    CombinationSpec,
    FeatureSetEnum,
    FeatureSetPart,
    OutputFormatEnum,
    PipelineConfig,
    SubgroupEnum,
)

logger = logging.getLogger(__name__)


class TaskEnum(str, Enum):
    """ファイル単位の処理内容"""
    MELSPEC = "melspec"
    GBFB = "gbfb"
    COMBINE = "combine"


@dataclass
class FileResult:
    """1ファイル分の処理結果"""
    input_path: str
    output_path: str
    frames: int = 0
    dim: int = 0
    processing_time: float = 0.0
    error: Optional[str] = None


class FeatureExtractionService:
    """Gaborフィルタバンク特徴量抽出サービス"""

    def __init__(self, config: Optional[PipelineConfig] = None):
        self.config = config or PipelineConfig()

    def filterbank(self, subgroup: SubgroupEnum) -> FilterbankSpec:
        return build_filterbank(self.config.gfb, SubgroupEnum(subgroup))

    def mel_spectrogram(self, signal: AudioSignal) -> LogMelSpectrogram:
        return log_mel_spectrogram(signal, self.config.mel)

    def feature_set(self, spec: LogMelSpectrogram, name: FeatureSetEnum) -> FeatureMatrix:
        """
        log-Melスペクトログラムから特徴量セットを1つ計算

        Args:
            spec: log-Melスペクトログラム
            name: mfsc またはサブグループ名

        Returns:
            FeatureMatrix: 特徴量
        """
        name = FeatureSetEnum(name)
        if name == FeatureSetEnum.MFSC:
            return mfsc_features(spec)
        return extract_features(spec, self.filterbank(SubgroupEnum(name.value)), self.config.method)

    def extract(self, signal: AudioSignal, subgroup: Optional[SubgroupEnum] = None) -> FeatureMatrix:
        """音声からサブグループの特徴量を抽出"""
        spec = self.mel_spectrogram(signal)
        return extract_features(spec, self.filterbank(subgroup or self.config.subgroup), self.config.method)

    def combine(self, signal: AudioSignal) -> FeatureMatrix:
        """結合設定に従って特徴量セットを連結"""
        if self.config.combination is None:
            raise ValueError("結合設定 (combination) が指定されていません")
        spec = self.mel_spectrogram(signal)
        inputs: Dict[FeatureSetEnum, FeatureMatrix] = {
            name: self.feature_set(spec, name) for name in self.config.combination.feature_sets
        }
        return combine_features(spec.frames, self.config.combination, inputs, frame_shift_s=spec.frame_shift_s)

    def combination_dim(self, combination: CombinationSpec) -> int:
        """結合後の次元数（音声を処理せずに計算）"""
        dim = 0
        for part in combination.parts:
            if not isinstance(part, FeatureSetPart):
                dim += part.dim
            elif part.feature_set == FeatureSetEnum.MFSC:
                dim += self.config.mel.n_channels
            else:
                dim += self.filterbank(SubgroupEnum(part.feature_set.value)).dim
        return dim

    def run_task(self, task: TaskEnum, signal: AudioSignal) -> FeatureMatrix:
        task = TaskEnum(task)
        if task == TaskEnum.MELSPEC:
            return mfsc_features(self.mel_spectrogram(signal))
        if task == TaskEnum.GBFB:
            return self.extract(signal)
        return self.combine(signal)

    def save(self, matrix: FeatureMatrix, output_path: str) -> None:
        """設定された形式で特徴量を保存（一時ファイル経由で置き換え）"""
        if self.config.output_format == OutputFormatEnum.HTK:
            write_htk(matrix, output_path)
        else:
            write_csv_matrix(matrix.values, output_path, col_names=matrix.dim_provenance)

    def process_file(self, task: TaskEnum, input_path: str, output_path: str) -> FileResult:
        """
        WAVファイル1個を処理して保存

        Args:
            task: 処理内容
            input_path: 入力WAV
            output_path: 出力ファイル

        Returns:
            FileResult: 処理結果（失敗時は error にメッセージ）
        """
        start_time = time.time()
        try:
            matrix = self.run_task(task, read_wav(input_path))
            self.save(matrix, output_path)
            logger.debug("%s → %s (%d フレーム × %d 次元)", input_path, output_path, matrix.frames, matrix.dim)
            return FileResult(
                input_path=input_path,
                output_path=output_path,
                frames=matrix.frames,
                dim=matrix.dim,
                processing_time=time.time() - start_time,
            )
        except (ValueError, OSError) as e:
            logger.debug("処理失敗: %s (%s)", input_path, e)
            return FileResult(
                input_path=input_path,
                output_path=output_path,
                processing_time=time.time() - start_time,
                error=str(e),
            )

    def process_batch(self, task: TaskEnum, jobs: Sequence[Tuple[str, str]]) -> List[FileResult]:
        """
        複数ファイルを処理（config.jobs > 1 ならプロセスプール、結果は入力順）

        Args:
            task: 処理内容
            jobs: (入力パス, 出力パス) のリスト

        Returns:
            List[FileResult]: 入力順の処理結果
        """
        workers = min(self.config.jobs, len(jobs))
        if workers <= 1:
            return [self.process_file(task, src, dst) for src, dst in jobs]
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(partial(_process_file_job, self.config, task), *zip(*jobs)))


def _process_file_job(config: PipelineConfig, task: TaskEnum, input_path: str, output_path: str) -> FileResult:
    return FeatureExtractionService(config).process_file(task, input_path, output_path)


def output_path_for(input_path: str, out_dir: str, output_format: OutputFormatEnum) -> str:
    """入力ファイル名から出力パスを作る (<out_dir>/<stem>.htk|.csv)"""
    return os.path.join(out_dir, f"{Path(input_path).stem}.{OutputFormatEnum(output_format).value}")
