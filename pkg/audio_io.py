"""
音声・ラベル・特徴量ファイルの入出力
WAV (PCM-16 mono)、フレーム単位ラベル、HTKパラメータファイル、CSV行列を扱う
"""

import logging
import os
import struct
import tempfile
import wave
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

# HTKヘッダ: nSamples(int32), sampPeriod(int32), sampSize(int16), parmKind(int16)
HTK_HEADER = struct.Struct(">iihh")
HTK_USER = 9
HTK_QUALIFIER_COMPRESSED = 0o2000
HTK_QUALIFIER_CRC = 0o10000
HTK_MAX_DIM = 32767 // 4

PCM16_SCALE = 32768.0


class WavFormatError(ValueError):
    """WAVファイルの形式エラー"""


class LabelFormatError(ValueError):
    """ラベルファイルの形式エラー"""


class HtkFormatError(ValueError):
    """HTKファイルの形式エラー"""


@dataclass(frozen=True)
class AudioSignal:
    """モノラル音声信号（振幅は [-1, 1] に正規化）"""
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError(f"サンプリング周波数が不正です: {self.sample_rate_hz}")
        if self.samples.ndim != 1:
            raise ValueError("音声信号は1次元配列である必要があります")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("音声信号に非有限値が含まれています")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class LabelSegment:
    start_frame: int
    end_frame: int  # exclusive
    phoneme: str


@dataclass(frozen=True)
class LabelTrack:
    """フレーム単位の音素ラベル列（開始フレーム順、重複なし）"""
    segments: Tuple[LabelSegment, ...]

    @property
    def end_frame(self) -> int:
        return self.segments[-1].end_frame if self.segments else 0


@dataclass(frozen=True)
class FeatureMatrix:
    """frames × D の特徴量行列と各次元の由来"""
    values: np.ndarray
    frame_shift_s: float
    dim_provenance: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("特徴量行列は2次元である必要があります")
        if not self.dim_provenance:
            object.__setattr__(self, "dim_provenance", default_provenance(self.values.shape[1]))
        if len(self.dim_provenance) != self.values.shape[1]:
            raise ValueError(
                f"dim_provenance の長さ ({len(self.dim_provenance)}) が次元数 ({self.values.shape[1]}) と一致しません"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("特徴量行列に非有限値が含まれています")

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def default_provenance(dim: int) -> Tuple[str, ...]:
    return tuple(f"dim{i:03d}" for i in range(dim))


@contextmanager
def atomic_output(path: PathLike) -> Iterator[Path]:
    """
    出力先と同じディレクトリの一時ファイルに書き込み、成功時のみリネームする

    Args:
        path: 最終的な出力パス

    Yields:
        Path: 書き込み先の一時ファイルパス
    """
    target = Path(path)
    directory = target.parent if str(target.parent) else Path(".")
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=directory)
    os.close(fd)
    tmp_path = Path(tmp_name)
    try:
        yield tmp_path
        os.replace(tmp_path, target)
    except BaseException:
        tmp_path.unlink(missing_ok=True)
        raise


def read_wav(path: PathLike) -> AudioSignal:
    """
    PCM 16-bit モノラルWAVを読み込む

    Args:
        path: WAVファイルのパス

    Returns:
        AudioSignal: 1/32768 でスケーリングされた信号
    """
    try:
        with wave.open(str(path), "rb") as wav_file:
            n_channels = wav_file.getnchannels()
            sample_width = wav_file.getsampwidth()
            sample_rate = wav_file.getframerate()
            comptype = wav_file.getcomptype()
            n_frames = wav_file.getnframes()
            if comptype != "NONE":
                raise WavFormatError(f"圧縮WAVには対応していません: {comptype} ({path})")
            if n_channels != 1:
                raise WavFormatError(f"モノラルのみ対応しています: {n_channels}ch ({path})")
            if sample_width != 2:
                raise WavFormatError(f"16-bit PCMのみ対応しています: {8 * sample_width}-bit ({path})")
            data = wav_file.readframes(n_frames)
    except (wave.Error, EOFError, struct.error) as e:
        raise WavFormatError(f"WAVヘッダが不正です: {path} ({e})") from e

    if len(data) != 2 * n_frames:
        raise WavFormatError(
            f"dataチャンクが途中で切れています: {path} (期待 {2 * n_frames} バイト, 実際 {len(data)} バイト)"
        )
    samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / PCM16_SCALE
    logger.debug("WAV読み込み: %s (%d サンプル, %d Hz)", path, len(samples), sample_rate)
    return AudioSignal(samples=samples, sample_rate_hz=sample_rate)


def write_wav(signal: AudioSignal, path: PathLike) -> None:
    """
    AudioSignal を PCM 16-bit モノラルWAVとして保存

    Args:
        signal: 保存する信号
        path: 出力パス
    """
    pcm = np.clip(np.round(signal.samples * PCM16_SCALE), -32768, 32767).astype("<i2")
    with atomic_output(path) as tmp_path:
        with wave.open(str(tmp_path), "wb") as wav_file:
            wav_file.setnchannels(1)
            wav_file.setsampwidth(2)
            wav_file.setframerate(signal.sample_rate_hz)
            wav_file.writeframes(pcm.tobytes())


def parse_labels(text: str, source: str = "<labels>") -> LabelTrack:
    """
    ラベルテキスト `<start_frame> <end_frame_exclusive> <ARPABET>` を解析

    Args:
        text: ラベルファイルの内容
        source: エラーメッセージ用の名前

    Returns:
        LabelTrack: 開始フレーム順に並べ、重複を検査したラベル列
    """
    entries: List[Tuple[int, LabelSegment]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise LabelFormatError(f"{source}:{line_no}: 3列 (start end phoneme) が必要です: {raw!r}")
        try:
            start, end = int(fields[0]), int(fields[1])
        except ValueError as e:
            raise LabelFormatError(f"{source}:{line_no}: フレーム番号が数値ではありません: {raw!r}") from e
        if start < 0:
            raise LabelFormatError(f"{source}:{line_no}: 開始フレームが負です: {start}")
        if end <= start:
            raise LabelFormatError(f"{source}:{line_no}: 空のセグメントです (end {end} <= start {start})")
        entries.append((line_no, LabelSegment(start, end, fields[2].upper())))

    entries.sort(key=lambda item: item[1].start_frame)
    for (_, prev), (line_no, cur) in zip(entries, entries[1:]):
        if cur.start_frame < prev.end_frame:
            raise LabelFormatError(
                f"{source}:{line_no}: セグメントが重複しています "
                f"([{prev.start_frame}, {prev.end_frame}) {prev.phoneme} と [{cur.start_frame}, {cur.end_frame}) {cur.phoneme})"
            )
    return LabelTrack(segments=tuple(segment for _, segment in entries))


def read_labels(path: PathLike) -> LabelTrack:
    """ラベルファイルを読み込む"""
    return parse_labels(Path(path).read_text(encoding="utf-8"), source=str(path))


def read_phone_list(path: PathLike) -> List[str]:
    """
    音素リスト（1行1シンボル）を読み込む

    Args:
        path: 音素リストのパス

    Returns:
        List[str]: 大文字化された ARPABET シンボル（ファイル順）
    """
    phones: List[str] = []
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        symbol = raw.split("#", 1)[0].strip().upper()
        if not symbol:
            continue
        if symbol in phones:
            raise LabelFormatError(f"{path}:{line_no}: 音素が重複しています: {symbol}")
        phones.append(symbol)
    if not phones:
        raise LabelFormatError(f"音素リストが空です: {path}")
    return phones


def write_htk(matrix: FeatureMatrix, path: PathLike) -> None:
    """
    HTKパラメータファイル（ビッグエンディアン, parmKind=USER）として保存

    Args:
        matrix: 特徴量行列
        path: 出力パス
    """
    if matrix.dim > HTK_MAX_DIM:
        raise HtkFormatError(f"次元数 {matrix.dim} はHTKの上限 {HTK_MAX_DIM} を超えています")
    samp_period = int(round(matrix.frame_shift_s * 1e7))
    header = HTK_HEADER.pack(matrix.frames, samp_period, 4 * matrix.dim, HTK_USER)
    payload = np.ascontiguousarray(matrix.values, dtype=">f4").tobytes()
    with atomic_output(path) as tmp_path:
        with open(tmp_path, "wb") as f:
            f.write(header)
            f.write(payload)


def read_htk(path: PathLike) -> FeatureMatrix:
    """
    HTKパラメータファイルを読み込む

    Args:
        path: HTKファイルのパス

    Returns:
        FeatureMatrix: float32 精度の値を float64 で保持した行列
    """
    raw = Path(path).read_bytes()
    if len(raw) < HTK_HEADER.size:
        raise HtkFormatError(f"HTKヘッダが短すぎます: {path}")
    n_samples, samp_period, samp_size, parm_kind = HTK_HEADER.unpack_from(raw)
    if parm_kind & (HTK_QUALIFIER_COMPRESSED | HTK_QUALIFIER_CRC):
        raise HtkFormatError(f"圧縮/CRC付きHTKファイルには対応していません: {path}")
    if n_samples < 0 or samp_size <= 0 or samp_size % 4 != 0 or samp_period <= 0:
        raise HtkFormatError(
            f"HTKヘッダが不正です: {path} (nSamples={n_samples}, sampPeriod={samp_period}, sampSize={samp_size})"
        )
    dim = samp_size // 4
    expected = HTK_HEADER.size + n_samples * samp_size
    if len(raw) != expected:
        raise HtkFormatError(f"HTKデータ長が不正です: {path} (期待 {expected} バイト, 実際 {len(raw)} バイト)")
    if n_samples == 0:
        values = np.zeros((0, dim), dtype=">f4")
    else:
        values = np.frombuffer(raw, dtype=">f4", offset=HTK_HEADER.size).reshape(n_samples, dim)
    return FeatureMatrix(values=values.astype(np.float64), frame_shift_s=samp_period / 1e7)


def write_csv_matrix(
    matrix: np.ndarray,
    path: PathLike,
    row_names: Optional[Sequence[str]] = None,
    col_names: Optional[Sequence[str]] = None,
) -> None:
    """
    行列をUTF-8 CSVとして保存（有効数字17桁、決定的）

    Args:
        matrix: 2次元行列
        path: 出力パス
        row_names: 行名（指定時は先頭列に出力）
        col_names: 列名（指定時はヘッダ行に出力）
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError("CSV出力は2次元行列のみ対応しています")
    if row_names is not None and len(row_names) != matrix.shape[0]:
        raise ValueError(f"行名の数 ({len(row_names)}) が行数 ({matrix.shape[0]}) と一致しません")
    if col_names is not None and len(col_names) != matrix.shape[1]:
        raise ValueError(f"列名の数 ({len(col_names)}) が列数 ({matrix.shape[1]}) と一致しません")

    df = pd.DataFrame(
        matrix,
        index=list(row_names) if row_names is not None else None,
        columns=list(col_names) if col_names is not None else None,
    )
    with atomic_output(path) as tmp_path:
        df.to_csv(
            tmp_path,
            float_format="%.17g",
            header=col_names is not None,
            index=row_names is not None,
            encoding="utf-8",
            lineterminator="\n",
        )


def read_csv_matrix(
    path: PathLike,
    row_names: bool = True,
    col_names: bool = True,
) -> Tuple[np.ndarray, Optional[List[str]], Optional[List[str]]]:
    """
    write_csv_matrix で保存した行列を読み込む

    Returns:
        Tuple: (行列, 行名, 列名)
    """
    try:
        df = pd.read_csv(
            path,
            index_col=0 if row_names else None,
            header=0 if col_names else None,
            float_precision="round_trip",
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError:
        return np.zeros((0, 0)), ([] if row_names else None), ([] if col_names else None)
    values = df.to_numpy(dtype=np.float64)
    rows = [str(name) for name in df.index] if row_names else None
    cols = [str(name) for name in df.columns] if col_names else None
    return values, rows, cols


def read_feature_matrix(path: PathLike, frame_shift_s: float = 0.01) -> FeatureMatrix:
    """
    拡張子に応じて HTK / CSV の特徴量（または外部のDNN出力）を読み込む

    Args:
        path: `.htk` または `.csv`（各行1フレーム、ヘッダ行あり、インデックス列なし）
        frame_shift_s: CSVの場合に用いるフレームシフト

    Returns:
        FeatureMatrix: 読み込んだ行列
    """
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        values, _, cols = read_csv_matrix(path, row_names=False, col_names=True)
        return FeatureMatrix(values=values, frame_shift_s=frame_shift_s, dim_provenance=tuple(cols or ()))
    if suffix == ".htk":
        return read_htk(path)
    raise ValueError(f"未対応の特徴量ファイル形式です: {path} (.htk または .csv)")
