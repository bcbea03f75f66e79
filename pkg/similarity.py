"""
音素クラスの識別性分析
フレームラベル付きの特徴量/活性化行列から音素重心を求め、コサイン類似度行列を作る
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.spatial.distance import cosine as cosine_distance

from audio_io import FeatureMatrix, LabelTrack

logger = logging.getLogger(__name__)

# 標準偏差がこれ未満の次元は平均除去のみ
MIN_STD = 1e-12


@dataclass(frozen=True, eq=False)
class CentroidSet:
    """音素ごとの重心ベクトル"""
    phonemes: Tuple[str, ...]
    centroids: np.ndarray
    counts: Tuple[int, ...]
    dropped: Tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """P × P のコサイン類似度行列"""
    phonemes: Tuple[str, ...]
    values: np.ndarray
    threshold_deg: Optional[float] = None
    ordering: Tuple[int, ...] = ()

    def __post_init__(self):
        if not self.ordering:
            object.__setattr__(self, "ordering", tuple(range(len(self.phonemes))))


def normalize_features(matrix: FeatureMatrix) -> FeatureMatrix:
    """
    次元ごとに全フレームの平均と分散で正規化

    Args:
        matrix: 2フレーム以上の特徴量行列

    Returns:
        FeatureMatrix: 平均0・標準偏差1（定数次元は0）の行列
    """
    if matrix.frames < 2:
        raise ValueError(f"正規化には2フレーム以上必要です: {matrix.frames} フレーム")
    centered = matrix.values - matrix.values.mean(axis=0)
    std = centered.std(axis=0)
    scale = np.where(std < MIN_STD, 1.0, std)
    return replace(matrix, values=centered / scale)


def class_centroids(matrix: FeatureMatrix, labels: LabelTrack, phoneme_list: Sequence[str]) -> CentroidSet:
    """
    リスト中の音素ごとに、ラベル付けされたフレームの平均ベクトルを求める

    Args:
        matrix: 特徴量または活性化の行列
        labels: フレーム単位のラベル
        phoneme_list: 対象音素（この順で出力、フレームがない音素は除外）

    Returns:
        CentroidSet: 重心・フレーム数・除外された音素
    """
    if labels.end_frame > matrix.frames:
        raise ValueError(f"ラベルのフレーム番号 {labels.end_frame} が行列のフレーム数 {matrix.frames} を超えています")

    # 大文字化した後の重複は1つにまとめる（最初の出現順）
    wanted = list(dict.fromkeys(p.upper() for p in phoneme_list))
    sums = {p: np.zeros(matrix.dim) for p in wanted}
    counts = {p: 0 for p in wanted}
    # セグメント順に加算（並列化しても加算順は固定）
    for segment in labels.segments:
        if segment.phoneme in sums:
            sums[segment.phoneme] += matrix.values[segment.start_frame:segment.end_frame].sum(axis=0)
            counts[segment.phoneme] += segment.end_frame - segment.start_frame

    kept = [p for p in wanted if counts[p] > 0]
    dropped = tuple(p for p in wanted if counts[p] == 0)
    if dropped:
        logger.warning("⚠️ フレームがない音素を除外しました: %s", ", ".join(dropped))
    centroids = np.array([sums[p] / counts[p] for p in kept]).reshape(len(kept), matrix.dim)
    return CentroidSet(
        phonemes=tuple(kept),
        centroids=centroids,
        counts=tuple(counts[p] for p in kept),
        dropped=dropped,
    )


def cosine_similarity(v1: np.ndarray, v2: np.ndarray) -> float:
    """S(v1, v2) = v1·v2 / (|v1| |v2|)"""
    v1, v2 = np.asarray(v1, dtype=np.float64), np.asarray(v2, dtype=np.float64)
    if not np.any(v1) or not np.any(v2):
        raise ValueError("ノルムが0のベクトルにはコサイン類似度が定義されません")
    return float(np.clip(1.0 - cosine_distance(v1, v2), -1.0, 1.0))


def similarity_matrix(cs: CentroidSet) -> SimilarityMatrix:
    """
    全音素ペアのコサイン類似度

    Returns:
        SimilarityMatrix: 対称・対角1の行列
    """
    if len(cs.phonemes) < 2:
        raise ValueError(f"類似度行列には2音素以上必要です: {list(cs.phonemes)}")
    norms = np.linalg.norm(cs.centroids, axis=1)
    for phoneme, norm in zip(cs.phonemes, norms):
        if norm == 0:
            raise ValueError(f"音素 {phoneme} の重心のノルムが0です")
    unit = cs.centroids / norms[:, None]
    values = np.clip(unit @ unit.T, -1.0, 1.0)
    values = (values + values.T) / 2
    np.fill_diagonal(values, 1.0)
    return SimilarityMatrix(phonemes=cs.phonemes, values=values)


def angle_cutoff(angle_deg: float) -> float:
    """角度しきい値に対応する類似度 cos(angle)"""
    return math.cos(math.radians(angle_deg))


def threshold_matrix(sm: SimilarityMatrix, angle_deg: float) -> SimilarityMatrix:
    """
    cos(angle_deg) 未満の要素を0にする（対角はそのまま）

    Args:
        sm: 類似度行列
        angle_deg: 角度しきい値 (0, 180)

    Returns:
        SimilarityMatrix: しきい値処理した行列
    """
    if not 0 < angle_deg < 180:
        raise ValueError(f"角度は (0, 180) の範囲で指定してください: {angle_deg}")
    cutoff = angle_cutoff(angle_deg)
    values = np.where(sm.values < cutoff, 0.0, sm.values)
    np.fill_diagonal(values, np.diag(sm.values))
    return replace(sm, values=values, threshold_deg=angle_deg)


def _adjacency(values: np.ndarray, cutoff: float) -> csr_matrix:
    edges = values >= cutoff
    np.fill_diagonal(edges, False)
    edges = edges | edges.T
    return csr_matrix(edges.astype(np.int8))


def rcm_order(sm: SimilarityMatrix, angle_deg: float) -> Tuple[int, ...]:
    """
    しきい値グラフの逆Cuthill-McKee順序

    連結成分ごとに最小次数の頂点から幅優先探索し、隣接頂点は次数の小さい順
    （同次数は元の番号順）に訪問、成分内の順序を反転する。

    Returns:
        Tuple[int, ...]: 0..P-1 の置換
    """
    graph = _adjacency(sm.values, angle_cutoff(angle_deg))
    n = graph.shape[0]
    degree = np.diff(graph.indptr)
    visited = np.zeros(n, dtype=bool)
    order: List[int] = []

    for seed in sorted(range(n), key=lambda v: (degree[v], v)):
        if visited[seed]:
            continue
        component = [seed]
        visited[seed] = True
        head = 0
        while head < len(component):
            vertex = component[head]
            head += 1
            neighbors = graph.indices[graph.indptr[vertex]:graph.indptr[vertex + 1]]
            for nb in sorted((int(v) for v in neighbors if not visited[v]), key=lambda v: (degree[v], v)):
                visited[nb] = True
                component.append(nb)
        order.extend(reversed(component))
    return tuple(order)


def bandwidth(values: np.ndarray, order: Optional[Sequence[int]] = None, cutoff: float = 0.0) -> int:
    """
    置換後の行列で、非対角要素 >= cutoff が存在する最大の |i - j|

    Args:
        values: 正方行列
        order: 置換（None なら恒等）
        cutoff: エッジとみなす下限値
    """
    values = np.asarray(values)
    if order is not None:
        idx = np.asarray(order)
        values = values[np.ix_(idx, idx)]
    edges = values >= cutoff if cutoff > 0 else values != 0
    np.fill_diagonal(edges, False)
    rows, cols = np.nonzero(edges)
    return int(np.abs(rows - cols).max()) if rows.size else 0


def reorder(sm: SimilarityMatrix, order: Sequence[int]) -> SimilarityMatrix:
    """音素名と行列を置換の順に並べ替える"""
    idx = np.asarray(order)
    if sorted(idx.tolist()) != list(range(len(sm.phonemes))):
        raise ValueError("order は 0..P-1 の置換である必要があります")
    return SimilarityMatrix(
        phonemes=tuple(sm.phonemes[i] for i in idx),
        values=sm.values[np.ix_(idx, idx)],
        threshold_deg=sm.threshold_deg,
        ordering=tuple(int(i) for i in idx),
    )


def confusion_pairs(
    sm: SimilarityMatrix,
    min_similarity: float = math.cos(math.radians(45.0)),
    top_k: Optional[int] = None,
) -> List[Tuple[str, str, float, float]]:
    """
    混同しやすい音素ペア（類似度の降順）

    Returns:
        List[Tuple]: (音素A, 音素B, 類似度, クラス間の最小角度 [deg])
    """
    p = len(sm.phonemes)
    pairs = [
        (sm.phonemes[i], sm.phonemes[j], float(sm.values[i, j]))
        for i in range(p)
        for j in range(i + 1, p)
        if sm.values[i, j] >= min_similarity
    ]
    pairs.sort(key=lambda pair: (-pair[2], pair[0], pair[1]))
    if top_k is not None:
        pairs = pairs[:top_k]
    return [(a, b, s, math.degrees(math.acos(min(1.0, max(-1.0, s))))) for a, b, s in pairs]
