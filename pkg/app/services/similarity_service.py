"""
類似度分析サービス
MFCC特徴量のピアソン相関、相関行列、サマリー集計、時間・周波数領域のベースライン
"""
from typing import Any, Dict, List, Optional, Sequence, Tuple
import math

import numpy as np

from app.core.exceptions import (
    DegenerateInputError,
    EmptyGroupError,
    LengthMismatchError,
    NoEntriesError,
    OutOfRangeError,
    SignalTooShortError,
    TooFewCoeffsError,
    TooFewFramesError,
)
from app.core.logging import get_logger
from app.models.audio import AudioClip, Cohort, SoundKind
from app.models.mfcc import FrameMatrix, MfccMatrix
from app.models.similarity import (
    CorrelationMatrix,
    CorrelationStrength,
    FeatureMode,
    FeatureVector,
    SimilaritySummary,
    StrengthLevel,
)
from app.services.mfcc_service import power_spectrum

logger = get_logger(__name__)

# 強さの境界（|R| < 0.5: LOW, < 0.7: MODERATE, それ以上: HIGH）
MODERATE_THRESHOLD = 0.5
HIGH_THRESHOLD = 0.7

def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """
    ピアソン相関係数 R（[-1, 1] にクランプ）

    Raises:
        LengthMismatchError: 長さ不一致または n < 2
        DegenerateInputError: どちらかの分散がゼロ
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise LengthMismatchError(
            f"系列長が一致しません: {x.size} != {y.size}",
            details={"len_x": int(x.size), "len_y": int(y.size)}
        )
    if x.size < 2:
        raise LengthMismatchError(f"系列長は2以上が必要です: {x.size}", details={"length": int(x.size)})

    # 定数列は平均の丸め誤差で偏差が残るため、値そのものを比較する
    x_constant = bool(np.all(x == x[0]))
    y_constant = bool(np.all(y == y[0]))
    if x_constant or y_constant:
        raise DegenerateInputError(details={"var_x_zero": x_constant, "var_y_zero": y_constant})

    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInputError(details={"var_x_zero": sxx == 0.0, "var_y_zero": syy == 0.0})

    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))

def feature_vector(m: MfccMatrix, mode: FeatureMode, other_len: Optional[int] = None) -> FeatureVector:
    """
    MFCC行列から特徴ベクトルを作成

    FLATTEN_TRUNCATED / PER_COEFF は min(自フレーム数, other_len) に切り詰めて行優先で平坦化、
    MEAN_FRAME は係数ごとのフレーム平均。
    """
    if m.num_coeffs == 0 or m.num_frames == 0:
        raise TooFewFramesError(f"MFCC行列が空です: {m.source}", details={"source": m.source})

    if mode is FeatureMode.MEAN_FRAME:
        if m.num_coeffs < 2:
            raise TooFewCoeffsError(
                f"MEAN_FRAME には2つ以上の係数が必要です: {m.num_coeffs}",
                details={"source": m.source, "num_coeffs": m.num_coeffs}
            )
        return FeatureVector(values=m.coeffs.mean(axis=1), mode=mode, source=m.source)

    frames = m.num_frames if other_len is None else min(m.num_frames, other_len)
    truncated = m.coeffs[:, :frames]
    length = truncated.size if mode is FeatureMode.FLATTEN_TRUNCATED else frames
    if length < 2:
        raise TooFewFramesError(
            f"切り詰め後の長さが2未満です: {m.source}",
            details={"source": m.source, "frames": frames, "mode": mode.value}
        )
    num_rows = m.num_coeffs if mode is FeatureMode.PER_COEFF else 1
    return FeatureVector(values=truncated.reshape(-1), mode=mode, source=m.source, num_rows=num_rows)

def correlate_pair(a: MfccMatrix, b: MfccMatrix, mode: FeatureMode) -> float:
    """2つの録音の相関係数（PER_COEFF は係数行ごとの相関の平均）"""
    if a.num_coeffs != b.num_coeffs:
        raise LengthMismatchError(
            f"係数の数が一致しません: {a.source}={a.num_coeffs}, {b.source}={b.num_coeffs}",
            details={"a": a.source, "b": b.source}
        )

    fa = feature_vector(a, mode, b.num_frames)
    fb = feature_vector(b, mode, a.num_frames)
    if mode is not FeatureMode.PER_COEFF:
        return pearson(fa.values, fb.values)

    rows_a, rows_b = fa.rows(), fb.rows()
    values = [pearson(row_a, row_b) for row_a, row_b in zip(rows_a, rows_b)]
    return min(1.0, max(-1.0, float(np.mean(values))))

def correlation_matrix(
    group_a: List[MfccMatrix],
    group_b: List[MfccMatrix],
    mode: FeatureMode
) -> CorrelationMatrix:
    """
    グループ間の相関行列（同一グループ同士なら対称・対角1）

    分散ゼロなどで相関が定義できない組は欠損（NaN）として記録する。

    Raises:
        EmptyGroupError: どちらかのグループが空
    """
    if not group_a or not group_b:
        raise EmptyGroupError(details={"size_a": len(group_a), "size_b": len(group_b)})

    labels_a = [m.source for m in group_a]
    labels_b = [m.source for m in group_b]
    symmetric = group_a is group_b or (
        len(group_a) == len(group_b) and all(x is y for x, y in zip(group_a, group_b))
    )

    entries = np.full((len(group_a), len(group_b)), np.nan)
    degenerate: List[Tuple[str, str, str]] = []

    for i, a in enumerate(group_a):
        start = i if symmetric else 0
        for j in range(start, len(group_b)):
            if symmetric and i == j:
                entries[i, j] = 1.0
                continue
            b = group_b[j]
            try:
                value = correlate_pair(a, b, mode)
            except (DegenerateInputError, TooFewFramesError, TooFewCoeffsError, LengthMismatchError) as e:
                degenerate.append((a.source, b.source, e.error_code))
                continue
            entries[i, j] = value
            if symmetric:
                entries[j, i] = value

    for label_a, label_b, code in degenerate:
        logger.warning(f"相関を計算できない組を欠損として記録: {label_a} × {label_b} ({code})")

    return CorrelationMatrix(
        entries=entries,
        row_labels=labels_a,
        col_labels=labels_b,
        symmetric=symmetric
    )

def classify_strength(r: float) -> CorrelationStrength:
    """
    |R| < 0.5 → LOW, 0.5 <= |R| < 0.7 → MODERATE, |R| >= 0.7 → HIGH
    符号は R の符号（R = 0 は positive 扱い）
    """
    if r is None or not math.isfinite(r) or abs(r) > 1.0:
        raise OutOfRangeError(f"相関係数が範囲外です: {r}", details={"r": r})
    magnitude = abs(r)
    if magnitude < MODERATE_THRESHOLD:
        level = StrengthLevel.LOW
    elif magnitude < HIGH_THRESHOLD:
        level = StrengthLevel.MODERATE
    else:
        level = StrengthLevel.HIGH
    return CorrelationStrength(level=level, positive=r >= 0.0)

def summarize(matrix: CorrelationMatrix, pair: Tuple[Cohort, Cohort], kind: SoundKind) -> SimilaritySummary:
    """
    相関行列の平均・母分散・強さ

    対称行列は対角を除いた狭義上三角、非対称行列は全要素を対象とし、欠損は除外する。

    Raises:
        NoEntriesError: 対象要素がない
    """
    values = matrix.included_entries()
    if values.size == 0:
        raise NoEntriesError(
            f"集計対象の相関係数がありません: {pair[0].value} vs {pair[1].value} / {kind.value}",
            details={"pair": [c.value for c in pair], "kind": kind.value}
        )
    average = min(1.0, max(-1.0, float(values.mean())))
    variance = float(values.var())
    return SimilaritySummary(
        pair=pair,
        kind=kind,
        average=average,
        variance=variance,
        strength=classify_strength(average),
        count=int(values.size)
    )

def waveform_correlation(a: AudioClip, b: AudioClip) -> float:
    """時間波形の相関（短い方の長さに切り詰め）"""
    n = min(len(a), len(b))
    return pearson(a.samples[:n], b.samples[:n])

def _contiguous_frames(clip: AudioClip, fft_size: int) -> FrameMatrix:
    """hop = fft_size の非重複フレーム（末尾の端数は捨てる）"""
    count = len(clip) // fft_size
    if count < 1:
        raise SignalTooShortError(
            f"信号長 {len(clip)} が FFT サイズ {fft_size} より短いです: {clip.source}",
            details={"source": clip.source, "length": len(clip), "fft_size": fft_size}
        )
    frames = clip.samples[: count * fft_size].reshape(count, fft_size)
    return FrameMatrix(
        frames=frames,
        frame_len_samples=fft_size,
        hop_samples=fft_size,
        sample_rate_hz=clip.sample_rate_hz
    )

def mean_power_spectrum(clip: AudioClip, fft_size: int) -> np.ndarray:
    """非重複フレーム（窓なし）の平均片側パワースペクトル"""
    return power_spectrum(_contiguous_frames(clip, fft_size)).mean(axis=0)

def spectrum_correlation(a: AudioClip, b: AudioClip, fft_size: int) -> float:
    """平均パワースペクトル同士の相関"""
    return pearson(mean_power_spectrum(a, fft_size), mean_power_spectrum(b, fft_size))

# シリアライズ

def _format_value(value: float) -> str:
    return "" if math.isnan(value) else f"{value:.12g}"

def correlation_matrix_to_csv(matrix: CorrelationMatrix) -> str:
    """1行目・1列目がラベル, 欠損は空セル"""
    lines = ["," + ",".join(matrix.col_labels)]
    for label, row in zip(matrix.row_labels, matrix.entries):
        lines.append(label + "," + ",".join(_format_value(float(v)) for v in row))
    return "\n".join(lines) + "\n"

def summary_to_dict(summary: SimilaritySummary) -> Dict[str, Any]:
    """{pair, kind, average, variance, strength, count}"""
    return {
        "pair": [c.value for c in summary.pair],
        "kind": summary.kind.value,
        "average": summary.average,
        "variance": summary.variance,
        "strength": summary.strength.label,
        "count": summary.count,
    }

class SimilarityService:
    """グループ対 × 音の種類ごとの相関分析"""

    def __init__(self, mode: FeatureMode = FeatureMode.FLATTEN_TRUNCATED):
        self.mode = mode

    def build_matrix(
        self,
        group_a: List[MfccMatrix],
        group_b: List[MfccMatrix],
        pair: Tuple[Cohort, Cohort],
        kind: SoundKind
    ) -> CorrelationMatrix:
        """
        相関行列を作成

        pair の両側が同じグループなら group_b は無視し、対称行列として扱う。
        """
        same_group = pair[0] == pair[1]
        matrix = correlation_matrix(group_a, group_a if same_group else group_b, self.mode)
        missing = int(matrix.missing_mask.sum())
        if missing:
            logger.warning(f"{pair[0].value} vs {pair[1].value} / {kind.value}: 欠損 {missing} 件")
        return matrix

    def summarize(self, matrix: CorrelationMatrix, pair: Tuple[Cohort, Cohort], kind: SoundKind) -> SimilaritySummary:
        summary = summarize(matrix, pair, kind)
        logger.info(
            f"{summary.test_name} / {kind.display_name}: 平均 {summary.average:.3f}, "
            f"分散 {summary.variance:.3f} ({summary.strength.label}, n={summary.count})"
        )
        return summary

    def analyze(
        self,
        group_a: List[MfccMatrix],
        group_b: List[MfccMatrix],
        pair: Tuple[Cohort, Cohort],
        kind: SoundKind
    ) -> Tuple[CorrelationMatrix, SimilaritySummary]:
        """相関行列とサマリーを作成"""
        matrix = self.build_matrix(group_a, group_b, pair, kind)
        return matrix, self.summarize(matrix, pair, kind)
