import math

import numpy as np
import pytest
from hypothesis import assume, given, settings as hyp_settings, strategies as st
from hypothesis.extra.numpy import arrays

from app.core.exceptions import (
    DegenerateInputError,
    EmptyGroupError,
    LengthMismatchError,
    NoEntriesError,
    OutOfRangeError,
    TooFewCoeffsError,
    TooFewFramesError,
)
from app.models.audio import AudioClip, Cohort, SoundKind
from app.models.mfcc import MfccConfig, MfccMatrix
from app.models.similarity import CorrelationMatrix, FeatureMode, StrengthLevel
from app.services.similarity_service import (
    SimilarityService,
    classify_strength,
    correlate_pair,
    correlation_matrix,
    correlation_matrix_to_csv,
    feature_vector,
    pearson,
    spectrum_correlation,
    summarize,
    summary_to_dict,
    waveform_correlation,
)

CONFIG = MfccConfig()

def _matrix(coeffs, source: str) -> MfccMatrix:
    return MfccMatrix(coeffs=np.asarray(coeffs, dtype=float), config=CONFIG, source=source)

def _random_matrices(count: int, seed: int, frames: int = 20):
    rng = np.random.default_rng(seed)
    return [_matrix(rng.standard_normal((3, frames)), f"r{seed}_{i}") for i in range(count)]

def _textbook_pearson(x, y) -> float:
    n = len(x)
    sx, sy = math.fsum(x), math.fsum(y)
    sxy = math.fsum(a * b for a, b in zip(x, y))
    sxx = math.fsum(a * a for a in x)
    syy = math.fsum(b * b for b in y)
    r = (n * sxy - sx * sy) / math.sqrt((n * sxx - sx * sx) * (n * syy - sy * sy))
    return min(1.0, max(-1.0, r))

# ピアソン相関

def test_pearson_matches_textbook_formula():
    rng = np.random.default_rng(10)
    for _ in range(1000):
        n = int(rng.integers(2, 201))
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)
        assert math.isclose(pearson(x, y), _textbook_pearson(x.tolist(), y.tolist()), rel_tol=1e-12, abs_tol=1e-12)

def test_pearson_self_and_negation_are_exact():
    rng = np.random.default_rng(11)
    for _ in range(100):
        x = rng.standard_normal(int(rng.integers(2, 200)))
        assert pearson(x, x) == 1.0
        assert pearson(x, -x) == -1.0

def test_pearson_small_example():
    assert math.isclose(pearson([1, 2, 3], [2, 4, 7]), 0.9933992677987828, rel_tol=1e-12)

@hyp_settings(deadline=None)
@given(
    arrays(np.float64, 20, elements=st.floats(-100, 100)),
    arrays(np.float64, 20, elements=st.floats(-100, 100)),
    st.floats(0.5, 10),
    st.booleans(),
    st.floats(-100, 100),
)
def test_pearson_affine_invariance(x, y, scale, negate, shift):
    assume(np.std(x) > 1e-2 and np.std(y) > 1e-2)
    a = -scale if negate else scale
    expected = -pearson(x, y) if negate else pearson(x, y)
    assert math.isclose(pearson(a * x + shift, y), expected, abs_tol=1e-8)

def test_pearson_errors():
    with pytest.raises(LengthMismatchError):
        pearson([1, 2, 3], [1, 2])
    with pytest.raises(LengthMismatchError):
        pearson([1], [2])
    with pytest.raises(DegenerateInputError):
        pearson([1, 1, 1], [1, 2, 3])

@pytest.mark.parametrize("value", [0.1, 0.3, -2.7, 1e-3])
def test_inexact_constant_is_degenerate(value):
    x = [value] * 7
    with pytest.raises(DegenerateInputError):
        pearson(x, [1, 2, 3, 4, 5, 6, 7])
    with pytest.raises(DegenerateInputError):
        pearson([1, 2, 3, 4, 5, 6, 7], x)

def test_inexact_constant_matrix_cell_is_missing():
    flat = _matrix(np.full((3, 20), 0.1), "flat")
    matrix = correlation_matrix(_random_matrices(1, seed=19), [flat], FeatureMode.FLATTEN_TRUNCATED)
    assert np.isnan(matrix.entries[0, 0])

# 特徴ベクトル

def test_flatten_truncates_to_shorter_matrix():
    a = _matrix(np.arange(12).reshape(3, 4), "a")
    vector = feature_vector(a, FeatureMode.FLATTEN_TRUNCATED, other_len=2)
    assert vector.values.tolist() == [0, 1, 4, 5, 8, 9]

def test_mean_frame_averages_each_coefficient():
    a = _matrix([[1, 3], [2, 4], [5, 7]], "a")
    assert feature_vector(a, FeatureMode.MEAN_FRAME).values.tolist() == [2, 3, 6]

def test_too_few_frames_and_coeffs():
    single = _matrix([[1.0]], "one")
    with pytest.raises(TooFewFramesError):
        feature_vector(single, FeatureMode.FLATTEN_TRUNCATED)
    with pytest.raises(TooFewCoeffsError):
        feature_vector(_matrix([[1.0, 2.0, 3.0]], "row"), FeatureMode.MEAN_FRAME)
    with pytest.raises(TooFewFramesError):
        feature_vector(_matrix(np.ones((3, 1)), "col"), FeatureMode.PER_COEFF)

def test_per_coeff_averages_row_correlations():
    a = _matrix([[1, 2, 3], [1, 2, 3]], "a")
    b = _matrix([[1, 2, 3], [3, 2, 1]], "b")
    assert correlate_pair(a, b, FeatureMode.PER_COEFF) == 0.0

def test_coefficient_count_mismatch():
    with pytest.raises(LengthMismatchError):
        correlate_pair(_matrix(np.ones((3, 4)), "a"), _matrix(np.ones((2, 4)), "b"), FeatureMode.FLATTEN_TRUNCATED)

# 相関行列

@pytest.mark.parametrize("mode", list(FeatureMode))
def test_within_group_matrix_is_symmetric_with_unit_diagonal(mode):
    group = _random_matrices(7, seed=12)
    matrix = correlation_matrix(group, group, mode)
    assert matrix.symmetric
    assert matrix.shape == (7, 7)
    assert np.all(np.diag(matrix.entries) == 1.0)
    assert np.max(np.abs(matrix.entries - matrix.entries.T)) <= 1e-12
    assert np.all(np.abs(matrix.entries) <= 1.0)

def test_cross_group_matrix_shape():
    matrix = correlation_matrix(_random_matrices(2, seed=13), _random_matrices(3, seed=14), FeatureMode.FLATTEN_TRUNCATED)
    assert not matrix.symmetric
    assert matrix.shape == (2, 3)
    assert matrix.row_labels == ["r13_0", "r13_1"]

def test_degenerate_pairs_are_missing_but_diagonal_stays_one():
    group = _random_matrices(2, seed=15) + [_matrix(np.ones((3, 20)), "flat")]
    matrix = correlation_matrix(group, group, FeatureMode.FLATTEN_TRUNCATED)
    assert np.all(np.diag(matrix.entries) == 1.0)
    assert np.isnan(matrix.entries[0, 2]) and np.isnan(matrix.entries[2, 1])
    assert not np.isnan(matrix.entries[0, 1])

def test_empty_group():
    with pytest.raises(EmptyGroupError):
        correlation_matrix([], _random_matrices(1, seed=16), FeatureMode.FLATTEN_TRUNCATED)

def test_single_recording_per_side_gives_1x1():
    matrix = correlation_matrix(_random_matrices(1, seed=17), _random_matrices(1, seed=18), FeatureMode.MEAN_FRAME)
    assert matrix.shape == (1, 1)

# サマリー

def test_summary_uses_strict_upper_triangle_and_population_variance():
    entries = np.array([
        [1.0, 0.2, 0.4],
        [0.2, 1.0, 0.6],
        [0.4, 0.6, 1.0],
    ])
    labels = ["a", "b", "c"]
    matrix = CorrelationMatrix(entries=entries, row_labels=labels, col_labels=labels, symmetric=True)
    summary = summarize(matrix, (Cohort.COVID, Cohort.COVID), SoundKind.VOICE)
    assert summary.count == 3
    assert math.isclose(summary.average, 0.4, abs_tol=1e-12)
    assert math.isclose(summary.variance, 0.08 / 3, abs_tol=1e-12)
    assert summary.strength.level is StrengthLevel.LOW

def test_summary_of_cross_matrix_uses_all_entries():
    matrix = CorrelationMatrix(entries=[[0.8, 0.6], [0.7, 0.9]], row_labels=["a", "b"], col_labels=["c", "d"])
    summary = summarize(matrix, (Cohort.HEALTHY, Cohort.COVID), SoundKind.COUGH)
    assert summary.count == 4
    assert math.isclose(summary.average, 0.75, abs_tol=1e-12)
    assert summary.strength.label == "High positive correlation"

def test_summary_without_entries():
    matrix = CorrelationMatrix(entries=[[np.nan]], row_labels=["a"], col_labels=["b"])
    with pytest.raises(NoEntriesError):
        summarize(matrix, (Cohort.HEALTHY, Cohort.COVID), SoundKind.COUGH)

def test_summary_dict_shape():
    matrix = CorrelationMatrix(entries=[[0.5]], row_labels=["a"], col_labels=["b"])
    payload = summary_to_dict(summarize(matrix, (Cohort.HEALTHY, Cohort.COVID), SoundKind.BREATH))
    assert payload == {
        "pair": ["HEALTHY", "COVID"],
        "kind": "BREATH",
        "average": 0.5,
        "variance": 0.0,
        "strength": "Moderate positive correlation",
        "count": 1,
    }

def test_matrix_csv_leaves_missing_cells_empty():
    matrix = CorrelationMatrix(entries=[[0.25, np.nan]], row_labels=["a"], col_labels=["b", "c"])
    assert correlation_matrix_to_csv(matrix) == ",b,c\na,0.25,\n"

# 強さ

@pytest.mark.parametrize("average, label", [
    (0.42, "Low positive correlation"),
    (0.43, "Low positive correlation"),
    (0.79, "High positive correlation"),
    (0.65, "Moderate positive correlation"),
    (0.58, "Moderate positive correlation"),
    (0.82, "High positive correlation"),
])
def test_strength_of_reference_averages(average, label):
    assert classify_strength(average).label == label

@pytest.mark.parametrize("r, level, positive", [
    (0.0, StrengthLevel.LOW, True),
    (0.4999, StrengthLevel.LOW, True),
    (0.5, StrengthLevel.MODERATE, True),
    (0.7, StrengthLevel.HIGH, True),
    (-0.8, StrengthLevel.HIGH, False),
    (-1.0, StrengthLevel.HIGH, False),
])
def test_strength_boundaries(r, level, positive):
    strength = classify_strength(r)
    assert strength.level is level
    assert strength.positive is positive

@pytest.mark.parametrize("r", [1.5, -1.01, float("nan")])
def test_strength_out_of_range(r):
    with pytest.raises(OutOfRangeError):
        classify_strength(r)

# ベースライン

def test_waveform_correlation(make_clip):
    clip = make_clip(length=1000)
    assert waveform_correlation(clip, clip) == 1.0
    assert waveform_correlation(clip, clip.with_samples(-clip.samples)) == -1.0

@pytest.mark.parametrize("seed", range(5))
def test_waveform_correlation_of_independent_noise(seed):
    rng = np.random.default_rng(seed)
    a = AudioClip(samples=rng.standard_normal(10_000), sample_rate_hz=8000)
    b = AudioClip(samples=rng.standard_normal(10_000), sample_rate_hz=8000)
    assert abs(waveform_correlation(a, b)) < 0.05

def test_spectrum_correlation_of_disjoint_tones():
    sr, n = 8000, 256
    t = np.arange(4096) / sr
    a = AudioClip(samples=np.sin(2 * np.pi * 8 * sr / n * t), sample_rate_hz=sr)
    b = AudioClip(samples=np.sin(2 * np.pi * 64 * sr / n * t), sample_rate_hz=sr)
    assert spectrum_correlation(a, a, n) == 1.0
    assert math.isclose(spectrum_correlation(a, b, n), -1.0 / 128, abs_tol=1e-6)

def test_spectrum_correlation_is_shift_insensitive():
    sr, n = 8000, 256
    t = np.arange(4200) / sr
    signal = sum(np.sin(2 * np.pi * k * sr / n * t + k) for k in (8, 20, 45))
    a = AudioClip(samples=signal[:4096], sample_rate_hz=sr)
    b = AudioClip(samples=signal[37:37 + 4096], sample_rate_hz=sr)
    assert spectrum_correlation(a, b, n) > 0.99

# サービス

def test_service_analyze_same_cohort_is_symmetric():
    group = _random_matrices(4, seed=19)
    matrix, summary = SimilarityService(FeatureMode.FLATTEN_TRUNCATED).analyze(
        group, [], (Cohort.COVID, Cohort.COVID), SoundKind.VOICE
    )
    assert matrix.symmetric
    assert summary.count == 6
    assert summary.test_name == "Covid-19 vs Covid-19"
