"""
MFCC抽出サービス
プリエンファシス → フレーム分割 → ハミング窓 → FFT → メルフィルタバンク → DCT
"""
from functools import lru_cache
from typing import Any, Dict
import json

import numpy as np

from app.core.exceptions import (
    ConfigurationError,
    NonPowerOfTwoFrameError,
    SignalTooShortError,
    TooManyFiltersError,
)
from app.core.logging import get_logger
from app.models.audio import AudioClip
from app.models.mfcc import FrameMatrix, MelFilterBank, MfccConfig, MfccMatrix

logger = get_logger(__name__)

# フレーム長の推奨範囲（秒）
FRAME_DURATION_RANGE_S = (0.020, 0.040)

# フィルタ行の最大値がこれを下回るとビン上で潰れているとみなす
MIN_FILTER_PEAK = 0.5

def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0

# 1. プリエンファシス

def pre_emphasize(clip: AudioClip, a: float) -> AudioClip:
    """y(0) = x(0), y(n) = x(n) − a·x(n−1)"""
    if not 0.0 <= a < 1.0:
        raise ConfigurationError(f"プリエンファシス係数は 0 <= a < 1 です: {a}", details={"a": a})
    if a == 0.0:
        return clip
    x = clip.samples
    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - a * x[:-1]
    return clip.with_samples(y)

# 2. フレーム分割

def frame_signal(clip: AudioClip, frame_len: int, hop: int) -> FrameMatrix:
    """
    長さ N のフレームをシフト M で切り出す（末尾の端数は捨てる）

    Raises:
        SignalTooShortError: 信号長 < N
    """
    if hop >= frame_len or hop < 1:
        raise ConfigurationError(
            f"フレームシフトは 1 <= M < N である必要があります（M={hop}, N={frame_len}）",
            details={"hop_samples": hop, "frame_len_samples": frame_len}
        )
    n = len(clip)
    if n < frame_len:
        raise SignalTooShortError(
            f"信号長 {n} がフレーム長 {frame_len} より短いです: {clip.source}",
            details={"source": clip.source, "length": n, "frame_len_samples": frame_len}
        )

    duration = frame_len / clip.sample_rate_hz
    low, high = FRAME_DURATION_RANGE_S
    if not low <= duration <= high:
        logger.warning(
            f"フレーム長 {duration * 1000:.1f}ms が推奨範囲 {low * 1000:.0f}-{high * 1000:.0f}ms の外です"
            f"（N={frame_len}, {clip.sample_rate_hz}Hz）"
        )

    frames = np.lib.stride_tricks.sliding_window_view(clip.samples, frame_len)[::hop].copy()
    return FrameMatrix(
        frames=frames,
        frame_len_samples=frame_len,
        hop_samples=hop,
        sample_rate_hz=clip.sample_rate_hz
    )

# 3. ハミング窓

@lru_cache(maxsize=32)
def _hamming(frame_len: int) -> np.ndarray:
    n = np.arange(frame_len)
    half = 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (frame_len - 1))
    # 浮動小数の丸めで左右がずれないよう前半を鏡映する
    window = half.copy()
    window[frame_len - 1 - n[: frame_len // 2]] = half[: frame_len // 2]
    window.flags.writeable = False
    return window

def hamming_window(frame_len: int) -> np.ndarray:
    """w(n) = 0.54 − 0.46·cos(2πn/(N−1)), n = 0..N−1"""
    if frame_len < 2:
        raise ConfigurationError(f"窓長は2以上が必要です: {frame_len}", details={"frame_len": frame_len})
    return _hamming(frame_len).copy()

def apply_window(frames: FrameMatrix) -> FrameMatrix:
    """各フレームに窓を要素ごとに掛ける"""
    return frames.with_frames(frames.frames * _hamming(frames.frame_len_samples))

# 4. パワースペクトル

def power_spectrum(frames: FrameMatrix) -> np.ndarray:
    """片側パワースペクトル |DFT_N|²（k = 0..N/2, 正規化なし）"""
    n = frames.frame_len_samples
    if not _is_power_of_two(n):
        raise NonPowerOfTwoFrameError(details={"frame_len_samples": n})
    spectrum = np.fft.rfft(frames.frames, n=n, axis=1)
    return spectrum.real ** 2 + spectrum.imag ** 2

# 5. メルフィルタバンク

def mel_from_hz(f):
    """m = 2595·log10(1 + f/1000)"""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 1000.0)

def hz_from_mel(m):
    """mel_from_hz の逆関数"""
    return 1000.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)

@lru_cache(maxsize=16)
def build_filterbank(sample_rate_hz: int, fft_size: int, num_filters: int) -> MelFilterBank:
    """
    三角メルフィルタバンクを構築

    0Hz〜ナイキスト周波数をメル尺度で等間隔に num_filters + 2 点に分割し、
    各フィルタは境界 i−1 から i で 0→1, i から i+1 で 1→0 の三角形。
    ビン中心周波数 k·fs/fft_size で評価する。

    Raises:
        TooManyFiltersError: いずれかのフィルタのピークが 0.5 未満（ビン上で潰れている）
    """
    if num_filters < 1:
        raise ConfigurationError(f"フィルタ数は1以上が必要です: {num_filters}")
    if not _is_power_of_two(fft_size):
        raise NonPowerOfTwoFrameError(details={"fft_size": fft_size})

    nyquist = sample_rate_hz / 2.0
    boundaries = hz_from_mel(np.linspace(0.0, float(mel_from_hz(nyquist)), num_filters + 2))
    boundaries[-1] = nyquist
    bin_freqs = np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size

    lower = boundaries[:-2, None]
    center = boundaries[1:-1, None]
    upper = boundaries[2:, None]
    rising = (bin_freqs[None, :] - lower) / (center - lower)
    falling = (upper - bin_freqs[None, :]) / (upper - center)
    weights = np.clip(np.minimum(rising, falling), 0.0, 1.0)

    peaks = weights.max(axis=1)
    collapsed = np.flatnonzero(peaks < MIN_FILTER_PEAK)
    if collapsed.size:
        raise TooManyFiltersError(
            f"{num_filters} 個のフィルタは fft_size={fft_size}, fs={sample_rate_hz}Hz では分解できません",
            details={
                "num_filters": num_filters,
                "fft_size": fft_size,
                "sample_rate_hz": sample_rate_hz,
                "collapsed_filters": (collapsed + 1).tolist()
            }
        )

    weights.flags.writeable = False
    return MelFilterBank(
        weights=weights,
        center_freqs_hz=boundaries[1:-1].copy(),
        boundaries_hz=boundaries,
        sample_rate_hz=sample_rate_hz,
        fft_size=fft_size
    )

def filter_energies(spectrum: np.ndarray, bank: MelFilterBank, eps: float) -> np.ndarray:
    """
    E_k = ln(max(Σ weights[k]·P, ε))

    spectrum は1フレーム（長さ num_bins）または複数フレーム（frames × num_bins）
    """
    spectrum = np.asarray(spectrum, dtype=np.float64)
    if spectrum.shape[-1] != bank.num_bins:
        raise ConfigurationError(
            f"スペクトル長 {spectrum.shape[-1]} がフィルタバンクのビン数 {bank.num_bins} と一致しません"
        )
    return np.log(np.maximum(spectrum @ bank.weights.T, eps))

# 6. DCT

@lru_cache(maxsize=16)
def _dct_basis(num_filters: int, num_coeffs: int) -> np.ndarray:
    n = np.arange(1, num_coeffs + 1)[:, None]
    k = np.arange(1, num_filters + 1)[None, :]
    basis = np.cos(n * (k - 0.5) * np.pi / num_filters)
    basis.flags.writeable = False
    return basis

def dct_coeffs(energies: np.ndarray, num_coeffs: int) -> np.ndarray:
    """
    C(n) = Σ_{k=1..F} cos(n·(k−0.5)·π/F)·E_k, n = 1..num_coeffs

    energies は長さ F のベクトル、または frames × F 行列（戻り値は frames × num_coeffs）
    """
    energies = np.asarray(energies, dtype=np.float64)
    num_filters = energies.shape[-1]
    if num_coeffs > num_filters:
        raise ConfigurationError(
            f"係数の数 {num_coeffs} がフィルタ数 {num_filters} を超えています",
            details={"num_coeffs": num_coeffs, "num_filters": num_filters}
        )
    return energies @ _dct_basis(num_filters, num_coeffs).T

# パイプライン

def extract_mfcc(clip: AudioClip, cfg: MfccConfig) -> MfccMatrix:
    """
    6段階のMFCCパイプラインを実行

    Returns:
        MfccMatrix: num_coeffs × num_frames
    """
    emphasized = pre_emphasize(clip, cfg.pre_emphasis_a)
    frames = frame_signal(emphasized, cfg.frame_len_samples, cfg.hop_samples)
    windowed = apply_window(frames)
    spectrum = power_spectrum(windowed)
    bank = build_filterbank(clip.sample_rate_hz, cfg.fft_size, cfg.num_filters)
    energies = filter_energies(spectrum, bank, cfg.log_floor)
    coeffs = dct_coeffs(energies, cfg.num_coeffs)
    return MfccMatrix(coeffs=coeffs.T, config=cfg, source=clip.source)

def select_coeffs(m: MfccMatrix, k: int) -> MfccMatrix:
    """先頭 k 行（係数 1..k）を取り出す"""
    if not 1 <= k <= m.num_coeffs:
        raise ConfigurationError(
            f"選択する係数の数 {k} が範囲外です（1..{m.num_coeffs}）",
            details={"k": k, "num_coeffs": m.num_coeffs}
        )
    if k == m.num_coeffs:
        return m
    return MfccMatrix(coeffs=m.coeffs[:k], config=m.config, source=m.source)

# シリアライズ

def mfcc_to_csv(m: MfccMatrix) -> str:
    """行 = 係数, 列 = フレーム, ヘッダー frame_0,frame_1,…"""
    lines = [",".join(f"frame_{i}" for i in range(m.num_frames))]
    for row in m.coeffs:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"

def mfcc_to_dict(m: MfccMatrix) -> Dict[str, Any]:
    """{config, shape, data(行優先)} 形式の辞書"""
    return {
        "source": m.source,
        "config": m.config.model_dump(),
        "shape": list(m.shape),
        "data": m.coeffs.reshape(-1).tolist(),
    }

def mfcc_to_json(m: MfccMatrix) -> str:
    """JSON（浮動小数は完全精度, 再読込でビット一致）"""
    return json.dumps(mfcc_to_dict(m), sort_keys=True, ensure_ascii=False) + "\n"

def mfcc_from_json(text: str) -> MfccMatrix:
    """mfcc_to_json の逆変換"""
    payload = json.loads(text)
    rows, cols = payload["shape"]
    coeffs = np.asarray(payload["data"], dtype=np.float64).reshape(rows, cols)
    return MfccMatrix(
        coeffs=coeffs,
        config=MfccConfig(**payload["config"]),
        source=payload.get("source", "")
    )

class MfccService:
    """MFCC抽出サービス（設定固定, フィルタバンクはキャッシュ共有）"""

    def __init__(self, config: MfccConfig):
        self.config = config

    def extract(self, clip: AudioClip) -> MfccMatrix:
        """全係数（num_coeffs 行）を抽出"""
        matrix = extract_mfcc(clip, self.config)
        logger.debug(f"MFCC抽出: {clip.source} -> {matrix.shape[0]}×{matrix.shape[1]}")
        return matrix

    def extract_kept(self, clip: AudioClip) -> MfccMatrix:
        """相関分析用に先頭 keep_coeffs 行だけ返す"""
        return select_coeffs(self.extract(clip), self.config.keep_coeffs)
