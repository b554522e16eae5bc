"""
合成コーパス生成サービス
グループごとに基本周波数・スペクトル包絡の異なる調波音＋シード付きノイズを生成する
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from app.core.logging import get_logger
from app.models.audio import AudioClip, Cohort, RecordingEntry, SoundKind
from app.models.run_config import SynthConfig

logger = get_logger(__name__)

@dataclass(frozen=True)
class CohortVoice:
    """グループの声質パラメータ"""
    f0_range_hz: Tuple[float, float]
    envelope_center_hz: float
    envelope_width_hz: float

@dataclass(frozen=True)
class KindProfile:
    """音の種類ごとのノイズ量と調波成分の比率"""
    noise_rms: float
    harmonic_gain: float

COHORT_VOICES: Dict[Cohort, CohortVoice] = {
    Cohort.COVID: CohortVoice(f0_range_hz=(140.0, 180.0), envelope_center_hz=500.0, envelope_width_hz=250.0),
    Cohort.HEALTHY: CohortVoice(f0_range_hz=(400.0, 480.0), envelope_center_hz=2400.0, envelope_width_hz=500.0),
}

KIND_PROFILES: Dict[SoundKind, KindProfile] = {
    SoundKind.COUGH: KindProfile(noise_rms=0.01, harmonic_gain=1.0),
    SoundKind.BREATH: KindProfile(noise_rms=0.02, harmonic_gain=0.5),
    SoundKind.VOICE: KindProfile(noise_rms=0.003, harmonic_gain=1.0),
}

COUGH_BURSTS = 4
F0_JITTER_HZ = 5.0
PEAK_AMPLITUDE = 0.5
PADDING_AMPLITUDE = 1e-4

def subject_id(cohort: Cohort, speaker: int) -> str:
    return f"{cohort.value.lower()}{speaker + 1:02d}"

def _entry_rng(seed: int, cohort: Cohort, speaker: int, session: int, kind: SoundKind) -> np.random.Generator:
    """エントリごとに独立した乱数列（生成順に依存しない）"""
    cohort_index = list(Cohort).index(cohort)
    return np.random.default_rng([seed, cohort_index, speaker, session, kind.order])

def _amplitude_envelope(kind: SoundKind, t: np.ndarray, duration_s: float) -> np.ndarray:
    """時間包絡（最小 0.5 で無音窓を作らない）"""
    if kind is SoundKind.COUGH:
        phase = (t / duration_s) * COUGH_BURSTS
        return 0.5 + 0.5 * np.exp(-6.0 * (phase - np.floor(phase)))
    if kind is SoundKind.BREATH:
        return 0.75 + 0.25 * np.sin(2.0 * np.pi * t / duration_s)
    return np.ones_like(t)

def synthesize_clip(
    cohort: Cohort,
    speaker: int,
    session: int,
    kind: SoundKind,
    config: SynthConfig,
    seed: int
) -> AudioClip:
    """
    1録音分のクリップを生成（前後に微小ノイズのパディング付き）

    同じ引数なら常に同じサンプル列を返す。
    """
    rng = _entry_rng(seed, cohort, speaker, session, kind)
    voice = COHORT_VOICES[cohort]
    profile = KIND_PROFILES[kind]
    sr = config.sample_rate_hz
    nyquist = sr / 2.0

    low, high = voice.f0_range_hz
    spread = speaker / max(1, config.speakers_per_cohort - 1)
    f0 = low + (high - low) * spread + rng.uniform(-F0_JITTER_HZ, F0_JITTER_HZ)

    n = int(round(config.duration_s * sr))
    t = np.arange(n) / sr
    harmonics = np.arange(1, int((nyquist - 100.0) // f0) + 1) * f0
    gains = np.exp(-0.5 * ((harmonics - voice.envelope_center_hz) / voice.envelope_width_hz) ** 2)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=harmonics.size)
    tone = (gains[:, None] * np.sin(2.0 * np.pi * harmonics[:, None] * t[None, :] + phases[:, None])).sum(axis=0)
    tone /= max(np.max(np.abs(tone)), 1e-12)

    body = profile.harmonic_gain * tone * _amplitude_envelope(kind, t, config.duration_s)
    body += rng.normal(0.0, profile.noise_rms, size=n)
    body *= PEAK_AMPLITUDE / np.max(np.abs(body))

    pad = int(round(config.padding_s * sr))
    samples = np.concatenate([
        rng.uniform(-PADDING_AMPLITUDE, PADDING_AMPLITUDE, size=pad),
        body,
        rng.uniform(-PADDING_AMPLITUDE, PADDING_AMPLITUDE, size=pad),
    ])
    label = f"{subject_id(cohort, speaker)}_{kind.value.lower()}_{session}"
    return AudioClip(samples=samples, sample_rate_hz=sr, source=label)

def plan_corpus(config: SynthConfig, root: Path) -> List[Tuple[RecordingEntry, int]]:
    """
    生成するエントリの一覧（マニフェスト順: グループ → 話者 → セッション → 種類）

    Returns:
        (エントリ, 話者番号) のリスト。path は root 配下
    """
    plan: List[Tuple[RecordingEntry, int]] = []
    for cohort in (Cohort.COVID, Cohort.HEALTHY):
        for speaker in range(config.speakers_per_cohort):
            for session in range(1, config.sessions + 1):
                for kind in SoundKind:
                    sid = subject_id(cohort, speaker)
                    entry = RecordingEntry(
                        path=root / cohort.value.lower() / f"{sid}_{kind.value.lower()}_{session}.wav",
                        subject_id=sid,
                        cohort=cohort,
                        kind=kind,
                        session=session
                    )
                    plan.append((entry, speaker))
    logger.info(f"合成コーパス計画: {len(plan)}件（{config.speakers_per_cohort}話者/グループ）")
    return plan

def manifest_csv(entries: List[RecordingEntry], root: Path) -> str:
    """root からの相対パスで書いたマニフェストCSV"""
    lines = ["path,subject_id,cohort,kind,session"]
    for entry in entries:
        relative = entry.path.relative_to(root).as_posix()
        lines.append(f"{relative},{entry.subject_id},{entry.cohort.value},{entry.kind.value},{entry.session}")
    return "\n".join(lines) + "\n"
