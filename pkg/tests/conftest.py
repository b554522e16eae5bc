"""
テスト共通フィクスチャ
"""
from pathlib import Path
from typing import Callable
import asyncio
import io

import numpy as np
import pytest
import soundfile as sf

from app.models.audio import AudioClip
from app.models.run_config import RunConfig
from app.services.batch_service import BatchService

def wav_bytes(samples: np.ndarray, sample_rate: int = 8000, subtype: str = "PCM_16") -> bytes:
    """numpy 配列（frames または frames × channels）を WAV バイト列にする"""
    buffer = io.BytesIO()
    sf.write(buffer, np.asarray(samples), sample_rate, format="WAV", subtype=subtype)
    return buffer.getvalue()

def write_wav_file(path: Path, samples: np.ndarray, sample_rate: int = 8000, subtype: str = "PCM_16") -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(wav_bytes(samples, sample_rate, subtype))
    return path

def write_manifest(path: Path, rows) -> Path:
    """rows: (path, subject_id, cohort, kind, session) のリスト"""
    lines = ["path,subject_id,cohort,kind,session"]
    lines.extend(",".join(str(v) for v in row) for row in rows)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path

@pytest.fixture
def make_clip() -> Callable[..., AudioClip]:
    """正弦波クリップを作るファクトリ"""
    def _make(freq_hz: float = 440.0, sample_rate: int = 8000, length: int = 2048, amplitude: float = 0.5) -> AudioClip:
        t = np.arange(length) / sample_rate
        return AudioClip(samples=amplitude * np.sin(2 * np.pi * freq_hz * t), sample_rate_hz=sample_rate, source="sine")
    return _make

@pytest.fixture(scope="session")
def synth_corpus(tmp_path_factory) -> Path:
    """既定設定（seed 42）で生成した合成コーパスのマニフェスト"""
    out = tmp_path_factory.mktemp("synth")
    result = asyncio.run(BatchService(RunConfig(output_dir=out)).synth())
    assert result.exit_code == 0
    return out / "synth" / "manifest.csv"

@pytest.fixture(scope="session")
def synth_report(synth_corpus, tmp_path_factory) -> Path:
    """合成コーパスに対する既定レポートの出力ディレクトリ"""
    out = tmp_path_factory.mktemp("report")
    result = asyncio.run(BatchService(RunConfig(output_dir=out)).report(synth_corpus))
    assert result.exit_code == 0
    return out
