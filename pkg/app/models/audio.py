from pydantic import BaseModel, Field, field_validator, model_validator
from pathlib import Path
from enum import Enum
import numpy as np

from app.core.exceptions import BadEnumValueError, EmptyAudioError, InvalidAudioError

class Cohort(str, Enum):
    """録音グループ"""
    COVID = "COVID"
    HEALTHY = "HEALTHY"

    @classmethod
    def parse(cls, raw: str) -> "Cohort":
        """大文字小文字を区別せずにパース"""
        value = (raw or "").strip().upper()
        try:
            return cls(value)
        except ValueError:
            raise BadEnumValueError(
                f"cohort の値が不正です: {raw!r}",
                details={"field": "cohort", "value": raw, "allowed": [c.value for c in cls]}
            )

    @property
    def display_name(self) -> str:
        """表の表示名"""
        return "Covid-19" if self is Cohort.COVID else "Non-Covid-19"

class SoundKind(str, Enum):
    """録音タスク（咳・呼吸・発声）"""
    COUGH = "COUGH"
    BREATH = "BREATH"
    VOICE = "VOICE"

    @classmethod
    def parse(cls, raw: str) -> "SoundKind":
        """大文字小文字を区別せずにパース"""
        value = (raw or "").strip().upper()
        try:
            return cls(value)
        except ValueError:
            raise BadEnumValueError(
                f"kind の値が不正です: {raw!r}",
                details={"field": "kind", "value": raw, "allowed": [k.value for k in cls]}
            )

    @property
    def display_name(self) -> str:
        return self.value.capitalize()

    @property
    def order(self) -> int:
        """表の並び順（COUGH, BREATH, VOICE）"""
        return list(SoundKind).index(self)

class AudioClip(BaseModel):
    """モノラル音声クリップ（全ステージ共通の入力単位）"""
    samples: np.ndarray = Field(..., description="振幅値（公称範囲 [-1, 1]）")
    sample_rate_hz: int = Field(..., description="サンプルレート（Hz）")
    source: str = Field(default="", description="録音の識別ラベル")

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("samples", mode="before")
    @classmethod
    def _as_float_array(cls, value):
        return np.asarray(value, dtype=np.float64).reshape(-1)

    @model_validator(mode="after")
    def _check_invariants(self) -> "AudioClip":
        if self.samples.size == 0:
            raise EmptyAudioError(details={"source": self.source})
        if self.sample_rate_hz <= 0:
            raise InvalidAudioError(
                f"サンプルレートが不正です: {self.sample_rate_hz}",
                details={"source": self.source}
            )
        if not np.all(np.isfinite(self.samples)):
            raise InvalidAudioError("NaN/Inf を含むサンプルがあります", details={"source": self.source})
        return self

    def __len__(self) -> int:
        return int(self.samples.size)

    def with_samples(self, samples: np.ndarray) -> "AudioClip":
        """同じサンプルレート・ラベルで新しいクリップを作成"""
        return AudioClip(samples=samples, sample_rate_hz=self.sample_rate_hz, source=self.source)

class RecordingEntry(BaseModel):
    """マニフェストの1行"""
    path: Path = Field(..., description="WAVファイルパス（マニフェスト基準で解決済み）")
    subject_id: str = Field(..., min_length=1, description="話者ID")
    cohort: Cohort = Field(..., description="COVID または HEALTHY")
    kind: SoundKind = Field(..., description="COUGH / BREATH / VOICE")
    session: int = Field(..., ge=1, description="録音回（1始まり）")

    class Config:
        frozen = True

    @property
    def key(self) -> tuple[str, SoundKind, int]:
        """一意性キー"""
        return (self.subject_id, self.kind, self.session)

    @property
    def label(self) -> str:
        """出力ファイル名・行列ラベル用の識別子"""
        return f"{self.subject_id}_{self.kind.value.lower()}_{self.session}"

class TrimConfig(BaseModel):
    """無音トリミング設定"""
    window_ms: float = Field(default=20.0, gt=0, description="判定窓の長さ（ミリ秒）")
    threshold_dbfs: float = Field(default=-40.0, lt=0, description="有音判定の閾値（dBFS）")

    class Config:
        frozen = True

    def window_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.window_ms * sample_rate_hz / 1000.0))
