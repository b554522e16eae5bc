from pydantic import BaseModel, Field, field_validator, model_validator
import numpy as np

from app.core.exceptions import ConfigurationError, NonPowerOfTwoFrameError

class MfccConfig(BaseModel):
    """MFCC抽出パラメータ"""
    pre_emphasis_a: float = Field(default=0.97, ge=0.0, lt=1.0, description="プリエンファシス係数（0で無効）")
    frame_len_samples: int = Field(default=256, gt=1, description="フレーム長 N（2のべき乗）")
    hop_samples: int = Field(default=100, gt=0, description="フレームシフト M（M < N）")
    num_filters: int = Field(default=25, gt=0, description="三角フィルタ数")
    num_coeffs: int = Field(default=13, gt=0, description="算出する係数の数（n = 1..num_coeffs）")
    keep_coeffs: int = Field(default=3, gt=0, description="相関分析に使う先頭係数の数")
    log_floor: float = Field(default=1e-10, gt=0.0, description="対数前のフロア値 ε")

    class Config:
        frozen = True

    @model_validator(mode="after")
    def _check_invariants(self) -> "MfccConfig":
        n = self.frame_len_samples
        if n & (n - 1) != 0:
            raise NonPowerOfTwoFrameError(
                f"フレーム長 {n} は2のべき乗ではありません",
                details={"frame_len_samples": n}
            )
        if self.hop_samples >= n:
            raise ConfigurationError(
                f"フレームシフトはフレーム長より小さい必要があります（M={self.hop_samples}, N={n}）",
                details={"hop_samples": self.hop_samples, "frame_len_samples": n}
            )
        if not (self.keep_coeffs <= self.num_coeffs <= self.num_filters):
            raise ConfigurationError(
                "keep_coeffs <= num_coeffs <= num_filters を満たしていません",
                details={
                    "keep_coeffs": self.keep_coeffs,
                    "num_coeffs": self.num_coeffs,
                    "num_filters": self.num_filters
                }
            )
        return self

    @property
    def fft_size(self) -> int:
        return self.frame_len_samples

class FrameMatrix(BaseModel):
    """フレーム分割結果（num_frames × N）"""
    frames: np.ndarray
    frame_len_samples: int
    hop_samples: int
    sample_rate_hz: int

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("frames", mode="before")
    @classmethod
    def _as_2d(cls, value):
        return np.atleast_2d(np.asarray(value, dtype=np.float64))

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    def with_frames(self, frames: np.ndarray) -> "FrameMatrix":
        return FrameMatrix(
            frames=frames,
            frame_len_samples=self.frame_len_samples,
            hop_samples=self.hop_samples,
            sample_rate_hz=self.sample_rate_hz
        )

class MelFilterBank(BaseModel):
    """三角メルフィルタバンク（num_filters × (fft_size/2 + 1)）"""
    weights: np.ndarray
    center_freqs_hz: np.ndarray
    boundaries_hz: np.ndarray
    sample_rate_hz: int
    fft_size: int

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @property
    def num_filters(self) -> int:
        return int(self.weights.shape[0])

    @property
    def num_bins(self) -> int:
        return int(self.weights.shape[1])

class MfccMatrix(BaseModel):
    """MFCC行列（行 = 係数 n=1.., 列 = フレーム）"""
    coeffs: np.ndarray
    config: MfccConfig
    source: str = ""

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("coeffs", mode="before")
    @classmethod
    def _as_2d(cls, value):
        return np.atleast_2d(np.asarray(value, dtype=np.float64))

    @model_validator(mode="after")
    def _check_finite(self) -> "MfccMatrix":
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError(f"MFCC行列に非有限値が含まれています: {self.source}")
        return self

    @property
    def num_coeffs(self) -> int:
        return int(self.coeffs.shape[0])

    @property
    def num_frames(self) -> int:
        return int(self.coeffs.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_coeffs, self.num_frames)
