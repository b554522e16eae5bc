from pydantic import BaseModel, Field, field_validator, model_validator
from typing import List, Tuple
from enum import Enum
import numpy as np

from app.models.audio import Cohort, SoundKind

class FeatureMode(str, Enum):
    """MFCC行列から特徴ベクトルを作る方法"""
    FLATTEN_TRUNCATED = "flatten_truncated"
    MEAN_FRAME = "mean_frame"
    PER_COEFF = "per_coeff"

class FeatureVector(BaseModel):
    """ピアソン相関の入力ベクトル"""
    values: np.ndarray
    mode: FeatureMode
    source: str = ""
    num_rows: int = Field(default=1, ge=1, description="PER_COEFF 用の係数行数（values は行優先）")

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("values", mode="before")
    @classmethod
    def _as_1d(cls, value):
        return np.asarray(value, dtype=np.float64).reshape(-1)

    @model_validator(mode="after")
    def _check(self) -> "FeatureVector":
        if self.values.size < 2:
            raise ValueError("特徴ベクトルの長さは2以上が必要です")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("特徴ベクトルに非有限値が含まれています")
        if self.values.size % self.num_rows != 0:
            raise ValueError("values の長さが num_rows で割り切れません")
        return self

    def rows(self) -> np.ndarray:
        """係数行ごとの2次元ビュー"""
        return self.values.reshape(self.num_rows, -1)

class StrengthLevel(str, Enum):
    """相関の強さ"""
    LOW = "LOW"
    MODERATE = "MODERATE"
    HIGH = "HIGH"

class CorrelationStrength(BaseModel):
    """強さラベル＋符号"""
    level: StrengthLevel
    positive: bool = True

    class Config:
        frozen = True

    @property
    def label(self) -> str:
        """表示用ラベル（例: High positive correlation）"""
        sign = "positive" if self.positive else "negative"
        return f"{self.level.value.capitalize()} {sign} correlation"

class CorrelationMatrix(BaseModel):
    """2グループ間のピアソン相関行列（欠損は NaN）"""
    entries: np.ndarray
    row_labels: List[str]
    col_labels: List[str]
    symmetric: bool = False

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("entries", mode="before")
    @classmethod
    def _as_2d(cls, value):
        return np.atleast_2d(np.asarray(value, dtype=np.float64))

    @model_validator(mode="after")
    def _check(self) -> "CorrelationMatrix":
        rows, cols = self.entries.shape
        if rows != len(self.row_labels) or cols != len(self.col_labels):
            raise ValueError("ラベル数と行列サイズが一致しません")
        present = self.entries[~np.isnan(self.entries)]
        if present.size and (present.min() < -1.0 or present.max() > 1.0):
            raise ValueError("相関係数は [-1, 1] の範囲である必要があります")
        if self.symmetric:
            if rows != cols or self.row_labels != self.col_labels:
                raise ValueError("対称行列は行・列ラベルが同一である必要があります")
            if not np.allclose(self.entries, self.entries.T, rtol=0.0, atol=1e-12, equal_nan=True):
                raise ValueError("対称フラグが立っていますが行列が対称ではありません")
            if not np.allclose(np.diag(self.entries), 1.0, rtol=0.0, atol=1e-12):
                raise ValueError("対称行列の対角成分は1である必要があります")
        return self

    @property
    def shape(self) -> Tuple[int, int]:
        return (int(self.entries.shape[0]), int(self.entries.shape[1]))

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.entries)

    def included_entries(self) -> np.ndarray:
        """集計対象の値（対称: 狭義上三角のみ, 非対称: 全要素）。欠損は除外"""
        if self.symmetric:
            values = self.entries[np.triu_indices(self.entries.shape[0], k=1)]
        else:
            values = self.entries.reshape(-1)
        return values[~np.isnan(values)]

class SimilaritySummary(BaseModel):
    """表の1行（グループ対 × 音の種類）"""
    pair: Tuple[Cohort, Cohort]
    kind: SoundKind
    average: float = Field(..., ge=-1.0, le=1.0)
    variance: float = Field(..., ge=0.0)
    strength: CorrelationStrength
    count: int = Field(..., ge=1, description="集計に含めた相関係数の数")

    class Config:
        frozen = True

    @property
    def test_name(self) -> str:
        """表の Test 列（例: Non-Covid-19 vs Covid-19）"""
        return f"{self.pair[0].display_name} vs {self.pair[1].display_name}"

class AnalysisSelection(BaseModel):
    """1回の相関分析の対象（グループ対と音の種類）"""
    pair: Tuple[Cohort, Cohort]
    kind: SoundKind

    class Config:
        frozen = True

    @property
    def slug(self) -> str:
        """出力ファイル名（例: healthy_vs_covid_cough）"""
        return f"{self.pair[0].value.lower()}_vs_{self.pair[1].value.lower()}_{self.kind.value.lower()}"
