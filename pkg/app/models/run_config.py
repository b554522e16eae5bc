from pydantic import BaseModel, Field
from pathlib import Path
from typing import List, Optional, Tuple

from app.models.audio import Cohort, TrimConfig
from app.models.mfcc import MfccConfig
from app.models.similarity import FeatureMode

# 既定の分析対象（非感染者 vs 感染者, 感染者 vs 感染者）
DEFAULT_PAIRS: List[Tuple[Cohort, Cohort]] = [
    (Cohort.HEALTHY, Cohort.COVID),
    (Cohort.COVID, Cohort.COVID),
]

class SynthConfig(BaseModel):
    """合成コーパス生成設定"""
    speakers_per_cohort: int = Field(default=7, ge=1)
    sessions: int = Field(default=1, ge=1)
    sample_rate_hz: int = Field(default=8000, gt=0)
    duration_s: float = Field(default=1.0, gt=0)
    padding_s: float = Field(default=0.1, ge=0)

    class Config:
        frozen = True

class RunConfig(BaseModel):
    """バッチ実行設定（設定ファイル1枚で宣言, CLIフラグで上書き）"""
    mfcc: MfccConfig = Field(default_factory=MfccConfig)
    trim: TrimConfig = Field(default_factory=TrimConfig)
    mode: FeatureMode = Field(default=FeatureMode.FLATTEN_TRUNCATED)
    output_dir: Path = Field(default=Path("out"))
    seed: int = Field(default=42, description="合成コーパス生成専用")
    jobs: Optional[int] = Field(default=None, ge=1, description="並列数（未指定時は設定既定値）")
    pairs: List[Tuple[Cohort, Cohort]] = Field(default_factory=lambda: list(DEFAULT_PAIRS))
    write_kept_only: bool = Field(default=False, description="特徴ファイルを keep_coeffs 行に絞って出力")
    synth: SynthConfig = Field(default_factory=SynthConfig)

    class Config:
        frozen = True
