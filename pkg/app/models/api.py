from pydantic import BaseModel, Field
from typing import List, Optional

from app.models.mfcc import MfccConfig

class MfccResponse(BaseModel):
    """MFCC抽出APIのレスポンス"""
    source: str = Field(..., description="アップロードされたファイル名")
    sample_rate_hz: int
    trimmed: bool = Field(..., description="無音トリミングを行ったか")
    shape: List[int] = Field(..., description="[係数の数, フレーム数]")
    coeffs: List[List[float]] = Field(..., description="行 = 係数, 列 = フレーム")
    config: MfccConfig

class SimilarityResponse(BaseModel):
    """2録音の類似度APIのレスポンス"""
    labels: List[str]
    mode: str
    mfcc_r: Optional[float] = Field(None, description="MFCC特徴量のピアソン相関（計算不能なら null）")
    waveform_r: Optional[float] = Field(None, description="時間波形の相関")
    spectrum_r: Optional[float] = Field(None, description="平均パワースペクトルの相関")
    strength: Optional[str] = Field(None, description="MFCC相関の強さラベル")
    notes: List[str] = Field(default_factory=list, description="計算できなかった指標の理由")
