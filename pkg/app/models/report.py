from pydantic import BaseModel, Field, model_validator
from typing import Any, Dict, List

from app.models.similarity import CorrelationMatrix, SimilaritySummary

class Provenance(BaseModel):
    """再現性のための来歴情報（時刻などの可変値は含めない）"""
    config: Dict[str, Any] = Field(default_factory=dict, description="実行時設定のスナップショット")
    manifest_digest: str = Field(..., description="マニフェストの SHA-256")
    tool_version: str = Field(..., description="ツールバージョン")

    class Config:
        frozen = True

class AnalysisReport(BaseModel):
    """相関分析レポート（表＋行列一式）"""
    summaries: List[SimilaritySummary] = Field(default_factory=list)
    matrices: Dict[str, CorrelationMatrix] = Field(default_factory=dict)
    provenance: Provenance

    class Config:
        frozen = True

    @model_validator(mode="after")
    def _unique_rows(self) -> "AnalysisReport":
        keys = [(s.pair, s.kind) for s in self.summaries]
        if len(keys) != len(set(keys)):
            raise ValueError("(pair, kind) が重複したサマリーがあります")
        return self
