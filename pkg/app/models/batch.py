from pydantic import BaseModel, Field
from typing import Any, Dict, List, Optional

class FileResult(BaseModel):
    """バッチ処理の1ファイル分の結果"""
    label: str = Field(..., description="エントリのラベル")
    ok: bool = Field(default=True)
    outputs: List[str] = Field(default_factory=list, description="書き出したファイル")
    error_code: Optional[str] = None
    message: Optional[str] = None
    info: Dict[str, Any] = Field(default_factory=dict, description="除去サンプル数などの付帯情報")

class CommandResult(BaseModel):
    """サブコマンド1回分の結果"""
    command: str
    files: List[FileResult] = Field(default_factory=list)
    outputs: List[str] = Field(default_factory=list, description="コマンド全体の出力ファイル")
    warnings: List[str] = Field(default_factory=list)

    @property
    def failures(self) -> List[FileResult]:
        return [f for f in self.files if not f.ok]

    @property
    def exit_code(self) -> int:
        """1件でも失敗があれば 1"""
        return 1 if self.failures else 0
