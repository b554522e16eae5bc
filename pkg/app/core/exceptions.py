"""
カスタム例外クラスとエラーハンドリング
"""
from fastapi import HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from typing import Optional, Any
import logging

logger = logging.getLogger(__name__)

class ErrorDetail(BaseModel):
    """エラー詳細情報"""
    error_code: str
    message: str
    details: Optional[Any] = None

class APIResponse(BaseModel):
    """標準APIレスポンス形式"""
    success: bool
    data: Optional[Any] = None
    error: Optional[ErrorDetail] = None

# カスタム例外クラス
class CepstraError(Exception):
    """ベース例外クラス（CLI・API共通）"""
    def __init__(
        self,
        error_code: str,
        message: str,
        status_code: int = 500,
        details: Optional[Any] = None
    ):
        self.error_code = error_code
        self.message = message
        self.status_code = status_code
        self.details = details
        super().__init__(message)

# --- 音声入出力 ---

class AudioFileNotFoundError(CepstraError):
    """音声ファイルが見つからないエラー"""
    def __init__(self, message: str = "音声ファイルが見つかりません", details: Optional[Any] = None):
        super().__init__("FILE_NOT_FOUND", message, 404, details)

class UnsupportedEncodingError(CepstraError):
    """サポート外のWAVエンコーディング"""
    def __init__(self, message: str = "サポートされていないエンコーディングです", details: Optional[Any] = None):
        super().__init__("UNSUPPORTED_ENCODING", message, 415, details)

class CorruptHeaderError(CepstraError):
    """WAVヘッダー破損（チャンクサイズ不整合）"""
    def __init__(self, message: str = "WAVヘッダーが破損しています", details: Optional[Any] = None):
        super().__init__("CORRUPT_HEADER", message, 422, details)

class EmptyAudioError(CepstraError):
    """サンプル数ゼロ"""
    def __init__(self, message: str = "音声データが空です", details: Optional[Any] = None):
        super().__init__("EMPTY_AUDIO", message, 422, details)

class InvalidAudioError(CepstraError):
    """サンプル値やサンプルレートが不正"""
    def __init__(self, message: str = "音声データが不正です", details: Optional[Any] = None):
        super().__init__("INVALID_AUDIO", message, 422, details)

class AllSilentError(CepstraError):
    """閾値を超える窓が存在しない（全区間無音）"""
    def __init__(self, message: str = "全区間が無音と判定されました", details: Optional[Any] = None):
        super().__init__("ALL_SILENT", message, 422, details)

# --- マニフェスト ---

class MissingColumnError(CepstraError):
    """マニフェストの必須列不足"""
    def __init__(self, message: str = "マニフェストに必須列がありません", details: Optional[Any] = None):
        super().__init__("MISSING_COLUMN", message, 400, details)

class BadEnumValueError(CepstraError):
    """cohort / kind の値が不正"""
    def __init__(self, message: str = "列挙値が不正です", details: Optional[Any] = None):
        super().__init__("BAD_ENUM_VALUE", message, 400, details)

class DuplicateEntryError(CepstraError):
    """(subject_id, kind, session) の重複"""
    def __init__(self, message: str = "マニフェストに重複エントリがあります", details: Optional[Any] = None):
        super().__init__("DUPLICATE_ENTRY", message, 400, details)

class InvalidManifestRowError(CepstraError):
    """マニフェスト行の値が不正（session など）"""
    def __init__(self, message: str = "マニフェスト行が不正です", details: Optional[Any] = None):
        super().__init__("INVALID_MANIFEST_ROW", message, 400, details)

# --- 設定・MFCC ---

class ConfigurationError(CepstraError):
    """設定値エラー"""
    def __init__(
        self,
        message: str = "設定値が不正です",
        details: Optional[Any] = None,
        error_code: str = "CONFIGURATION_ERROR"
    ):
        super().__init__(error_code, message, 400, details)

class NonPowerOfTwoFrameError(ConfigurationError):
    """フレーム長が2のべき乗でない"""
    def __init__(self, message: str = "フレーム長は2のべき乗である必要があります", details: Optional[Any] = None):
        super().__init__(message, details, error_code="NON_POWER_OF_TWO_FRAME")

class TooManyFiltersError(ConfigurationError):
    """メルフィルタが FFT ビン上で潰れる"""
    def __init__(self, message: str = "フィルタ数がFFT分解能に対して多すぎます", details: Optional[Any] = None):
        super().__init__(message, details, error_code="TOO_MANY_FILTERS")

class SignalTooShortError(CepstraError):
    """信号長がフレーム長未満"""
    def __init__(self, message: str = "信号がフレーム長より短いです", details: Optional[Any] = None):
        super().__init__("SIGNAL_TOO_SHORT", message, 422, details)

# --- 相関 ---

class LengthMismatchError(CepstraError):
    """系列長（または係数数）の不一致"""
    def __init__(self, message: str = "系列長が一致しません", details: Optional[Any] = None):
        super().__init__("LENGTH_MISMATCH", message, 422, details)

class DegenerateInputError(CepstraError):
    """分散ゼロの系列（相関係数が未定義）"""
    def __init__(self, message: str = "分散ゼロの系列のため相関係数を計算できません", details: Optional[Any] = None):
        super().__init__("DEGENERATE_INPUT", message, 422, details)

class TooFewFramesError(CepstraError):
    """切り詰め後のフレーム数不足"""
    def __init__(self, message: str = "フレーム数が不足しています", details: Optional[Any] = None):
        super().__init__("TOO_FEW_FRAMES", message, 422, details)

class TooFewCoeffsError(CepstraError):
    """MEAN_FRAME で係数が2未満"""
    def __init__(self, message: str = "係数の数が不足しています", details: Optional[Any] = None):
        super().__init__("TOO_FEW_COEFFS", message, 422, details)

class EmptyGroupError(CepstraError):
    """比較グループが空"""
    def __init__(self, message: str = "比較グループが空です", details: Optional[Any] = None):
        super().__init__("EMPTY_GROUP", message, 422, details)

class NoEntriesError(CepstraError):
    """集計対象の相関係数が存在しない"""
    def __init__(self, message: str = "集計対象のエントリがありません", details: Optional[Any] = None):
        super().__init__("NO_ENTRIES", message, 422, details)

class OutOfRangeError(CepstraError):
    """相関係数が [-1, 1] の範囲外"""
    def __init__(self, message: str = "相関係数が範囲外です", details: Optional[Any] = None):
        super().__init__("OUT_OF_RANGE", message, 422, details)

# --- レポート ---

class EmptyReportError(CepstraError):
    """サマリーが空のレポート"""
    def __init__(self, message: str = "レポートが空です", details: Optional[Any] = None):
        super().__init__("EMPTY_REPORT", message, 422, details)

class ReportIOError(CepstraError):
    """出力ファイルの書き込み失敗"""
    def __init__(self, message: str = "ファイルの書き込みに失敗しました", details: Optional[Any] = None):
        super().__init__("IO_ERROR", message, 500, details)

# エラーハンドラー
async def api_exception_handler(request: Request, exc: CepstraError) -> JSONResponse:
    """カスタム例外ハンドラー"""
    logger.error(f"API Exception: {exc.error_code} - {exc.message}", extra={"details": exc.details})

    response = APIResponse(
        success=False,
        error=ErrorDetail(
            error_code=exc.error_code,
            message=exc.message,
            details=exc.details
        )
    )

    return JSONResponse(
        status_code=exc.status_code,
        content=response.model_dump()
    )

async def http_exception_handler(request: Request, exc: HTTPException) -> JSONResponse:
    """HTTPException ハンドラー"""
    logger.error(f"HTTP Exception: {exc.status_code} - {exc.detail}")

    response = APIResponse(
        success=False,
        error=ErrorDetail(
            error_code="HTTP_ERROR",
            message=str(exc.detail),
            details={"status_code": exc.status_code}
        )
    )

    return JSONResponse(
        status_code=exc.status_code,
        content=response.model_dump()
    )

async def general_exception_handler(request: Request, exc: Exception) -> JSONResponse:
    """一般的な例外ハンドラー"""
    logger.error(f"Unexpected error: {type(exc).__name__} - {str(exc)}", exc_info=True)

    response = APIResponse(
        success=False,
        error=ErrorDetail(
            error_code="INTERNAL_SERVER_ERROR",
            message="内部サーバーエラーが発生しました",
            details={"exception_type": type(exc).__name__}
        )
    )

    return JSONResponse(
        status_code=500,
        content=response.model_dump()
    )

def create_success_response(data: Any = None) -> APIResponse:
    """成功レスポンスを作成"""
    return APIResponse(success=True, data=data)
