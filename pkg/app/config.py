from pydantic_settings import BaseSettings
from typing import Optional
from functools import lru_cache
import logging

logger = logging.getLogger(__name__)

class Settings(BaseSettings):
    """アプリケーション設定管理クラス（環境変数プレフィックス: CEPSTRA_）"""

    # アプリケーション基本設定
    app_name: str = "Cepstra"
    app_version: str = "1.0.0"
    debug: bool = False
    environment: str = "development"

    # サーバー設定
    host: str = "0.0.0.0"
    port: int = 8000

    # ログ設定（CEPSTRA_LOG でレベルを指定）
    log: str = "INFO"
    log_format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # バッチ処理設定
    default_jobs: int = 4

    # アップロード制限（API）
    max_upload_bytes: int = 10 * 1024 * 1024  # 10MB

    # CORS設定
    cors_origins: list[str] = [
        "http://localhost:3000",  # 開発環境用
        "http://localhost:3001"   # 開発環境用
    ]
    cors_allow_credentials: bool = True
    cors_allow_methods: list[str] = ["GET", "POST", "OPTIONS"]
    cors_allow_headers: list[str] = ["*"]

    class Config:
        env_prefix = "CEPSTRA_"
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = False
        extra = "ignore"

    def resolve_jobs(self, jobs: Optional[int]) -> int:
        """並列数を決定（未指定時は既定値）"""
        if jobs is None or jobs < 1:
            return max(1, self.default_jobs)
        return jobs

@lru_cache()
def get_settings() -> Settings:
    """設定インスタンスを取得（キャッシュ付き）"""
    settings = Settings()
    logger.debug(f"設定読込 - environment: {settings.environment}, log: {settings.log}")
    return settings

# グローバル設定インスタンス
settings = get_settings()
