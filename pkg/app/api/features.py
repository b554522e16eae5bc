from fastapi import APIRouter, File, Form, HTTPException, UploadFile
from typing import Callable, List, Optional
import asyncio
import logging

from app.config import settings
from app.core.exceptions import CepstraError
from app.models.api import MfccResponse, SimilarityResponse
from app.models.audio import AudioClip, TrimConfig
from app.models.mfcc import MfccConfig
from app.models.similarity import FeatureMode
from app.services.audio_service import decode_wav, trim_silence
from app.services.mfcc_service import MfccService, select_coeffs
from app.services.similarity_service import (
    classify_strength,
    correlate_pair,
    spectrum_correlation,
    waveform_correlation,
)

logger = logging.getLogger(__name__)

router = APIRouter()

# 既定設定のサービスインスタンス
mfcc_config = MfccConfig()
trim_config = TrimConfig()
mfcc_service = MfccService(mfcc_config)

async def _read_clip(upload: UploadFile, trim: bool) -> AudioClip:
    """アップロードされたWAVをデコード（サイズ上限あり）"""
    # 上限 + 1 バイトまで読めば超過を判定できる
    data = await upload.read(settings.max_upload_bytes + 1)
    if len(data) > settings.max_upload_bytes:
        raise HTTPException(
            status_code=413,
            detail=f"ファイルサイズが上限 {settings.max_upload_bytes} バイトを超えています: {upload.filename}"
        )
    clip = decode_wav(data, source=upload.filename or "upload.wav")
    if trim:
        clip = trim_silence(clip, trim_config)
    return clip

def _try_metric(name: str, fn: Callable[[], float], notes: List[str]) -> Optional[float]:
    try:
        return fn()
    except CepstraError as e:
        notes.append(f"{name}: {e.error_code} - {e.message}")
        return None

@router.post("/mfcc", response_model=MfccResponse)
async def extract_mfcc(
    file: UploadFile = File(...),
    keep: Optional[int] = Form(None),
    trim: bool = Form(True)
):
    """
    WAVファイルからMFCC行列を抽出する

    Args:
        file: WAVファイル（16/24bit PCM または 32bit float）
        keep: 先頭から返す係数の数（未指定なら全係数）
        trim: 前後の無音を除去するか

    Returns:
        MfccResponse: MFCC行列
    """
    clip = await _read_clip(file, trim)
    matrix = await asyncio.to_thread(mfcc_service.extract, clip)
    if keep is not None:
        matrix = select_coeffs(matrix, keep)
    logger.info(f"MFCC API: {clip.source} -> {matrix.shape}")
    return MfccResponse(
        source=clip.source,
        sample_rate_hz=clip.sample_rate_hz,
        trimmed=trim,
        shape=list(matrix.shape),
        coeffs=matrix.coeffs.tolist(),
        config=matrix.config
    )

@router.post("/similarity", response_model=SimilarityResponse)
async def compare_recordings(
    file_a: UploadFile = File(...),
    file_b: UploadFile = File(...),
    mode: FeatureMode = Form(FeatureMode.FLATTEN_TRUNCATED),
    trim: bool = Form(True)
):
    """
    2つの録音の類似度を算出する

    MFCC特徴量の相関に加えて、比較用に時間波形・平均スペクトルの相関も返す。
    計算できない指標は null とし、理由を notes に入れる。
    """
    a = await _read_clip(file_a, trim)
    b = await _read_clip(file_b, trim)

    notes: List[str] = []
    features_a, features_b = await asyncio.gather(
        asyncio.to_thread(mfcc_service.extract_kept, a),
        asyncio.to_thread(mfcc_service.extract_kept, b)
    )
    mfcc_r = _try_metric("mfcc_r", lambda: correlate_pair(features_a, features_b, mode), notes)
    waveform_r = _try_metric("waveform_r", lambda: waveform_correlation(a, b), notes)
    spectrum_r = _try_metric("spectrum_r", lambda: spectrum_correlation(a, b, mfcc_config.fft_size), notes)

    return SimilarityResponse(
        labels=[a.source, b.source],
        mode=mode.value,
        mfcc_r=mfcc_r,
        waveform_r=waveform_r,
        spectrum_r=spectrum_r,
        strength=None if mfcc_r is None else classify_strength(mfcc_r).label,
        notes=notes
    )
