"""
音声入出力サービス
WAVの読み書き、マニフェスト読込、前後の無音トリミング
"""
from pathlib import Path
from typing import Dict, List, Tuple, Union
import csv
import io
import struct

import numpy as np
import soundfile as sf
from openpyxl import load_workbook
from pydantic import ValidationError

from app.core.exceptions import (
    AllSilentError,
    AudioFileNotFoundError,
    ConfigurationError,
    CorruptHeaderError,
    DuplicateEntryError,
    EmptyAudioError,
    InvalidManifestRowError,
    MissingColumnError,
    UnsupportedEncodingError,
)
from app.core.logging import get_logger
from app.models.audio import AudioClip, Cohort, RecordingEntry, SoundKind, TrimConfig
from app.utils.atomic_io import write_atomic

logger = get_logger(__name__)

# 対応エンコーディング（fmt コード 1: PCM 整数, 3: IEEE float）
SUPPORTED_SUBTYPES = {"PCM_16", "PCM_24", "FLOAT"}
MAX_CHANNELS = 2

# RMS の下限（log 前）。ゼロ窓は -200 dBFS になる
RMS_FLOOR = 1e-10

MANIFEST_COLUMNS = ("path", "subject_id", "cohort", "kind", "session")

def _check_chunk_layout(data: bytes, source: str) -> None:
    """RIFFチャンクの宣言サイズがファイル長と整合しているか確認"""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise UnsupportedEncodingError(
            "RIFF/WAVE 形式ではありません",
            details={"source": source}
        )

    seen = set()
    offset = 12
    while offset + 8 <= len(data):
        chunk_id, size = struct.unpack("<4sI", data[offset:offset + 8])
        if offset + 8 + size > len(data):
            raise CorruptHeaderError(
                f"チャンク {chunk_id!r} のサイズがファイル長を超えています",
                details={"source": source, "chunk": chunk_id.decode("latin-1"), "offset": offset, "size": size}
            )
        seen.add(chunk_id)
        # 奇数長チャンクはパディング1バイト
        offset += 8 + size + (size & 1)

    missing = [name.decode() for name in (b"fmt ", b"data") if name not in seen]
    if missing:
        raise CorruptHeaderError(
            f"必須チャンクがありません: {missing}",
            details={"source": source, "missing": missing}
        )

def downmix(channels: np.ndarray) -> np.ndarray:
    """チャンネル平均でモノラル化（frames × channels → frames）"""
    channels = np.asarray(channels, dtype=np.float64)
    if channels.ndim == 1:
        return channels
    return channels.mean(axis=1)

def decode_wav(data: bytes, source: str = "") -> AudioClip:
    """
    WAVバイト列をデコード

    Args:
        data: WAVファイルの内容
        source: ログ・エラー用の識別子

    Returns:
        AudioClip: モノラル化・正規化済みクリップ

    Raises:
        UnsupportedEncodingError: 対応外のコーデック／チャンネル数
        CorruptHeaderError: チャンク構造の不整合
        EmptyAudioError: サンプル数ゼロ
    """
    _check_chunk_layout(data, source)

    try:
        with sf.SoundFile(io.BytesIO(data)) as wav:
            subtype = wav.subtype
            channels = wav.channels
            sample_rate = wav.samplerate
            frames = wav.frames
            if subtype not in SUPPORTED_SUBTYPES:
                raise UnsupportedEncodingError(
                    f"サポートされていないエンコーディング: {subtype}",
                    details={"source": source, "subtype": subtype, "supported": sorted(SUPPORTED_SUBTYPES)}
                )
            if channels > MAX_CHANNELS:
                raise UnsupportedEncodingError(
                    f"チャンネル数 {channels} には対応していません",
                    details={"source": source, "channels": channels}
                )
            if frames == 0:
                raise EmptyAudioError(details={"source": source})
            # 整数PCMは型の最大振幅（2^15, 2^23）で割られて読み込まれる
            array = wav.read(dtype="float64", always_2d=True)
    except RuntimeError as e:
        raise CorruptHeaderError(
            f"WAVヘッダーを解析できません: {e}",
            details={"source": source}
        )

    samples = downmix(array)
    if samples.size == 0:
        raise EmptyAudioError(details={"source": source})

    logger.debug(f"WAV読込: {source} ({subtype}, {channels}ch, {sample_rate}Hz, {samples.size}サンプル)")
    return AudioClip(samples=samples, sample_rate_hz=sample_rate, source=source)

def load_wav(path: Union[str, Path]) -> AudioClip:
    """WAVファイルを読み込み AudioClip を返す"""
    path = Path(path)
    if not path.is_file():
        raise AudioFileNotFoundError(
            f"音声ファイルが見つかりません: {path}",
            details={"path": str(path)}
        )
    return decode_wav(path.read_bytes(), source=str(path))

def encode_wav(clip: AudioClip) -> bytes:
    """16bit PCM WAV にエンコード（round(x·32768) を int16 範囲にクリップ）"""
    quantized = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    buffer = io.BytesIO()
    sf.write(buffer, quantized, clip.sample_rate_hz, format="WAV", subtype="PCM_16")
    return buffer.getvalue()

def write_wav(clip: AudioClip, path: Union[str, Path]) -> Path:
    """16bit PCM WAV として書き出し（一時ファイル＋リネーム）"""
    return write_atomic(path, encode_wav(clip))

def window_levels_dbfs(clip: AudioClip, cfg: TrimConfig) -> Tuple[np.ndarray, int]:
    """
    連続・非重複の窓ごとの RMS を dBFS で返す

    Returns:
        (各窓のレベル, 窓長サンプル数)。末尾の端数窓も1窓として扱う
    """
    window = cfg.window_samples(clip.sample_rate_hz)
    if window < 1:
        raise ConfigurationError(
            f"窓長 {cfg.window_ms}ms はサンプルレート {clip.sample_rate_hz}Hz で1サンプル未満です",
            details={"window_ms": cfg.window_ms, "sample_rate_hz": clip.sample_rate_hz}
        )

    n = len(clip)
    starts = np.arange(0, n, window)
    counts = np.diff(np.append(starts, n))
    energy = np.add.reduceat(clip.samples ** 2, starts)
    rms = np.sqrt(energy / counts)
    levels = 20.0 * np.log10(np.maximum(rms, RMS_FLOOR))
    return levels, window

def trim_span(clip: AudioClip, cfg: TrimConfig) -> Tuple[int, int]:
    """閾値を超える最初の窓の先頭から最後の窓の末尾までの範囲 [start, end)"""
    levels, window = window_levels_dbfs(clip, cfg)
    active = np.flatnonzero(levels > cfg.threshold_dbfs)
    if active.size == 0:
        raise AllSilentError(
            f"閾値 {cfg.threshold_dbfs} dBFS を超える窓がありません: {clip.source}",
            details={"source": clip.source, "peak_dbfs": float(levels.max())}
        )
    start = int(active[0]) * window
    end = min(len(clip), (int(active[-1]) + 1) * window)
    return start, end

def trim_silence(clip: AudioClip, cfg: TrimConfig) -> AudioClip:
    """
    前後の無音区間を除去（内部の無音窓は残す）

    Raises:
        AllSilentError: 閾値を超える窓が1つもない
    """
    start, end = trim_span(clip, cfg)
    removed = len(clip) - (end - start)
    logger.debug(f"無音トリミング: {clip.source} 先頭{start} / 末尾{len(clip) - end} サンプル除去")
    if removed == 0:
        return clip
    return clip.with_samples(clip.samples[start:end])

def _read_manifest_rows(path: Path) -> Tuple[List[str], List[Dict[str, str]]]:
    """CSV / xlsx からヘッダーと行（文字列）を読み込む"""
    if path.suffix.lower() == ".xlsx":
        workbook = load_workbook(path, read_only=True, data_only=True)
        try:
            sheet = workbook[workbook.sheetnames[0]]
            rows = [
                ["" if cell is None else str(cell).strip() for cell in row]
                for row in sheet.iter_rows(values_only=True)
            ]
        finally:
            workbook.close()
        if not rows:
            return [], []
        header = rows[0]
        records = [dict(zip(header, row)) for row in rows[1:]]
        return header, records

    with open(path, newline="", encoding="utf-8-sig") as f:
        reader = csv.DictReader(f)
        header = [name.strip() for name in (reader.fieldnames or [])]
        reader.fieldnames = header
        records = [{k: (v or "").strip() for k, v in row.items() if k is not None} for row in reader]
    return header, records

def load_manifest(path: Union[str, Path]) -> List[RecordingEntry]:
    """
    マニフェスト（CSV: path,subject_id,cohort,kind,session）を読み込む

    相対パスはマニフェストのディレクトリ基準で解決する。

    Raises:
        MissingColumnError: 必須列の不足
        BadEnumValueError: cohort / kind が不正
        DuplicateEntryError: (subject_id, kind, session) の重複
        InvalidManifestRowError: session などの値が不正
    """
    path = Path(path)
    if not path.is_file():
        raise AudioFileNotFoundError(
            f"マニフェストが見つかりません: {path}",
            details={"path": str(path)}
        )

    header, records = _read_manifest_rows(path)
    missing = [column for column in MANIFEST_COLUMNS if column not in header]
    if missing:
        raise MissingColumnError(
            f"マニフェストに必須列がありません: {missing}",
            details={"path": str(path), "missing": missing, "header": header}
        )
    extra = [column for column in header if column and column not in MANIFEST_COLUMNS]
    if extra:
        logger.warning(f"マニフェストの未知の列を無視します: {extra}")

    base_dir = path.parent
    entries: List[RecordingEntry] = []
    seen: Dict[tuple, int] = {}

    # 行番号はヘッダーを1行目として数える
    for line_no, record in enumerate(records, start=2):
        if not any(record.get(column) for column in MANIFEST_COLUMNS):
            continue

        cohort = Cohort.parse(record["cohort"])
        kind = SoundKind.parse(record["kind"])
        try:
            session = int(record["session"])
        except ValueError:
            raise InvalidManifestRowError(
                f"session が整数ではありません（{line_no}行目）: {record['session']!r}",
                details={"line": line_no, "session": record["session"]}
            )

        raw_path = Path(record["path"])
        resolved = raw_path if raw_path.is_absolute() else base_dir / raw_path

        try:
            entry = RecordingEntry(
                path=resolved,
                subject_id=record["subject_id"],
                cohort=cohort,
                kind=kind,
                session=session
            )
        except ValidationError as e:
            raise InvalidManifestRowError(
                f"マニフェスト行が不正です（{line_no}行目）",
                details={"line": line_no, "errors": e.errors(include_url=False)}
            )

        if entry.key in seen:
            raise DuplicateEntryError(
                f"重複エントリ（{line_no}行目, 初出 {seen[entry.key]}行目）: {entry.label}",
                details={"line": line_no, "first_line": seen[entry.key], "label": entry.label}
            )
        seen[entry.key] = line_no
        entries.append(entry)

    logger.info(f"マニフェスト読込完了: {path} ({len(entries)}件)")
    return entries
