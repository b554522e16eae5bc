"""
アトミックなファイル書き込み（一時ファイル＋リネーム）
"""
from pathlib import Path
from typing import Union
import os
import tempfile
import uuid

import aiofiles
import aiofiles.os

from app.core.exceptions import ReportIOError

Payload = Union[bytes, str]

def _as_bytes(data: Payload) -> bytes:
    return data.encode("utf-8") if isinstance(data, str) else data

def write_atomic(path: Union[str, Path], data: Payload) -> Path:
    """同期版: 同じディレクトリの一時ファイルに書いてから置き換える"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(_as_bytes(data))
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
    except OSError as e:
        raise ReportIOError(f"ファイルの書き込みに失敗しました: {path}: {e}", details={"path": str(path)})
    return path

async def write_atomic_async(path: Union[str, Path], data: Payload) -> Path:
    """非同期版（aiofiles）: バッチ処理のワーカーから使用"""
    path = Path(path)
    tmp_path = path.with_name(f".{path.name}.{uuid.uuid4().hex}.tmp")
    try:
        await aiofiles.os.makedirs(path.parent, exist_ok=True)
        async with aiofiles.open(tmp_path, "wb") as f:
            await f.write(_as_bytes(data))
        await aiofiles.os.replace(tmp_path, path)
    except OSError as e:
        if tmp_path.exists():
            tmp_path.unlink()
        raise ReportIOError(f"ファイルの書き込みに失敗しました: {path}: {e}", details={"path": str(path)})
    return path
