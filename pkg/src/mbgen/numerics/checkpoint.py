"""Checkpoint files: named arrays plus a JSON metadata record, in one ``.npz``.

Layout (a standard numpy zip archive, readable with ``np.load``)::

    <name>.npy      one entry per array, dtype and shape preserved
    __meta__.npy    uint8 bytes of a UTF-8 JSON object:
                    {"format": "mbgen-checkpoint", "version": 1,
                     "kind": ..., "config": {...}, "config_hash": "<sha256>",
                     "extra": {...}}

``config_hash`` is the SHA-256 of the config serialized with sorted keys.
Writes go to a temporary file in the target directory and are renamed into
place, so a reader never sees a half-written checkpoint. Zip entries carry a
fixed timestamp, so equal contents give byte-identical files.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
import zipfile
from pathlib import Path

import numpy as np

FORMAT = "mbgen-checkpoint"
VERSION = 1
_META = "__meta__"


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def atomic_write_bytes(path: str | os.PathLike, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_checkpoint(path, arrays: dict[str, np.ndarray], config: dict, kind: str = "model",
                    extra: dict | None = None) -> str:
    if _META in arrays:
        raise ValueError(f"{_META!r} is reserved")
    meta = {"format": FORMAT, "version": VERSION, "kind": kind, "config": config,
            "config_hash": config_hash(config), "extra": extra or {}}
    payload = {k: np.asarray(v) for k, v in arrays.items()}
    payload[_META] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    atomic_write_bytes(path, _npz_bytes(payload))
    return meta["config_hash"]


def _npz_bytes(arrays: dict[str, np.ndarray]) -> bytes:
    """``np.savez`` layout, minus the wall-clock entry timestamps."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, arr, allow_pickle=False)
    return buf.getvalue()


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Return ``(arrays, meta)``; raises ``ValueError`` on a foreign or corrupted file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as z:
        if _META not in z.files:
            raise ValueError(f"{path} is not an {FORMAT} file")
        meta = json.loads(bytes(z[_META]).decode())
        arrays = {k: z[k] for k in z.files if k != _META}
    if meta.get("format") != FORMAT:
        raise ValueError(f"{path}: unexpected format {meta.get('format')!r}")
    if meta.get("config_hash") != config_hash(meta.get("config", {})):
        raise ValueError(f"{path}: config hash mismatch")
    return arrays, meta
