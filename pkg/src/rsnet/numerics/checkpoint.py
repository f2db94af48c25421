"""Byte-stable ``.npz`` archives for parameters and datasets.

Layout: a standard zip (readable by ``numpy.load``) whose members are
``<key>.npy`` arrays in sorted key order plus ``__meta__.json``. Member
timestamps are pinned, so identical content always yields identical bytes.
The metadata always carries ``format`` and ``version`` fields.
"""

from __future__ import annotations

import io
import json
import os
import zipfile
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = "rsnet-checkpoint"
CHECKPOINT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class FormatError(ValueError):
    """File is not a recognised archive or has an incompatible version."""


def write_archive(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo("__meta__.json", date_time=_EPOCH)
        zf.writestr(info, json.dumps(meta, sort_keys=True, indent=1))
        for key in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[key]), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{key}.npy", date_time=_EPOCH), buf.getvalue())
    os.replace(tmp, path)


def read_archive(path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        zf = zipfile.ZipFile(path)
    except (zipfile.BadZipFile, FileNotFoundError) as exc:
        raise FormatError(f"{path}: not a readable archive ({exc})") from exc
    with zf:
        names = zf.namelist()
        if "__meta__.json" not in names:
            raise FormatError(f"{path}: missing __meta__.json")
        meta = json.loads(zf.read("__meta__.json"))
        arrays = {}
        for name in names:
            if name.endswith(".npy"):
                arrays[name[:-4]] = np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
    return arrays, meta


def save_checkpoint(path, state: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write a key -> array parameter map; round trip is bit-exact."""
    full = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION}
    full.update(meta or {})
    write_archive(path, {k: np.asarray(v, dtype=np.float64) for k, v in state.items()}, full)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    arrays, meta = read_archive(path)
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: not a checkpoint (format={meta.get('format')!r})")
    if meta.get("version") != CHECKPOINT_VERSION:
        raise FormatError(
            f"{path}: checkpoint version {meta.get('version')} unsupported (expected {CHECKPOINT_VERSION})"
        )
    return arrays, meta
