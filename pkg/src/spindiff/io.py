"""File formats shared by the CLI.

Decay CSV (input)
    Header row required. Time column ``tau_us`` (pulse spacing in us).
    Signal either as one column (``S``, ``intensity`` or ``signal``) or as an
    in-phase/quadrature pair (``I``/``Q`` or ``in_phase``/``quadrature``),
    combined as the magnitude sqrt(I^2 + Q^2). Optional constant columns
    ``wavelength_nm`` and ``power_mW`` are carried into ``meta``.

Batch manifest (input)
    CSV with a ``path`` column (relative to the manifest) and optional
    ``wavelength_nm`` / ``power_mW`` columns that override per-file values.

Reports and run manifests (output)
    JSON, sorted keys, two-space indent, trailing newline.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from pathlib import Path
import subprocess

import numpy as np

from .errors import InvalidInputError
from .pairecho import DecayCurve

SIGNAL_COLUMNS = ("S", "intensity", "signal")
IQ_COLUMNS = (("I", "Q"), ("in_phase", "quadrature"))
META_COLUMNS = ("wavelength_nm", "power_mW")


class DataFileError(InvalidInputError):
    exit_code = 3


def read_decay_csv(path) -> DecayCurve:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            cols = [c.strip() for c in (reader.fieldnames or [])]
            rows = [{k.strip(): (v or "").strip() for k, v in r.items() if k is not None} for r in reader]
    except OSError as exc:
        raise DataFileError(f"{path}: {exc}") from exc
    if "tau_us" not in cols:
        raise DataFileError(f"{path}: missing 'tau_us' column (found {cols})")
    try:
        tau = np.array([float(r["tau_us"]) for r in rows]) * 1e-6
        sig = next((c for c in SIGNAL_COLUMNS if c in cols), None)
        if sig is not None:
            S = np.array([float(r[sig]) for r in rows])
            mode = "intensity"
        else:
            iq = next((p for p in IQ_COLUMNS if p[0] in cols and p[1] in cols), None)
            if iq is None:
                raise DataFileError(f"{path}: no signal column; expected one of {SIGNAL_COLUMNS} or an I/Q pair")
            I = np.array([float(r[iq[0]]) for r in rows])
            Q = np.array([float(r[iq[1]]) for r in rows])
            S = np.hypot(I, Q)
            mode = "iq-magnitude"
    except (ValueError, KeyError) as exc:
        raise DataFileError(f"{path}: malformed value ({exc})") from exc
    if len(tau) == 0:
        raise DataFileError(f"{path}: no data rows")
    order = np.argsort(tau, kind="stable")
    meta = {"source": str(path), "signal": mode}
    for c in META_COLUMNS:
        if c in cols:
            vals = {r[c] for r in rows if r[c] != ""}
            if len(vals) == 1:
                meta[c] = float(vals.pop())
    return DecayCurve(tau[order], S[order], meta)


def read_manifest(path) -> list[dict]:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataFileError(f"{path}: {exc}") from exc
    if not rows or "path" not in rows[0]:
        raise DataFileError(f"{path}: manifest needs a 'path' column")
    out = []
    for r in rows:
        entry = {"path": str((path.parent / r["path"].strip()).resolve())}
        for c in META_COLUMNS:
            if r.get(c, "").strip():
                entry[c] = float(r[c])
        out.append(entry)
    return out


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if (math.isnan(v) or math.isinf(v)) else v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_json(obj))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def tool_version() -> str:
    from . import __version__

    try:
        here = os.path.dirname(os.path.abspath(__file__))
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__
