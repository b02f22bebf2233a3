"""CSV/JSON emission, configuration hashing and the on-disk Green cache."""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

HASH_PREFIX = "# glx config_hash="


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def _plain(obj):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], chash: str) -> Path:
    """Write a CSV whose first line records the configuration hash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = _io.StringIO()
    buf.write(f"{HASH_PREFIX}{chash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    path.write_text(buf.getvalue())
    return path


def read_csv(path) -> tuple[str, list[str], list[list[str]]]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(HASH_PREFIX):
        raise ConfigError(f"{path} lacks a config hash line")
    chash = lines[0][len(HASH_PREFIX):]
    rows = list(csv.reader(lines[1:]))
    return chash, rows[0], rows[1:]


def merge_csv(paths: Sequence, out, ) -> Path:
    """Concatenate CSVs produced under one configuration; refuses mixed hashes."""
    parts = [read_csv(p) for p in paths]
    hashes = {h for h, _, _ in parts}
    if len(hashes) != 1:
        raise ConfigError(f"refusing to merge outputs of different configurations: {sorted(hashes)}")
    headers = {tuple(hd) for _, hd, _ in parts}
    if len(headers) != 1:
        raise ConfigError("CSV headers differ")
    rows = [r for _, _, rs in parts for r in rs]
    return write_csv(out, parts[0][1], rows, parts[0][0])


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n")
    return path


def cache_dir():
    d = os.environ.get("GLX_CACHE_DIR")
    return Path(d) if d else None


def cached_green(model, domain, tol: float = 1e-12):
    """``finite_green`` memoized on disk under ``$GLX_CACHE_DIR`` (if set)."""
    from .green import GreenMatrix, finite_green

    root = cache_dir()
    if root is None:
        return finite_green(model, domain)
    key = config_hash({"model": model.to_dict(), "d": domain.d, "n": domain.n, "tol": tol,
                       "kind": "finite_green"})
    path = root / f"green_{key}.npy"
    if path.exists():
        return GreenMatrix(model, domain, np.load(path))
    G = finite_green(model, domain)
    root.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npy")
    np.save(tmp, G.matrix)
    os.replace(tmp, path)
    return G
