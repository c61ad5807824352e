"""Atomic artifact writes, run manifests and JSON helpers."""

from __future__ import annotations

import hashlib
import json
import os
import platform
import tempfile
import time
from pathlib import Path

import numpy as np


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def write_json(path: Path, obj) -> None:
    atomic_write_text(Path(path), dumps(obj))


def read_json(path: Path):
    from .errors import FormatError

    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read JSON from {path}: {exc}") from None


def sha256_of(paths) -> str:
    h = hashlib.sha256()
    for p in sorted(str(p) for p in paths):
        h.update(p.encode())
        try:
            h.update(Path(p).read_bytes())
        except OSError:
            h.update(b"<missing>")
    return h.hexdigest()


def versions() -> dict:
    import scipy

    from . import __version__

    return {
        "cocyclekit": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


class Manifest:
    """Collects inputs, seed, timings and outputs of one command run."""

    def __init__(self, command: str, args: dict, inputs=(), seed: int | None = None):
        self.command = command
        self.args = {k: v for k, v in args.items() if k != "func"}
        self.inputs = [str(p) for p in inputs]
        self.seed = seed
        self.t0 = time.perf_counter()
        self.timings: dict[str, float] = {}
        self.outputs: list[str] = []
        self.status = "ok"
        self.error: dict | None = None

    def lap(self, name: str) -> None:
        self.timings[name] = round(time.perf_counter() - self.t0, 6)

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "args": self.args,
            "seed": self.seed,
            "inputs": self.inputs,
            "inputs_sha256": sha256_of(self.inputs),
            "outputs": sorted(self.outputs),
            "versions": versions(),
            "timings_s": self.timings,
            "status": self.status,
            "error": self.error,
        }

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / "manifest.json"
        write_json(path, self.as_dict())
        return path


def format_row(values) -> str:
    out = []
    for v in values:
        if isinstance(v, (float, np.floating)):
            out.append(repr(float(v)))
        else:
            out.append(str(v))
    return ",".join(out)


def write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)] + [format_row(r) for r in rows]
    atomic_write_text(Path(path), "\n".join(lines) + "\n")
