# sieveflow/core/utils.py
# Running statistics, stage timing and file helpers shared across the package.

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

from .errors import OutputError


@dataclass
class RunningStats:
    """Welford accumulator of a stream of values around a reference."""
    n: int = 0
    mean: float = 0.0
    M2: float = 0.0
    largest_deviation: float | None = None
    reference: float = 0.0

    def update(self, value: float) -> None:
        """Update statistics with a new value."""
        self.n += 1
        delta = value - self.mean
        self.mean += delta / self.n
        delta2 = value - self.mean
        self.M2 += delta * delta2
        deviation = value - self.reference
        if self.largest_deviation is None or abs(deviation) > abs(self.largest_deviation):
            self.largest_deviation = deviation

    def extend(self, values: Iterable[float]) -> "RunningStats":
        for value in values:
            self.update(float(value))
        return self

    def variance(self) -> float:
        """Return variance of observed values."""
        if self.n < 2:
            return 0.0
        return self.M2 / (self.n - 1)

    def stddev(self) -> float:
        """Return standard deviation of observed values."""
        return self.variance() ** 0.5

    def spread(self) -> float:
        """Largest absolute deviation from the reference."""
        return 0.0 if self.largest_deviation is None else abs(self.largest_deviation)

    def __str__(self) -> str:
        return (
            f"RunningStats(n={self.n}, mean={self.mean:.6e}, stddev={self.stddev():.3e}, "
            f"spread={self.spread():.3e})"
        )


class Stopwatch:
    """Context manager measuring the wall time of a stage.

    Timings are for logs only; they never enter result files.
    """

    def __init__(self) -> None:
        self.elapsed: float = 0.0
        self._start: int | None = None

    def __enter__(self) -> "Stopwatch":
        self._start = time.monotonic_ns()
        return self

    def __exit__(self, exc_type, exc_value, traceback) -> bool:
        self.elapsed = (time.monotonic_ns() - self._start) * 1e-9
        return False


def git_blob_hash(text: str) -> str:
    """SHA-1 of ``text`` the way git hashes a blob object."""
    data = text.encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _json_default(obj: Any) -> Any:
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if hasattr(obj, "name") and hasattr(obj, "value"):
        return obj.name
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def json_safe(obj: Any) -> Any:
    """Replace non-finite floats by the strings ``inf``, ``-inf`` or ``nan`` recursively."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    return obj


def atomic_write_text(path: Path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with tmp.open("w", encoding="utf-8", newline="\n") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except OSError as e:
        raise OutputError(f"Cannot write {path}: {e}") from e


def atomic_write_json(path: Path, obj: Any) -> None:
    text = json.dumps(json_safe(obj), indent=2, sort_keys=True, ensure_ascii=False, default=_json_default)
    atomic_write_text(path, text + "\n")


def read_text(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise OutputError(f"Cannot read {path}: {e}") from e
