"""Forward-pass latency measurement and scaling-slope estimation.

Timings use the monotonic performance counter and are summarised by the
median with a p10..p90 band; means are avoided because scheduler noise is
one-sided.  Scaling behaviour is judged by the least-squares slope of
log(median latency) against log(sequence length): linear-time kernels sit
near slope 1, the quadratic softmax reference near 2.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .backend import compiled_available, forward, resolve_backend
from .config import ConfigError, HeadConfig
from .streams import stream_arrays

DEFAULT_T_SWEEP = (128, 256, 512, 1024, 2048)


@dataclass(frozen=True)
class BenchRecord:
    """Robust latency statistics for one (kernel, backend, T) cell."""

    kernel: str
    backend: str
    T: int
    reps: int
    median_ms: float
    p10_ms: float
    p90_ms: float
    tokens_per_s: float

    def __post_init__(self):
        if not self.p10_ms <= self.median_ms <= self.p90_ms:
            raise ValueError(
                f"percentiles out of order: p10={self.p10_ms}, "
                f"median={self.median_ms}, p90={self.p90_ms}"
            )
        if self.reps < 5:
            raise ValueError(f"reps must be >= 5, got {self.reps}")


def measure_latency(
    kind: str,
    cfg: HeadConfig,
    T: int,
    reps: int = 7,
    warmup: int = 2,
    backend: str = "auto",
    seed: int = 0,
    beta: float = 0.9,
) -> BenchRecord:
    """Time full forward passes over a seeded random stream.

    Warmup passes are run and discarded before timing starts.  The input
    arrays are generated once outside the timed region, so each repetition
    times the forward pass alone.  The softmax reference runs the same
    vectorised pass under either backend label.
    """
    if reps < 5:
        raise ConfigError(f"reps must be >= 5, got {reps}")
    if warmup < 1:
        raise ConfigError(f"warmup must be >= 1, got {warmup}")
    if T < 1:
        raise ConfigError(f"T must be positive, got {T}")
    chosen = resolve_backend(backend)
    k, v, q = stream_arrays("gaussian", cfg.d_h, T, seed)
    samples_ms = []
    for i in range(warmup + reps):
        start = time.perf_counter()
        forward(kind, cfg, k, v, q, backend=chosen, beta=beta)
        elapsed = time.perf_counter() - start
        if i >= warmup:
            samples_ms.append(elapsed * 1e3)
    median = float(np.median(samples_ms))
    p10, p90 = (float(x) for x in np.percentile(samples_ms, [10.0, 90.0]))
    return BenchRecord(
        kernel=kind,
        backend=chosen,
        T=T,
        reps=reps,
        median_ms=median,
        p10_ms=p10,
        p90_ms=p90,
        tokens_per_s=T / (median / 1e3),
    )


def fit_loglog_slope(records: Sequence[BenchRecord]) -> float:
    """Least-squares slope of log(median_ms) versus log(T)."""
    lengths = [r.T for r in records]
    if len(set(lengths)) < 3:
        raise ConfigError(
            f"slope fit needs at least 3 distinct T values, got {sorted(set(lengths))}"
        )
    x = np.log([float(r.T) for r in records])
    y = np.log([float(r.median_ms) for r in records])
    return float(np.polyfit(x, y, 1)[0])


def sweep_latency(
    kinds: Sequence[str],
    cfg: HeadConfig,
    t_list: Sequence[int] = DEFAULT_T_SWEEP,
    reps: int = 7,
    warmup: int = 2,
    backends: Sequence[str] = ("auto",),
    seed: int = 0,
    beta: float = 0.9,
) -> list[BenchRecord]:
    """Grid of latency cells, timed strictly one at a time.

    Cells run sequentially on purpose: concurrent timing would contaminate
    the measurements.
    """
    records = []
    for backend in backends:
        for kind in kinds:
            for t in t_list:
                records.append(
                    measure_latency(
                        kind, cfg, t, reps=reps, warmup=warmup,
                        backend=backend, seed=seed, beta=beta,
                    )
                )
    return records


def comparison_backends() -> tuple[str, ...]:
    """Backends worth comparing on this build: python, plus compiled if built."""
    if compiled_available():
        return ("python", "compiled")
    return ("python",)
