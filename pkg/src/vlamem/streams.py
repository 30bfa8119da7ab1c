"""Seeded input streams for traces, diagnostics, and benchmarks.

A stream yields (k, v, q) triples of raw d-vectors.  Specs are short strings:

  "gaussian"         i.i.d. standard-normal entries each step
  "cyclic-pairs(n)"  n fixed random pairs repeated in order, for plateau tests
"""

from __future__ import annotations

import re

import numpy as np

__all__ = ["make_stream", "gaussian_stream", "cyclic_pairs_stream", "stream_arrays"]

_CYCLIC = re.compile(r"^cyclic-pairs\((\d+)\)$")


def gaussian_stream(d: int, rng: np.random.Generator):
    while True:
        yield rng.standard_normal(d), rng.standard_normal(d), rng.standard_normal(d)


def cyclic_pairs_stream(d: int, n_pairs: int, rng: np.random.Generator):
    # Validate eagerly; the generator body would not run until first use.
    if n_pairs < 1:
        raise ValueError("cyclic-pairs needs at least one pair")
    keys = rng.standard_normal((n_pairs, d))
    values = rng.standard_normal((n_pairs, d))

    def gen():
        i = 0
        while True:
            yield keys[i], values[i], keys[i]
            i = (i + 1) % n_pairs

    return gen()


def make_stream(spec: str, d: int, seed: int):
    rng = np.random.default_rng(seed)
    if spec == "gaussian":
        return gaussian_stream(d, rng)
    m = _CYCLIC.match(spec)
    if m:
        return cyclic_pairs_stream(d, int(m.group(1)), rng)
    raise ValueError(f"unknown stream spec {spec!r}")


def stream_arrays(spec: str, d: int, t: int, seed: int):
    """First t triples of a stream, stacked into (t, d) arrays."""
    gen = make_stream(spec, d, seed)
    k = np.empty((t, d))
    v = np.empty((t, d))
    q = np.empty((t, d))
    for i in range(t):
        k[i], v[i], q[i] = next(gen)
    return k, v, q
