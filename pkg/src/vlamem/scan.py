"""Associative-scan evaluation of the residual-write recurrence.

One write with unit key khat, unit direction ahat, and value v acts on the
memory as the affine map

    S  |->  S (I - khat ahat^T) + v ahat^T

so a step is the pair (F, G) with F = I - khat ahat^T acting from the right
and G = v ahat^T.  Maps compose associatively: running (Fl, Gl) then (Fr, Gr)
is

    compose(l, r) = (Fl Fr,  Gl Fr + Gr)

which lets a whole prefix be evaluated by a work-efficient Blelloch scan:
an upsweep folds pairs into subtree totals, a downsweep distributes exclusive
prefixes, and one final application per position recovers every S_t.  The
tree does O(T) compositions (counted and asserted in tests as <= 2T) in
O(log T) levels, against T sequential applications for the plain loop.
Padding slots are identity maps and compose at zero cost, and each tree slot
is written exactly once per level, so results are independent of how many
workers the level is sliced across.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "RecurrenceElement",
    "ScanStats",
    "make_element",
    "identity_element",
    "compose",
    "sequential_scan",
    "blelloch_scan",
    "vla_elements",
    "vla_scan",
]

_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class RecurrenceElement:
    """Affine map S |-> S @ F + G in the right-acting convention."""

    F: np.ndarray
    G: np.ndarray

    def apply(self, s: np.ndarray) -> np.ndarray:
        return s @ self.F + self.G


@dataclass
class ScanStats:
    compositions: int = 0
    levels: int = 0
    padded_length: int = 0


def make_element(k_hat, alpha_hat, v) -> RecurrenceElement:
    k_hat = np.asarray(k_hat, dtype=float)
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    v = np.asarray(v, dtype=float)
    for name, vec in (("key", k_hat), ("write direction", alpha_hat)):
        n = float(np.linalg.norm(vec))
        if abs(n - 1.0) > _UNIT_TOL:
            raise ValueError(f"{name} must be unit-norm, got norm {n!r}")
    d = k_hat.shape[0]
    f = np.eye(d) - np.outer(k_hat, alpha_hat)
    g = np.outer(v, alpha_hat)
    return RecurrenceElement(f, g)


def identity_element(d: int) -> RecurrenceElement:
    return RecurrenceElement(np.eye(d), np.zeros((d, d)))


def compose(left: RecurrenceElement, right: RecurrenceElement) -> RecurrenceElement:
    """Map equal to running left first, then right."""
    return RecurrenceElement(left.F @ right.F, left.G @ right.F + right.G)


def sequential_scan(elements: Sequence[RecurrenceElement], s0: np.ndarray) -> list[np.ndarray]:
    """Ground truth: fold the elements left to right, recording every state."""
    s = np.asarray(s0, dtype=float)
    out = []
    for e in elements:
        s = e.apply(s)
        out.append(s)
    return out


def _compose_opt(left, right) -> Optional[RecurrenceElement]:
    if left is None:
        return right
    if right is None:
        return left
    return compose(left, right)


def blelloch_scan(
    elements: Sequence[RecurrenceElement],
    s0: np.ndarray,
    workers: int = 1,
    stats: Optional[ScanStats] = None,
) -> list[np.ndarray]:
    """All prefix states via an upsweep/downsweep tree.

    The element list is padded to a power of two with identity slots (held as
    None so they compose for free).  With workers > 1 each level's node list
    is sliced across a thread pool; slots are disjoint, so the result is
    bitwise independent of the worker count.
    """
    t = len(elements)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if t == 0:
        if stats is not None:
            stats.compositions = 0
            stats.levels = 0
            stats.padded_length = 0
        return []
    s0 = np.asarray(s0, dtype=float)
    n = 1 << (t - 1).bit_length()
    tree: list[Optional[RecurrenceElement]] = list(elements) + [None] * (n - t)
    compositions = 0
    levels = 0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 and n > 1 else None
    try:
        def run_level(indices, job):
            # Jobs within a level touch disjoint slot pairs, so slicing them
            # across threads cannot change the result.
            if pool is None or len(indices) < 2 * workers:
                for i in indices:
                    job(i)
            else:
                chunks = np.array_split(np.asarray(indices), workers)

                def run_chunk(chunk):
                    for i in chunk:
                        job(int(i))

                list(pool.map(run_chunk, chunks))

        stride = 2
        while stride <= n:
            half = stride // 2
            indices = list(range(stride - 1, n, stride))
            compositions += sum(
                1 for i in indices if tree[i - half] is not None and tree[i] is not None
            )

            def up(i, half=half):
                tree[i] = _compose_opt(tree[i - half], tree[i])

            run_level(indices, up)
            levels += 1
            stride *= 2

        tree[n - 1] = None
        stride = n
        while stride >= 2:
            half = stride // 2
            indices = list(range(stride - 1, n, stride))
            compositions += sum(
                1 for i in indices if tree[i - half] is not None and tree[i] is not None
            )

            def down(i, half=half):
                left_total = tree[i - half]
                incoming = tree[i]
                tree[i - half] = incoming
                tree[i] = _compose_opt(incoming, left_total)

            run_level(indices, down)
            levels += 1
            stride //= 2
    finally:
        if pool is not None:
            pool.shutdown()

    out = []
    for i in range(t):
        prefix = tree[i]
        base = s0 if prefix is None else prefix.apply(s0)
        out.append(elements[i].apply(base))
    if stats is not None:
        stats.compositions = compositions
        stats.levels = levels
        stats.padded_length = n
    return out


def vla_elements(cfg, k, v, *, pre_featured: bool = False) -> list[RecurrenceElement]:
    """Scan elements of a vla pass: sequential geometry pass, then packaging.

    The write geometry (unit keys and directions) is inherently sequential
    because the penalty inverse is a running state; once extracted, the
    memory trajectory itself is scan-parallel.
    """
    from .kernels import vla_write_geometry

    v = np.asarray(v, dtype=float)
    k_hats, alpha_hats = vla_write_geometry(cfg, k, pre_featured=pre_featured)
    return [make_element(k_hats[i], alpha_hats[i], v[i]) for i in range(len(v))]


def vla_scan(cfg, k, v, s0=None, workers: int = 1, stats: Optional[ScanStats] = None):
    """Convenience wrapper: geometry pass plus Blelloch evaluation."""
    elements = vla_elements(cfg, k, v)
    if s0 is None:
        s0 = np.zeros((cfg.d_h, cfg.d_h))
    return blelloch_scan(elements, s0, workers=workers, stats=stats)
