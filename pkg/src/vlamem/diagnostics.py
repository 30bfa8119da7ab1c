"""Stability diagnostics for the residual-write recurrence.

The per-step state-to-state Jacobian of a write with unit key khat and unit
direction ahat is J = I - ahat khat^T (acting per value row).  J deviates
from the identity only on span{khat, ahat}, so its largest singular value
depends on nothing but the alignment c = khat . ahat.  On that 2-plane
J^T J has trace 3 - 2c and determinant (1 - c)^2, giving the closed form

    sigma_max(c)^2 = ((3 - 2c) + sqrt((3 - 2c)^2 - 4 (1 - c)^2)) / 2

which is 1 at c = 1, the golden ratio at c = 0, and 2 at c = -1.  Since the
penalty inverse is positive definite, live runs always have c > 0 and every
per-step amplification stays below the golden ratio.  Without the unit
normalisations the analogous factors scale like ||k|| ||alpha|| and their
products blow up geometrically; chain_magnification measures both regimes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import linalg
from .config import ConfigError, HeadConfig
from .kernels import feature_map, make_head, penalty_direction, sm_update
from .streams import make_stream

__all__ = [
    "TraceRecord",
    "TRACE_FIELDS",
    "JacobianReport",
    "BoundReport",
    "jacobian_sigma",
    "jacobian_report",
    "run_norm_trace",
    "chain_magnification",
    "fd_gradient_check",
    "bound_check",
]

TRACE_FIELDS = ("t", "s_norm", "a_norm", "residual", "alignment", "delta")


@dataclass
class TraceRecord:
    """Per-step trace row.  Fields without a meaning for a kernel are NaN:
    a_norm and delta exist only for vla; residual is ||v - S khat|| against
    the unit feature key for every stateful kernel."""

    t: int
    s_norm: float
    a_norm: float
    residual: float
    alignment: float
    delta: float


@dataclass
class JacobianReport:
    alignment: float
    sigma_numeric: float
    sigma_closed_form: float
    eigen_inline: float


@dataclass
class BoundReport:
    steps: int
    violations: int
    max_excess: float
    min_margin: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def jacobian_sigma(c: float) -> float:
    """Largest singular value of I - ahat khat^T at alignment c = khat . ahat."""
    c = float(c)
    if abs(c) > 1.0 + 1e-12:
        raise ValueError(f"alignment must lie in [-1, 1], got {c}")
    c = min(1.0, max(-1.0, c))
    tau = 3.0 - 2.0 * c
    det = (1.0 - c) ** 2
    disc = tau * tau - 4.0 * det
    return float(np.sqrt((tau + np.sqrt(max(disc, 0.0))) / 2.0))


def aligned_pair(alignment: float, d_h: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors (k_hat, alpha_hat) with the requested inner product.

    Built in the first two coordinates; rotating both by any orthogonal
    matrix leaves every alignment-derived quantity unchanged.
    """
    c = float(alignment)
    if abs(c) > 1.0:
        raise ValueError(f"alignment must lie in [-1, 1], got {c}")
    if d_h < 2:
        raise ValueError("aligned pairs need dimension >= 2")
    k_hat = np.zeros(d_h)
    k_hat[0] = 1.0
    alpha_hat = np.zeros(d_h)
    alpha_hat[0] = c
    alpha_hat[1] = np.sqrt(max(0.0, 1.0 - c * c))
    return k_hat, alpha_hat


def jacobian_report(k_hat, alpha_hat, tol: float = 1e-12, max_iter: int = 5000) -> JacobianReport:
    """Closed form against power iteration for one write's Jacobian."""
    k_hat = np.asarray(k_hat, dtype=float)
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    c = float(k_hat @ alpha_hat)
    j = np.eye(k_hat.shape[0]) - np.outer(alpha_hat, k_hat)
    return JacobianReport(
        alignment=c,
        sigma_numeric=linalg.spectral_norm(j, tol=tol, max_iter=max_iter),
        sigma_closed_form=jacobian_sigma(c),
        eigen_inline=1.0 - c,
    )


def run_norm_trace(
    kind: str,
    cfg: HeadConfig,
    stream: str = "gaussian",
    t: int = 1000,
    seed: int = 0,
    beta: float = 0.9,
) -> list[TraceRecord]:
    """Write a stream into a fresh head, recording norms per step."""
    if kind == "softmax":
        raise ConfigError("softmax keeps no state matrix; no norm trace to record")
    head = make_head(kind, cfg, beta)
    gen = make_stream(stream, cfg.d_h, seed)
    records = []
    for step in range(1, t + 1):
        k, v, _ = next(gen)
        out = head.write(k, v)
        a_norm = linalg.frobenius_norm(head.A) if kind == "vla" else float("nan")
        records.append(
            TraceRecord(
                t=step,
                s_norm=linalg.frobenius_norm(head.S),
                a_norm=a_norm,
                residual=out.residual_norm,
                alignment=out.alignment,
                delta=out.delta,
            )
        )
    return records


def chain_magnification(
    cfg: HeadConfig,
    t: int,
    normalize: bool = True,
    seed: int = 0,
    stream: str = "gaussian",
) -> float:
    """Frobenius growth of a unit perturbation pushed through t write maps.

    With normalize=True the per-step map is I - khat ahat^T (right-acting);
    with normalize=False both the feature key and the steering vector keep
    their raw lengths, which is the unstable regime.  Returns the final
    Frobenius norm of the propagated direction (the start direction has unit
    norm), or inf once the products overflow.
    """
    seeds = np.random.SeedSequence(seed).spawn(2)
    gen = make_stream(stream, cfg.d_h, seeds[0])
    rng = np.random.default_rng(seeds[1])
    direction = rng.standard_normal((cfg.d_h, cfg.d_h))
    direction /= linalg.frobenius_norm(direction)
    a = np.eye(cfg.d_h) / cfg.lambda0
    for step in range(1, t + 1):
        k_raw, _, _ = next(gen)
        k_feat = feature_map(k_raw)
        k_hat = k_feat / np.linalg.norm(k_feat)
        u = penalty_direction(cfg, k_raw, k_hat)
        a, _ = sm_update(a, u, cfg.epsilon)
        if cfg.refresh_period and step % cfg.refresh_period == 0:
            a[np.diag_indices_from(a)] += cfg.refresh_eta
        if normalize:
            key_vec = k_hat
            steer = a @ k_hat
            n = np.linalg.norm(steer)
            if n < 1e-300:
                return float("inf")
            steer = steer / n
        else:
            key_vec = k_feat
            steer = a @ k_feat
        direction = direction - np.outer(direction @ key_vec, steer)
        if not np.all(np.isfinite(direction)):
            return float("inf")
    return linalg.frobenius_norm(direction)


def fd_gradient_check(
    s: np.ndarray,
    k_hat,
    alpha_hat,
    v,
    h: float = 1e-5,
    directions: Optional[Sequence[np.ndarray]] = None,
    n_directions: int = 8,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference derivatives.

    The write map f(S) = S + (v - S khat) ahat^T is affine in S, so its
    directional derivative in direction D is D - (D khat) ahat^T exactly.
    """
    s = np.asarray(s, dtype=float)
    k_hat = np.asarray(k_hat, dtype=float)
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    v = np.asarray(v, dtype=float)
    if h <= 0:
        raise ValueError("step size h must be positive")

    def f(x):
        return x + np.outer(v - x @ k_hat, alpha_hat)

    if directions is None:
        rng = np.random.default_rng(seed)
        directions = []
        for _ in range(n_directions):
            d = rng.standard_normal(s.shape)
            directions.append(d / linalg.frobenius_norm(d))
    worst = 0.0
    for d in directions:
        d = np.asarray(d, dtype=float)
        analytic = d - np.outer(d @ k_hat, alpha_hat)
        numeric = (f(s + h * d) - f(s - h * d)) / (2.0 * h)
        denom = linalg.frobenius_norm(analytic)
        err = linalg.frobenius_norm(numeric - analytic)
        worst = max(worst, err / denom if denom > 1e-12 else err)
    return worst


def bound_check(trace: Sequence[TraceRecord], s0_norm: float = 0.0) -> BoundReport:
    """Check ||S_t||_F <= ||S_0||_F + sum of residuals at every prefix.

    The residual-write bound holds step by step in exact arithmetic; the
    tolerance absorbs rounding in the recorded norms and the running sum.
    """
    running = float(s0_norm)
    violations = 0
    max_excess = 0.0
    min_margin = float("inf")
    for rec in trace:
        running += rec.residual
        tol = 1e-12 * max(1.0, running)
        margin = running - rec.s_norm
        min_margin = min(min_margin, margin)
        if rec.s_norm > running + tol:
            violations += 1
            max_excess = max(max_excess, rec.s_norm - running)
    return BoundReport(
        steps=len(trace),
        violations=violations,
        max_excess=max_excess,
        min_margin=min_margin,
    )
