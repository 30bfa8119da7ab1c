"""Four attention state machines behind one write/read interface.

All stateful kernels share the value-by-key orientation: the memory S maps
key space to value space and retrieval is a matrix-vector product with the
featured query.  Keys and queries pass through the positive feature map
phi(x) = elu(x) + 1 unless a caller supplies already-featured vectors.

  linear    S_t = S_{t-1} + v_t phi(k_t)^T                  (additive, unbounded)
  deltanet  S_t = b S_{t-1} + (v_t - S_{t-1} khat_t) khat_t^T
  vla       S_t = S_{t-1} + e_t ahat_t^T,   e_t = v_t - S_{t-1} khat_t

with khat the unit feature key.  The vla write direction ahat_t is the unit
image of khat_t under a penalty inverse A_t = (lambda0 I + sum_s u_s u_s^T)^-1
maintained incrementally by rank-1 Sherman-Morrison updates

  z = A u,   delta = max(1 + u^T z, epsilon),   A <- A - z z^T / delta

with an optional periodic refresh A <- A + eta I that keeps the inverse from
collapsing on long streams.  Because the correction e_t is a residual, each
vla write grows ||S||_F by at most ||e_t||, so the state norm is bounded by
the running residual sum; the additive linear kernel has no such bound.

The softmax kernel is the quadratic-cost reference: it stores the raw keys
and values it has seen and answers queries with a causal, max-stabilised
attention average.  It uses no feature map.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .config import ConfigError, HeadConfig

__all__ = [
    "DegenerateGeometryError",
    "StepOutput",
    "feature_map",
    "sm_update",
    "penalty_direction",
    "VlaHead",
    "LinearHead",
    "DeltaHead",
    "SoftmaxHead",
    "softmax_forward",
    "vla_write_geometry",
    "make_head",
    "KERNEL_KINDS",
]

KERNEL_KINDS = ("vla", "linear", "deltanet", "softmax")

# Write directions shorter than this are degenerate geometry, not roundoff.
DEGENERATE_NORM = 1e-12


class DegenerateGeometryError(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass
class StepOutput:
    """Per-step result: output (None for pure writes), residual norm ||e_t||,
    alignment cos between the unit key and unit write direction, and the
    Sherman-Morrison denominator delta (NaN for kernels without one)."""

    o: Optional[np.ndarray]
    residual_norm: float
    alignment: float
    delta: float = float("nan")


def feature_map(x) -> np.ndarray:
    """Positive feature map elu(x) + 1, elementwise."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0.0, x + 1.0, np.exp(np.minimum(x, 0.0)))


def sm_update(a: np.ndarray, u: np.ndarray, epsilon: float):
    """One rank-1 Sherman-Morrison update of the penalty inverse.

    Returns (updated matrix, delta) where delta = max(1 + u^T A u, epsilon).
    The epsilon floor keeps the division safe; for positive-definite A and
    real u the denominator is already >= 1.
    """
    a = np.asarray(a, dtype=float)
    u = np.asarray(u, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if u.shape != (a.shape[0],):
        raise ValueError(f"dimension mismatch: matrix {a.shape}, vector {u.shape}")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    z = a @ u
    delta = max(1.0 + float(u @ z), epsilon)
    return a - np.outer(z, z) / delta, delta


def penalty_direction(cfg: HeadConfig, k_raw: np.ndarray, k_hat: np.ndarray) -> np.ndarray:
    """Penalty vector u_t for the configured mode."""
    if cfg.u_mode == "unit-normalised-key":
        return k_hat
    if cfg.u_mode == "scaled-by-inv-sqrt-d":
        return k_hat / np.sqrt(cfg.d_h)
    if cfg.u_mode == "fixed-projection":
        w = cfg.u_projection() @ k_raw
        n = np.linalg.norm(w)
        if n < DEGENERATE_NORM:
            raise ValueError("projected key has vanishing norm")
        return w / n
    return np.zeros(cfg.d_h)


def _featured(x, pre_featured: bool) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x if pre_featured else feature_map(x)


def _unit(x: np.ndarray, what: str, step: int = -1) -> np.ndarray:
    n = np.linalg.norm(x)
    if n < DEGENERATE_NORM:
        raise DegenerateGeometryError(f"{what} has negligible norm", step=step)
    return x / n


def _read(s: np.ndarray, q_feat: np.ndarray, z_key, epsilon: float) -> np.ndarray:
    if z_key is None:
        return s @ q_feat
    return s @ q_feat / max(float(q_feat @ z_key), epsilon)


class VlaHead:
    """Residual-writing head with a Sherman-Morrison-steered write direction.

    State: memory S (d x d), penalty inverse A (d x d), key accumulator
    z_key (d), and the step counter t.  A starts at (1/lambda0) I and S at
    zero.  With u_mode "zero" the penalty never leaves isotropy, so the
    steered direction provably reduces to the key itself; the write takes
    that shortcut rather than renormalising an isotropic matvec.
    """

    def __init__(self, cfg: HeadConfig):
        self.cfg = cfg
        d = cfg.d_h
        self.S = np.zeros((d, d))
        self.A = np.eye(d) / cfg.lambda0
        self.z_key = np.zeros(d)
        self.t = 0

    def write(self, k_raw, v, *, pre_featured: bool = False) -> StepOutput:
        cfg = self.cfg
        k_raw = np.asarray(k_raw, dtype=float)
        v = np.asarray(v, dtype=float)
        k_feat = _featured(k_raw, pre_featured)
        k_hat = _unit(k_feat, "feature key", step=self.t + 1)
        u = penalty_direction(cfg, k_raw, k_hat)
        self.A, delta = sm_update(self.A, u, cfg.epsilon)
        self.t += 1
        if cfg.refresh_period and self.t % cfg.refresh_period == 0:
            self.A[np.diag_indices_from(self.A)] += cfg.refresh_eta
        if cfg.u_mode == "zero" and cfg.normalize_alpha:
            alpha_hat = k_hat
            alignment = float(k_hat @ k_hat)
        else:
            alpha = self.A @ k_hat
            na = float(np.linalg.norm(alpha))
            if na < DEGENERATE_NORM:
                raise DegenerateGeometryError(
                    f"write direction collapsed at step {self.t}", step=self.t
                )
            # Alignment is always the cosine of the unit directions, even when
            # the unnormalised variant writes with the raw alpha.
            alignment = float(k_hat @ alpha) / na
            alpha_hat = alpha / na if cfg.normalize_alpha else alpha
        e = v - self.S @ k_hat
        self.S += np.outer(e, alpha_hat)
        self.z_key += k_feat
        return StepOutput(None, float(np.linalg.norm(e)), alignment, delta)

    def read(self, q, *, pre_featured: bool = False) -> np.ndarray:
        q_feat = _featured(q, pre_featured)
        return _read(self.S, q_feat, self.z_key, self.cfg.epsilon)

    def step(self, k_raw, v, q, *, pre_featured: bool = False) -> StepOutput:
        out = self.write(k_raw, v, pre_featured=pre_featured)
        return replace(out, o=self.read(q, pre_featured=pre_featured))


class LinearHead:
    """Additive linear-attention head: S accumulates v phi(k)^T unboundedly."""

    def __init__(self, cfg: HeadConfig):
        self.cfg = cfg
        d = cfg.d_h
        self.S = np.zeros((d, d))
        self.z_key = np.zeros(d)
        self.t = 0

    def write(self, k_raw, v, *, pre_featured: bool = False) -> StepOutput:
        v = np.asarray(v, dtype=float)
        k_feat = _featured(k_raw, pre_featured)
        k_hat = _unit(k_feat, "feature key", step=self.t + 1)
        residual = float(np.linalg.norm(v - self.S @ k_hat))
        self.S += np.outer(v, k_feat)
        self.z_key += k_feat
        self.t += 1
        return StepOutput(None, residual, 1.0)

    def read(self, q, *, pre_featured: bool = False) -> np.ndarray:
        q_feat = _featured(q, pre_featured)
        return _read(self.S, q_feat, self.z_key, self.cfg.epsilon)

    def step(self, k_raw, v, q, *, pre_featured: bool = False) -> StepOutput:
        out = self.write(k_raw, v, pre_featured=pre_featured)
        return replace(out, o=self.read(q, pre_featured=pre_featured))


class DeltaHead:
    """Delta-rule head with scalar gate: S <- b S + (v - S khat) khat^T."""

    def __init__(self, cfg: HeadConfig, beta: float = 0.9):
        if not 0.0 < beta <= 1.0:
            raise ConfigError(f"beta must be in (0, 1], got {beta}")
        self.cfg = cfg
        self.beta = beta
        self.S = np.zeros((cfg.d_h, cfg.d_h))
        self.t = 0

    def write(self, k_raw, v, beta: Optional[float] = None, *, pre_featured: bool = False) -> StepOutput:
        b = self.beta if beta is None else beta
        if not 0.0 < b <= 1.0:
            raise ConfigError(f"beta must be in (0, 1], got {b}")
        v = np.asarray(v, dtype=float)
        k_feat = _featured(k_raw, pre_featured)
        k_hat = _unit(k_feat, "feature key", step=self.t + 1)
        e = v - self.S @ k_hat
        self.S = b * self.S + np.outer(e, k_hat)
        self.t += 1
        return StepOutput(None, float(np.linalg.norm(e)), 1.0)

    def read(self, q, *, pre_featured: bool = False) -> np.ndarray:
        q_feat = _featured(q, pre_featured)
        return _read(self.S, q_feat, None, self.cfg.epsilon)

    def step(self, k_raw, v, q, beta: Optional[float] = None, *, pre_featured: bool = False) -> StepOutput:
        out = self.write(k_raw, v, beta, pre_featured=pre_featured)
        return replace(out, o=self.read(q, pre_featured=pre_featured))


class SoftmaxHead:
    """Quadratic-cost reference: stores history, answers with causal attention."""

    def __init__(self, cfg: HeadConfig):
        self.cfg = cfg
        self._k: list[np.ndarray] = []
        self._v: list[np.ndarray] = []
        self.t = 0

    def write(self, k_raw, v, *, pre_featured: bool = False) -> StepOutput:
        self._k.append(np.asarray(k_raw, dtype=float))
        self._v.append(np.asarray(v, dtype=float))
        self.t += 1
        return StepOutput(None, float("nan"), float("nan"))

    def read(self, q, *, pre_featured: bool = False) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if not self._k:
            return np.zeros(self.cfg.d_h)
        k = np.stack(self._k)
        v = np.stack(self._v)
        scores = k @ q / np.sqrt(self.cfg.d_h)
        scores -= scores.max()
        w = np.exp(scores)
        return w @ v / w.sum()

    def step(self, k_raw, v, q, *, pre_featured: bool = False) -> StepOutput:
        out = self.write(k_raw, v, pre_featured=pre_featured)
        return replace(out, o=self.read(q, pre_featured=pre_featured))


def softmax_forward(k: np.ndarray, v: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Causal softmax attention over whole (T, d) arrays, max-stabilised."""
    k = np.asarray(k, dtype=float)
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    t, d = k.shape
    scores = q @ k.T / np.sqrt(d)
    mask = np.tril(np.ones((t, t), dtype=bool))
    scores = np.where(mask, scores, -np.inf)
    scores -= scores.max(axis=1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=1, keepdims=True)
    return w @ v


def vla_write_geometry(cfg: HeadConfig, k: np.ndarray, *, pre_featured: bool = False):
    """Unit keys and write directions of a vla pass over keys k (T, d).

    Runs only the penalty recursion; the memory S is not needed to determine
    the write geometry.  Requires normalize_alpha, since the returned
    directions are unit vectors by construction.
    """
    if not cfg.normalize_alpha:
        raise ConfigError("write geometry requires normalize_alpha")
    k = np.asarray(k, dtype=float)
    head = VlaHead(cfg)
    zero = np.zeros(cfg.d_h)
    k_hats = np.empty_like(k)
    alpha_hats = np.empty_like(k)
    for i in range(k.shape[0]):
        k_feat = _featured(k[i], pre_featured)
        k_hat = _unit(k_feat, "feature key", step=i + 1)
        # Writing a zero value advances the penalty state but leaves S at
        # zero, so head.A after the write is exactly the matrix behind the
        # step's write direction.
        head.write(k[i], zero, pre_featured=pre_featured)
        k_hats[i] = k_hat
        if cfg.u_mode == "zero":
            alpha_hats[i] = k_hat
        else:
            alpha = head.A @ k_hat
            alpha_hats[i] = alpha / np.linalg.norm(alpha)
    return k_hats, alpha_hats


def make_head(kind: str, cfg: HeadConfig, beta: float = 0.9):
    if kind == "vla":
        return VlaHead(cfg)
    if kind == "linear":
        return LinearHead(cfg)
    if kind == "deltanet":
        return DeltaHead(cfg, beta)
    if kind == "softmax":
        return SoftmaxHead(cfg)
    raise ConfigError(f"unknown kernel kind {kind!r}; expected one of {KERNEL_KINDS}")
