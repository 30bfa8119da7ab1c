"""Sequence-level forward passes with a selectable execution backend.

The compiled extension and the pure-Python heads implement the same
per-token recurrences with identical operation order and epsilon floors,
so their outputs agree to floating-point roundoff.  The extension is
optional: when it is not built, ``auto`` falls back to the Python path and
every interface keeps working.

The softmax reference has no per-token state and is always evaluated as a
single vectorised pass regardless of the requested backend.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .config import ConfigError, HeadConfig
from .kernels import (
    DEGENERATE_NORM,
    DegenerateGeometryError,
    KERNEL_KINDS,
    feature_map,
    make_head,
    softmax_forward,
)

try:
    from . import _core
except ImportError:  # pragma: no cover - depends on the build environment
    _core = None

BACKENDS = ("auto", "python", "compiled")


def compiled_available() -> bool:
    """True when the compiled extension was built and imports cleanly."""
    return _core is not None


def resolve_backend(name: str = "auto") -> str:
    """Map a backend request to the concrete backend that will run.

    ``auto`` prefers the compiled extension when present.  Requesting
    ``compiled`` without the extension is a configuration error rather
    than a silent fallback.
    """
    if name not in BACKENDS:
        raise ConfigError(f"unknown backend {name!r}, expected one of {BACKENDS}")
    if name == "auto":
        return "compiled" if _core is not None else "python"
    if name == "compiled" and _core is None:
        raise ConfigError("compiled backend requested but the extension is not built")
    return name


def _as_batch(x, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(x, dtype=float))
    if arr.ndim != 2:
        raise ConfigError(f"{name} must be a (T, d) array, got shape {arr.shape}")
    return arr


def _featured_inputs(K: np.ndarray, Q: np.ndarray, pre_featured: bool):
    k_feat = np.ascontiguousarray(K if pre_featured else feature_map(K))
    q_feat = np.ascontiguousarray(Q if pre_featured else feature_map(Q))
    norms = np.linalg.norm(k_feat, axis=1)
    bad = np.flatnonzero(norms <= DEGENERATE_NORM)
    if bad.size:
        raise DegenerateGeometryError(
            "featured key has negligible norm", step=int(bad[0])
        )
    k_hat = np.ascontiguousarray(k_feat / norms[:, None])
    return k_feat, k_hat, q_feat


def _penalty_batch(cfg: HeadConfig, k_raw: np.ndarray, k_hat: np.ndarray) -> np.ndarray:
    if cfg.u_mode == "unit-normalised-key":
        return k_hat
    if cfg.u_mode == "scaled-by-inv-sqrt-d":
        return np.ascontiguousarray(k_hat / np.sqrt(cfg.d_h))
    if cfg.u_mode == "fixed-projection":
        proj = k_raw @ cfg.u_projection().T
        norms = np.linalg.norm(proj, axis=1)
        bad = np.flatnonzero(norms <= DEGENERATE_NORM)
        if bad.size:
            raise DegenerateGeometryError(
                "projected penalty direction has negligible norm", step=int(bad[0])
            )
        return np.ascontiguousarray(proj / norms[:, None])
    return np.zeros_like(k_hat)


def forward(
    kind: str,
    cfg: HeadConfig,
    K,
    V,
    Q,
    backend: str = "auto",
    beta: float = 0.9,
    pre_featured: bool = False,
) -> np.ndarray:
    """Run a full causal forward pass and return the (T, d) outputs.

    K, V, Q hold one key, value and query row per token.  The stateful
    kernels consume them strictly in order; position t reads a state that
    has seen writes 1..t only.
    """
    if kind not in KERNEL_KINDS:
        raise ConfigError(f"unknown kernel {kind!r}, expected one of {KERNEL_KINDS}")
    K = _as_batch(K, "K")
    V = _as_batch(V, "V")
    Q = _as_batch(Q, "Q")
    if not (K.shape == V.shape == Q.shape):
        raise ConfigError(
            f"K, V, Q shapes must match, got {K.shape}, {V.shape}, {Q.shape}"
        )
    if K.shape[1] != cfg.d_h:
        raise ConfigError(f"input dimension {K.shape[1]} does not match d_h {cfg.d_h}")
    if kind == "softmax":
        return softmax_forward(K, V, Q)
    if kind == "deltanet" and not 0.0 < beta <= 1.0:
        raise ConfigError(f"beta must be in (0, 1], got {beta}")
    chosen = resolve_backend(backend)
    if chosen == "python":
        head = make_head(kind, cfg, beta)
        out = np.empty_like(V)
        for t in range(K.shape[0]):
            out[t] = head.step(K[t], V[t], Q[t], pre_featured=pre_featured).o
        return out
    out = np.empty_like(V)
    s = np.zeros((cfg.d_h, cfg.d_h))
    if kind == "linear":
        k_feat, _, q_feat = _featured_inputs(K, Q, pre_featured)
        z_key = np.zeros(cfg.d_h)
        _core.linear_forward(k_feat, V, q_feat, s, z_key, cfg.epsilon, out)
        return out
    if kind == "deltanet":
        _, k_hat, q_feat = _featured_inputs(K, Q, pre_featured)
        _core.delta_forward(k_hat, V, q_feat, s, float(beta), out)
        return out
    k_feat, k_hat, q_feat = _featured_inputs(K, Q, pre_featured)
    u = _penalty_batch(cfg, K, k_hat)
    a = np.eye(cfg.d_h) / cfg.lambda0
    z_key = np.zeros(cfg.d_h)
    alpha_is_key = cfg.u_mode == "zero" and cfg.normalize_alpha
    bad = _core.vla_forward(
        k_hat,
        k_feat,
        u,
        V,
        q_feat,
        s,
        a,
        z_key,
        cfg.epsilon,
        cfg.refresh_period,
        cfg.refresh_eta,
        cfg.normalize_alpha,
        alpha_is_key,
        out,
    )
    if bad >= 0:
        raise DegenerateGeometryError(
            "write direction has negligible norm", step=int(bad)
        )
    return out
