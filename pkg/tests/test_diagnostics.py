"""Jacobian norms, state traces, bound checking, gradient verification."""

import dataclasses
import math

import numpy as np
import pytest

from vlamem.config import ConfigError, HeadConfig
from vlamem.diagnostics import (
    BoundReport,
    TraceRecord,
    aligned_pair,
    bound_check,
    chain_magnification,
    fd_gradient_check,
    jacobian_report,
    jacobian_sigma,
    run_norm_trace,
)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def unit(v):
    return v / np.linalg.norm(v)


# ------------------------------------------------------------ closed form


def test_sigma_special_values():
    assert jacobian_sigma(1.0) == 1.0
    assert jacobian_sigma(-1.0) == pytest.approx(2.0, rel=1e-14)
    assert jacobian_sigma(0.0) == pytest.approx(GOLDEN, rel=1e-14)


def test_sigma_exactly_one_at_full_alignment():
    # Bitwise, not approximately: the aligned case must be exactly stable.
    assert jacobian_sigma(1.0) == 1.0


def test_sigma_monotone_decreasing_in_alignment():
    grid = np.linspace(-1.0, 1.0, 101)
    values = [jacobian_sigma(c) for c in grid]
    assert all(a >= b - 1e-13 for a, b in zip(values, values[1:]))
    assert all(1.0 <= v <= 2.0 + 1e-13 for v in values)


def test_sigma_rejects_out_of_range():
    with pytest.raises(ValueError):
        jacobian_sigma(1.5)
    with pytest.raises(ValueError):
        jacobian_sigma(-1.0001)


def test_sigma_tolerates_roundoff_overshoot():
    assert jacobian_sigma(1.0 + 1e-15) == 1.0


def test_sigma_matches_dense_svd_on_constructed_pairs():
    for c in (-1.0, -0.5, 0.0, 0.5, 0.9, 1.0):
        for d in (2, 8, 32):
            k_hat, alpha_hat = aligned_pair(c, d)
            j = np.eye(d) - np.outer(alpha_hat, k_hat)
            top = np.linalg.svd(j, compute_uv=False)[0]
            assert jacobian_sigma(c) == pytest.approx(top, abs=1e-12)


def test_sigma_matches_dense_svd_on_random_pairs():
    rng = np.random.default_rng(4)
    for _ in range(50):
        d = int(rng.integers(2, 24))
        k_hat = unit(rng.standard_normal(d))
        alpha_hat = unit(rng.standard_normal(d))
        j = np.eye(d) - np.outer(alpha_hat, k_hat)
        top = np.linalg.svd(j, compute_uv=False)[0]
        assert jacobian_sigma(float(k_hat @ alpha_hat)) == pytest.approx(
            top, abs=1e-10
        )


def test_aligned_pair_properties():
    for c in (-1.0, -0.3, 0.0, 0.7, 1.0):
        k_hat, alpha_hat = aligned_pair(c, 6)
        assert np.linalg.norm(k_hat) == pytest.approx(1.0, rel=1e-14)
        assert np.linalg.norm(alpha_hat) == pytest.approx(1.0, rel=1e-14)
        assert float(k_hat @ alpha_hat) == pytest.approx(c, abs=1e-14)
    with pytest.raises(ValueError):
        aligned_pair(1.2, 4)
    with pytest.raises(ValueError):
        aligned_pair(0.0, 1)


def test_jacobian_report_agreement():
    rng = np.random.default_rng(5)
    for _ in range(20):
        k_hat = unit(rng.standard_normal(12))
        alpha_hat = unit(rng.standard_normal(12))
        report = jacobian_report(k_hat, alpha_hat)
        assert report.sigma_numeric == pytest.approx(
            report.sigma_closed_form, abs=1e-9
        )
        assert report.eigen_inline == pytest.approx(1.0 - report.alignment, rel=1e-12)


# ----------------------------------------------------------------- traces


def test_trace_shape_and_fields():
    cfg = HeadConfig()
    trace = run_norm_trace("vla", cfg, "gaussian", 50, seed=0)
    assert len(trace) == 50
    assert [r.t for r in trace] == list(range(1, 51))
    for r in trace:
        assert isinstance(r, TraceRecord)
        assert r.s_norm >= 0.0 and r.residual >= 0.0
        assert np.isfinite(r.a_norm) and r.delta > 0.0


def test_trace_non_vla_fields_are_nan():
    trace = run_norm_trace("linear", HeadConfig(), "gaussian", 10, seed=0)
    for r in trace:
        assert math.isnan(r.a_norm) and math.isnan(r.delta)
        assert r.alignment == 1.0
    trace = run_norm_trace("deltanet", HeadConfig(), "gaussian", 10, seed=0)
    for r in trace:
        assert math.isnan(r.a_norm) and math.isnan(r.delta)


def test_trace_first_step_residual_equals_state_norm():
    # S1 = e1 ahat^T with unit ahat, so the norms coincide at t=1.
    for kind in ("vla", "deltanet"):
        trace = run_norm_trace(kind, HeadConfig(), "gaussian", 1, seed=3)
        assert trace[0].s_norm == pytest.approx(trace[0].residual, rel=1e-12)


def test_trace_rejects_softmax():
    with pytest.raises(ConfigError):
        run_norm_trace("softmax", HeadConfig(), "gaussian", 10)


def test_trace_deterministic_in_seed():
    a = run_norm_trace("vla", HeadConfig(), "gaussian", 20, seed=9)
    b = run_norm_trace("vla", HeadConfig(), "gaussian", 20, seed=9)
    assert a == b
    c = run_norm_trace("vla", HeadConfig(), "gaussian", 20, seed=10)
    assert a != c


def test_cyclic_stream_trace_plateaus():
    trace = run_norm_trace("vla", HeadConfig(), "cyclic-pairs(8)", 400, seed=0)
    early = trace[99].s_norm - trace[0].s_norm
    late = trace[-1].s_norm - trace[-100].s_norm
    assert late <= 0.01 * max(early, 1e-12)


# ------------------------------------------------------------ bound check


def test_bound_check_clean_on_vla():
    trace = run_norm_trace("vla", HeadConfig(), "gaussian", 300, seed=1)
    report = bound_check(trace)
    assert isinstance(report, BoundReport)
    assert report.steps == 300
    assert report.violations == 0
    assert report.ok
    assert report.min_margin >= 0.0


def test_bound_check_flags_linear_growth():
    """The additive kernel outruns its residual budget immediately."""
    trace = run_norm_trace("linear", HeadConfig(), "gaussian", 50, seed=1)
    report = bound_check(trace)
    assert report.violations > 0
    assert not report.ok
    assert report.max_excess > 0.0


def test_bound_check_detects_corruption():
    trace = run_norm_trace("vla", HeadConfig(), "gaussian", 100, seed=2)
    corrupted = list(trace)
    # At t=1 the budget is a single residual, so any inflation must trip it.
    corrupted[0] = dataclasses.replace(corrupted[0], s_norm=corrupted[0].s_norm * 2)
    report = bound_check(corrupted)
    assert report.violations >= 1


def test_bound_check_respects_initial_state_budget():
    trace = run_norm_trace("vla", HeadConfig(), "gaussian", 20, seed=3)
    shifted = [dataclasses.replace(r, s_norm=r.s_norm + 5.0) for r in trace]
    assert bound_check(shifted).violations > 0
    assert bound_check(shifted, s0_norm=5.0).violations == 0


# ---------------------------------------------------------- magnification


def test_chain_magnification_normalized_is_modest():
    value = chain_magnification(HeadConfig(d_h=16), t=25, normalize=True, seed=0)
    assert 0.1 <= value <= 10.0


def test_chain_magnification_unnormalized_blows_up():
    normalized = chain_magnification(HeadConfig(d_h=32), t=25, normalize=True, seed=0)
    raw = chain_magnification(HeadConfig(d_h=32), t=25, normalize=False, seed=0)
    assert raw > 1e6 * normalized


def test_chain_magnification_deterministic():
    a = chain_magnification(HeadConfig(d_h=8), t=10, seed=4)
    b = chain_magnification(HeadConfig(d_h=8), t=10, seed=4)
    assert a == b


# ------------------------------------------------------- gradient checking


def test_fd_gradient_check_small_error():
    rng = np.random.default_rng(6)
    for _ in range(10):
        d = int(rng.integers(3, 16))
        s = rng.standard_normal((d, d))
        k_hat = unit(rng.standard_normal(d))
        alpha_hat = unit(rng.standard_normal(d))
        v = rng.standard_normal(d)
        err = fd_gradient_check(s, k_hat, alpha_hat, v)
        assert err <= 1e-6


def test_fd_gradient_check_explicit_directions():
    rng = np.random.default_rng(7)
    d = 6
    s = rng.standard_normal((d, d))
    k_hat, alpha_hat = aligned_pair(0.4, d)
    v = rng.standard_normal(d)
    directions = [rng.standard_normal((d, d)) for _ in range(3)]
    err = fd_gradient_check(s, k_hat, alpha_hat, v, directions=directions)
    assert err <= 1e-6
