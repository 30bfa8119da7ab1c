"""Parallel prefix evaluation against the sequential oracle and algebra laws."""

import numpy as np
import pytest

from vlamem.config import HeadConfig
from vlamem.diagnostics import jacobian_sigma
from vlamem.kernels import VlaHead
from vlamem.scan import (
    RecurrenceElement,
    ScanStats,
    blelloch_scan,
    compose,
    identity_element,
    make_element,
    sequential_scan,
    vla_elements,
    vla_scan,
)


def unit(v):
    return v / np.linalg.norm(v)


def random_elements(rng, t, d):
    out = []
    for _ in range(t):
        out.append(
            make_element(
                unit(rng.standard_normal(d)),
                unit(rng.standard_normal(d)),
                rng.standard_normal(d),
            )
        )
    return out


def test_apply_definition():
    rng = np.random.default_rng(0)
    el = random_elements(rng, 1, 5)[0]
    s = rng.standard_normal((5, 5))
    np.testing.assert_allclose(el.apply(s), s @ el.F + el.G, atol=1e-14)


def test_element_structure():
    rng = np.random.default_rng(1)
    k = unit(rng.standard_normal(6))
    a = unit(rng.standard_normal(6))
    v = rng.standard_normal(6)
    el = make_element(k, a, v)
    np.testing.assert_allclose(el.F, np.eye(6) - np.outer(k, a), atol=1e-14)
    np.testing.assert_allclose(el.G, np.outer(v, a), atol=1e-14)


def test_make_element_rejects_non_unit():
    d = 4
    good = np.zeros(d)
    good[0] = 1.0
    with pytest.raises(ValueError):
        make_element(2.0 * good, good, np.ones(d))
    with pytest.raises(ValueError):
        make_element(good, 0.5 * good, np.ones(d))


def test_identity_laws():
    rng = np.random.default_rng(2)
    el = random_elements(rng, 1, 4)[0]
    ident = identity_element(4)
    for combined in (compose(ident, el), compose(el, ident)):
        np.testing.assert_allclose(combined.F, el.F, atol=1e-14)
        np.testing.assert_allclose(combined.G, el.G, atol=1e-14)
    s = rng.standard_normal((4, 4))
    np.testing.assert_allclose(ident.apply(s), s, atol=1e-14)


def test_compose_is_associative():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b, c = random_elements(rng, 3, 5)
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        np.testing.assert_allclose(left.F, right.F, atol=1e-12)
        np.testing.assert_allclose(left.G, right.G, atol=1e-12)


def test_compose_agrees_with_sequential_application():
    rng = np.random.default_rng(4)
    a, b = random_elements(rng, 2, 6)
    s = rng.standard_normal((6, 6))
    np.testing.assert_allclose(
        compose(a, b).apply(s), b.apply(a.apply(s)), atol=1e-12
    )


def test_sequential_scan_matches_manual_fold():
    rng = np.random.default_rng(5)
    elements = random_elements(rng, 9, 4)
    s = rng.standard_normal((4, 4))
    states = sequential_scan(elements, s)
    acc = s.copy()
    for el, got in zip(elements, states):
        acc = el.apply(acc)
        np.testing.assert_allclose(got, acc, atol=1e-12)


@pytest.mark.parametrize("t", [1, 2, 3, 5, 7, 8, 64, 100])
def test_blelloch_matches_sequential(t):
    rng = np.random.default_rng(t)
    elements = random_elements(rng, t, 6)
    s0 = rng.standard_normal((6, 6))
    want = sequential_scan(elements, s0)
    got = blelloch_scan(elements, s0)
    assert len(got) == t
    for g, w in zip(got, want):
        denom = max(np.linalg.norm(w), 1e-300)
        assert np.linalg.norm(g - w) / denom < 1e-12


@pytest.mark.parametrize("workers", [1, 2, 4, 8])
def test_blelloch_worker_invariance(workers):
    rng = np.random.default_rng(77)
    elements = random_elements(rng, 33, 5)
    s0 = np.zeros((5, 5))
    base = blelloch_scan(elements, s0, workers=1)
    got = blelloch_scan(elements, s0, workers=workers)
    for g, w in zip(got, base):
        np.testing.assert_array_equal(g, w)


def test_composition_count_work_efficient():
    rng = np.random.default_rng(6)
    for t in (3, 8, 17, 64, 100, 256):
        elements = random_elements(rng, t, 3)
        stats = ScanStats()
        blelloch_scan(elements, np.zeros((3, 3)), stats=stats)
        assert stats.compositions <= 2 * t
        assert stats.padded_length == 1 << (t - 1).bit_length()
        # One pass up the tree and one back down.
        assert stats.levels == 2 * (t - 1).bit_length()


def test_scan_handles_empty_sequence():
    assert blelloch_scan([], np.zeros((3, 3))) == []
    assert sequential_scan([], np.zeros((3, 3))) == []


def test_factor_singular_value_matches_closed_form():
    """The write factor F shares its top singular value with the Jacobian."""
    rng = np.random.default_rng(7)
    for _ in range(30):
        k = unit(rng.standard_normal(8))
        a = unit(rng.standard_normal(8))
        el = make_element(k, a, np.zeros(8))
        top = np.linalg.svd(el.F, compute_uv=False)[0]
        assert top == pytest.approx(jacobian_sigma(float(k @ a)), abs=1e-10)


def test_vla_elements_reproduce_live_head():
    cfg = HeadConfig(d_h=8)
    rng = np.random.default_rng(8)
    k = rng.standard_normal((40, 8))
    v = rng.standard_normal((40, 8))
    elements = vla_elements(cfg, k, v)
    states = blelloch_scan(elements, np.zeros((8, 8)), workers=4)
    head = VlaHead(cfg)
    for t in range(40):
        head.write(k[t], v[t])
        np.testing.assert_allclose(states[t], head.S, atol=1e-9)


def test_vla_scan_convenience_wrapper():
    cfg = HeadConfig(d_h=4)
    rng = np.random.default_rng(9)
    k = rng.standard_normal((10, 4))
    v = rng.standard_normal((10, 4))
    via_wrapper = vla_scan(cfg, k, v, workers=2)
    elements = vla_elements(cfg, k, v)
    via_pieces = blelloch_scan(elements, np.zeros((4, 4)), workers=2)
    for a, b in zip(via_wrapper, via_pieces):
        np.testing.assert_array_equal(a, b)


def test_blelloch_respects_initial_state():
    rng = np.random.default_rng(10)
    elements = random_elements(rng, 12, 4)
    s0 = rng.standard_normal((4, 4))
    want = sequential_scan(elements, s0)
    got = blelloch_scan(elements, s0, workers=2)
    for g, w in zip(got, want):
        np.testing.assert_allclose(g, w, atol=1e-11)
