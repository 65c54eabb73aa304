"""Domains, finite differences and ball averages."""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlgriffith.errors import DomainError, UsageError
from nlgriffith.grid import (DisplacementField, Domain, averaged_field, ball_average, ball_stencil,
                             ball_sum, commute_check, discrete_perimeter, interior_mask,
                             sym_gradient, sym_gradient_adjoint)


def brute_ball_average(s, mask, r_cells):
    """Direct double loop over cells and lattice offsets (oracle)."""
    out = np.zeros_like(s, dtype=float)
    R = int(np.floor(r_cells))
    offs = [z for z in itertools.product(range(-R, R + 1), repeat=s.ndim)
            if sum(c * c for c in z) <= r_cells ** 2 + 1e-9]
    for x in np.ndindex(s.shape):
        if not mask[x]:
            continue
        tot, cnt = 0.0, 0
        for z in offs:
            y = tuple(a + b for a, b in zip(x, z))
            if all(0 <= y[k] < s.shape[k] for k in range(s.ndim)) and mask[y]:
                tot += s[y]
                cnt += 1
        out[x] = tot / cnt
    return out


def test_domain_from_extents():
    dom = Domain.from_extents([(0.0, 1.0), (0.0, 0.5)], 0.125)
    assert dom.shape == (8, 4)
    assert dom.volume == pytest.approx(0.5)
    X, Y = dom.centers()
    assert X[0, 0] == pytest.approx(0.0625)
    with pytest.raises(UsageError):
        Domain.from_extents([(0.0, 1.0)], 0.3)


def test_disconnected_mask_warns():
    mask = np.zeros((8, 8), bool)
    mask[:3] = True
    mask[5:] = True
    with pytest.warns(UserWarning, match="connected"):
        Domain(2, (8, 8), 0.125, (0.0, 0.0), mask)


def test_nonfinite_displacement_rejected():
    dom = Domain.from_extents([(0.0, 1.0)], 0.25)
    with pytest.raises(DomainError):
        DisplacementField(dom, np.array([0.0, np.nan, 0.0, 0.0]))


def test_stencil_counts():
    assert ball_stencil(3.0, 1.0, 2).count == 29
    assert ball_stencil(2.0, 1.0, 1).count == 5
    for r in (1.0, 2.5, 4.0, 7.3):
        brute = sum(1 for i in range(-8, 9) for j in range(-8, 9) if i * i + j * j <= r * r)
        assert ball_stencil(r, 1.0, 2).count == brute
    with pytest.raises(UsageError):
        ball_stencil(0.5, 1.0, 2)


def test_ball_average_centre_value():
    s = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
    st_ = ball_stencil(2.0, 1.0, 1)
    assert ball_average(s, st_, np.ones(5, bool))[2] == pytest.approx(0.2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from([1.0, 1.5, 2.0, 2.9]))
def test_ball_average_matches_brute_force(seed, r):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(9, 7))
    mask = rng.uniform(size=(9, 7)) > 0.25
    st_ = ball_stencil(r, 1.0, 2)
    got = ball_average(s, st_, mask)
    np.testing.assert_allclose(got, brute_ball_average(s, mask, r), atol=1e-12)


def test_ball_sum_matches_offsets():
    rng = np.random.default_rng(0)
    s = rng.normal(size=(12, 10))
    st_ = ball_stencil(3.2, 1.0, 2)
    ref = np.zeros_like(s)
    pad = np.pad(s, 4)
    for dx, dy in st_.offsets:
        ref += pad[4 + dx: 4 + dx + 12, 4 + dy: 4 + dy + 10]
    np.testing.assert_allclose(ball_sum(s, st_), ref, atol=1e-12)


def test_sym_gradient_affine_exact():
    dom = Domain.from_extents([(0.0, 1.0), (0.0, 1.0)], 1 / 16)
    M = np.array([[0.3, 0.1], [0.1, -0.2]])
    u = DisplacementField.from_function(dom, lambda X, Y: (M[0, 0] * X + M[0, 1] * Y,
                                                          M[1, 0] * X + M[1, 1] * Y))
    E = sym_gradient(u).values
    assert np.max(np.abs(E - M)) < 1e-12
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    v = DisplacementField.from_function(dom, lambda X, Y: (Y, 0 * X))
    np.testing.assert_allclose(sym_gradient(v).values, np.broadcast_to(0.5 * (A + A.T), E.shape),
                               atol=1e-12)
    c = DisplacementField.from_function(dom, lambda X, Y: (0 * X + 2.0, 0 * Y - 1.0))
    assert np.max(np.abs(sym_gradient(c).values)) == 0.0


def test_sym_gradient_adjoint_dot_product():
    rng = np.random.default_rng(1)
    mask = np.ones((10, 9), bool)
    mask[3:6, 2:4] = False
    dom = Domain(2, (10, 9), 0.1, (0.0, 0.0), mask)
    u = DisplacementField(dom, rng.normal(size=(10, 9, 2)))
    S = rng.normal(size=(10, 9, 2, 2))
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    lhs = float(np.sum(sym_gradient(u).values * S))
    rhs = float(np.sum(u.values * sym_gradient_adjoint(S, dom)))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_averaged_field_keeps_affine_interior():
    dom = Domain.from_extents([(0.0, 1.0), (0.0, 1.0)], 1 / 32)
    u = DisplacementField.from_function(dom, lambda X, Y: (0.4 * X - Y, 2 * Y + 1))
    w = averaged_field(u, 0.125)
    inner = interior_mask(dom.mask, 4)
    assert np.max(np.abs(w.values - u.values)[inner]) < 1e-12


def test_commute_check():
    dom = Domain.from_extents([(0.0, 1.0), (0.0, 1.0)], 1 / 32)
    u = DisplacementField.from_function(dom, lambda X, Y: (0.3 * X + 0.1 * Y, -0.2 * Y))
    assert commute_check(u, 0.125) < 1e-12
    errs = []
    for h in (1e-3, 5e-4):
        d1 = Domain.from_extents([(0.0, 1.0)], h)
        w = DisplacementField.from_function(d1, lambda X: np.sin(X))
        errs.append(commute_check(w, 0.05))
    assert errs[0] <= 1e-2
    assert errs[1] <= errs[0] + 1e-12
    with pytest.raises(UsageError):
        commute_check(DisplacementField.zeros(Domain.from_extents([(0.0, 1.0)], 0.1)), 0.4)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_ball_average_is_an_l1_contraction(seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(16, 16))
    t = rng.normal(size=(16, 16))
    mask = np.ones((16, 16), bool)
    st_ = ball_stencil(2.5, 1.0, 2)
    # With intersection normalisation the per-cell weights sum to at most
    # count / min ball size, so contraction holds up to that factor.
    lhs = np.sum(np.abs(ball_average(s, st_, mask) - ball_average(t, st_, mask)))
    full = st_.count
    corner = np.min(ball_sum(mask.astype(float), st_))
    assert lhs <= np.sum(np.abs(s - t)) * full / corner * (1 + 1e-12)


def test_discrete_perimeter():
    mask = np.ones((10, 10), bool)
    S = np.zeros((10, 10), bool)
    S[2:5, 3:7] = True
    assert discrete_perimeter(S, mask, 0.1) == pytest.approx(2 * (3 + 4) * 0.1)
    S2 = np.zeros((10, 10), bool)
    S2[:, :4] = True
    # faces on the outer boundary are not counted
    assert discrete_perimeter(S2, mask, 0.1) == pytest.approx(1.0)
