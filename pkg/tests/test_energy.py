"""Non-local energies, their gradients and the limit energy."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from nlgriffith.densities import BulkDensity, FidelityDensity, NonlocalDensity
from nlgriffith.energy import (CrackCandidate, EnergyParams, F_eps, F_eps_parts, F_eps_sliced,
                               F_eps_value_and_grad, G_eps, G_eps_value_and_grad, H_eps,
                               H_eps_value_and_grad, energy_breakdown, limit_energy)
from nlgriffith.errors import UsageError
from nlgriffith.grid import DisplacementField, Domain, sym_gradient

from test_grid import brute_ball_average

M = np.array([[0.3, 0.1], [0.1, -0.2]])
TA = NonlocalDensity.truncated_affine(1.0, 1.0)
W2 = BulkDensity.p_norm(2.0)


def affine_field(h, mat=M):
    dom = Domain.from_extents([(0.0, 1.0), (0.0, 1.0)], h)
    return DisplacementField.from_function(
        dom, lambda X, Y: (mat[0, 0] * X + mat[0, 1] * Y, mat[1, 0] * X + mat[1, 1] * Y))


def brute_F(u, params, A=None):
    """F_eps assembled from a direct ball loop (oracle for the averaging step)."""
    dom = u.domain
    s = params.bulk.of_strain(sym_gradient(u).values)
    region = dom.mask if A is None else (A & dom.mask)
    avg = brute_ball_average(s, region, params.epsilon / dom.h)
    return float(np.sum(params.density(params.epsilon * avg[region]))) * dom.h ** dom.dim \
        / params.epsilon


def test_zero_field_has_zero_energy():
    u = DisplacementField.zeros(Domain.from_extents([(0.0, 1.0), (0.0, 1.0)], 1 / 16))
    assert F_eps(u, EnergyParams(0.25, TA, W2)) == 0.0


@pytest.mark.parametrize("density", [TA, NonlocalDensity.saturating_exponential(2.0, 0.5)])
def test_F_matches_brute_force(density):
    rng = np.random.default_rng(5)
    mask = np.ones((10, 8), bool)
    mask[6:, 5:] = False
    dom = Domain(2, (10, 8), 0.1, (0.0, 0.0), mask)
    u = DisplacementField(dom, 0.3 * rng.normal(size=(10, 8, 2)))
    P = EnergyParams(0.25, density, W2)
    A = np.ones((10, 8), bool)
    A[:2] = False
    assert F_eps(u, P) == pytest.approx(brute_F(u, P), rel=1e-12)
    assert F_eps(u, P, A) == pytest.approx(brute_F(u, P, A), rel=1e-12)


def test_affine_closed_form():
    u = affine_field(1 / 64)
    F = F_eps(u, EnergyParams(0.125, TA, W2))
    assert F == pytest.approx(np.sum(M ** 2), rel=0.02)


def test_epsilon_below_two_cells_rejected():
    u = affine_field(1 / 16)
    with pytest.raises(UsageError):
        F_eps(u, EnergyParams(1 / 16, TA, W2))


def test_mollified_step_against_direct_sum():
    # Independent oracle: plain numpy on a fine grid, h = 1e-4.
    eps, h = 0.1, 1e-4
    n = int(round(1 / h))
    x = (np.arange(n) + 0.5) * h
    u = np.clip((x - 0.5) / h + 0.5, 0.0, 1.0)
    du = np.gradient(u, h)
    s = du ** 2
    r = int(round(eps / h))
    cs = np.concatenate([[0.0], np.cumsum(s)])
    lo = np.clip(np.arange(n) - r, 0, n)
    hi = np.clip(np.arange(n) + r + 1, 0, n)
    avg = (cs[hi] - cs[lo]) / (hi - lo)
    oracle = float(np.sum(np.minimum(eps * avg, 1.0))) * h / eps
    assert 2 * (1 - eps) * 0.9 <= oracle <= 2 * (1 + eps) * 1.1
    dom = Domain.from_extents([(0.0, 1.0)], h)
    F = F_eps(DisplacementField(dom, u), EnergyParams(eps, TA, W2))
    assert F == pytest.approx(oracle, rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.0, 2.0))
def test_F_is_monotone_in_the_bulk_integrand(seed, scale):
    rng = np.random.default_rng(seed)
    dom = Domain.from_extents([(0.0, 1.0), (0.0, 1.0)], 1 / 12)
    v = rng.normal(size=dom.shape + (2,))
    P = EnergyParams(0.25, TA, W2)
    lo = F_eps(DisplacementField(dom, scale * v), P)
    hi = F_eps(DisplacementField(dom, (scale + 0.5) * v), P)
    assert lo <= hi * (1 + 1e-12)


def test_parts_add_up():
    dom = Domain.from_extents([(0.0, 1.0), (0.0, 1.0)], 1 / 32)
    u = DisplacementField.from_function(dom, lambda X, Y: (0.3 * X, np.where(Y > 0.5, 1.0, 0.0)))
    tot, bulk, surf = F_eps_parts(u, EnergyParams(0.125, TA, W2))
    assert tot == pytest.approx(bulk + surf, rel=1e-14)
    assert surf > 0 and bulk > 0


def _fd_check(fun_grad, x, rng, n=6, step=1e-6):
    value, grad = fun_grad(x)
    for _ in range(n):
        d = rng.normal(size=x.shape)
        fp, _ = fun_grad(x + step * d)
        fm, _ = fun_grad(x - step * d)
        fd = (fp - fm) / (2 * step)
        assert fd == pytest.approx(float(np.sum(grad * d)), rel=1e-5, abs=1e-8)
    return value


@pytest.mark.parametrize("density", [NonlocalDensity.saturating_exponential(1.0, 1.0)])
def test_F_gradient(density):
    rng = np.random.default_rng(9)
    mask = np.ones((9, 9), bool)
    mask[4:, 6:] = False
    dom = Domain(2, (9, 9), 1 / 9, (0.0, 0.0), mask)
    P = EnergyParams(0.25, density, W2, fidelity=FidelityDensity.power(2.0))

    def fg(x):
        return F_eps_value_and_grad(DisplacementField(dom, x), P)

    def gg(x):
        return G_eps_value_and_grad(DisplacementField(dom, x), P)

    x0 = 0.3 * rng.normal(size=(9, 9, 2)) * mask[..., None]
    v = _fd_check(fg, x0, rng)
    assert v == pytest.approx(F_eps(DisplacementField(dom, x0), P), rel=1e-13)
    _fd_check(gg, x0, rng)


def test_H_gradient():
    rng = np.random.default_rng(4)
    dens = NonlocalDensity.saturating_exponential(1.0, 1.0)
    x0 = rng.normal(size=41)
    for collar in (False, True):
        _fd_check(lambda x: H_eps_value_and_grad(x, 0.1, dens, 2.0, (0.0, 1.0), collar), x0, rng)


def test_G_eps_breakdown():
    dom = Domain.from_extents([(0.0, 1.0), (0.0, 1.0)], 1 / 32)
    v0 = np.array([0.3, -0.4])
    u = DisplacementField(dom, np.broadcast_to(v0, dom.shape + (2,)))
    P = EnergyParams(0.125, TA, W2, fidelity=FidelityDensity.power(2.0))
    br = G_eps(u, P)
    assert br.nonlocal_energy == 0.0
    assert br.fidelity_integral == pytest.approx(0.25)
    assert br.consistent()
    with pytest.raises(UsageError):
        G_eps(u, P.replace(fidelity=None))


def test_G_eps_affine_against_quadrature():
    u = affine_field(1 / 64)
    P = EnergyParams(0.125, TA, W2, fidelity=FidelityDensity.power(2.0))
    fid, _ = integrate.dblquad(lambda y, x: float(np.sum((M @ np.array([x, y])) ** 2)),
                               0, 1, 0, 1)
    assert G_eps(u, P).total == pytest.approx(np.sum(M ** 2) + fid, rel=0.02)


def test_energy_breakdown_fields():
    u = affine_field(1 / 32)
    br = energy_breakdown(u, EnergyParams(0.125, TA, W2))
    assert br.formula == "nonlocal" and br.consistent()
    assert br.alpha == 1.0 and br.beta == 1.0
    assert br.surface_measure == 0.0
    assert br.bulk_integral == pytest.approx(np.sum(M ** 2), rel=1e-9)


def test_sliced_energy_examples():
    dom = Domain.from_extents([(0.0, 1.0), (0.0, 1.0)], 1 / 32)
    P = EnergyParams(0.125, TA, W2)
    u = DisplacementField.from_function(dom, lambda X, Y: (X, 0 * Y))
    assert F_eps_sliced(u, P, "e2") == 0.0
    s1 = F_eps_sliced(u, P, (1.0, 0.0))
    F = F_eps(u, P)
    assert s1 <= F * (1 + 1e-12)
    # interior balls are full, edge balls are cut: value between 1/2 and 1
    assert 0.75 < s1 <= 1.0
    assert F == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(UsageError):
        F_eps_sliced(u, P, (0.6, 0.8))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-3, 1))
def test_sliced_never_exceeds_full(seed, logamp):
    rng = np.random.default_rng(seed)
    dom = Domain.from_extents([(0.0, 1.0), (0.0, 1.0)], 1 / 16)
    u = DisplacementField(dom, 10 ** logamp * rng.normal(size=dom.shape + (2,)))
    P = EnergyParams(0.25, TA, W2)
    F = F_eps(u, P)
    for xi in ("e1", "e2"):
        assert F_eps_sliced(u, P, xi) <= F * (1 + 1e-12)


def test_H_eps_affine_and_step():
    L, m = 1.0, 0.5
    n = 2000
    x = np.linspace(0, L, n + 1)
    H = H_eps(m * x, L / 50, TA, 2.0, (0.0, L))
    assert H == pytest.approx(m ** 2 * L, rel=0.05)
    assert H_eps(0 * x, 0.02, TA, 2.0) == 0.0
    vals, eps_list = [], []
    for k in range(4, 10):
        eps = 2.0 ** -k
        nn = int(32 / eps)
        xx = np.linspace(0, 1, nn + 1)
        vals.append(H_eps(np.where(xx > 0.5, 1.0, 0.0), eps, TA, 2.0))
        eps_list.append(eps)
    # the excess over 2 beta is proportional to h / eps (fixed here)
    assert vals[-1] == pytest.approx(2.0, rel=0.02)
    assert np.ptp(vals) < 1e-9


def test_limit_energy_examples():
    dom = Domain.from_extents([(0.0, 1.0), (0.0, 1.0)], 1 / 32)
    crack = CrackCandidate(dom, lambda X, Y: (0 * X, 0.5 * np.sign(Y - 0.5)),
                           [((0.0, 0.5), (1.0, 0.5))])
    assert limit_energy(crack, 1.0, 1.0, W2).total == pytest.approx(2.0)
    aff = CrackCandidate(dom, lambda X, Y: (M[0, 0] * X + M[0, 1] * Y, M[1, 0] * X + M[1, 1] * Y))
    assert limit_energy(aff, 2.0, 1.0, W2).total == pytest.approx(2 * np.sum(M ** 2), rel=1e-9)
    d1 = Domain.from_extents([(0.0, 1.0)], 1 / 64)
    step = CrackCandidate(d1, lambda X: np.where(X > 0.5, 1.0, 0.0), [0.5])
    br = limit_energy(step, 1.0, 1.0, W2)
    assert br.total == pytest.approx(2.0) and br.consistent()


def test_crack_candidate_validation():
    dom = Domain.from_extents([(0.0, 1.0), (0.0, 1.0)], 1 / 8)
    with pytest.raises(UsageError):
        CrackCandidate(dom, lambda X, Y: (X, Y), [((0.0, 0.0), (0.5, 0.5))])
    with pytest.raises(UsageError):
        CrackCandidate(dom, lambda X, Y: (X, Y), [((0.0, 0.5), (1.5, 0.5))])
    with pytest.raises(UsageError):
        CrackCandidate(dom, lambda X, Y: (X, Y), [((0.0, 0.5), (1.0, 0.5))], jump_measure=2.0)
    c = CrackCandidate(dom, lambda X, Y: (X, Y), [((0.0, 0.5), (1.0, 0.5))])
    assert c.projected_measure((0.0, 1.0)) == pytest.approx(1.0)
    assert c.projected_measure((1.0, 0.0)) == pytest.approx(0.0)
    mask = np.ones((8, 8), bool)
    mask[:, 3:5] = False
    with pytest.warns(UserWarning):
        holed = Domain(2, (8, 8), 1 / 8, (0.0, 0.0), mask)
    with pytest.raises(UsageError):
        CrackCandidate(holed, lambda X, Y: (X, Y), [((0.5, 0.0), (0.5, 1.0))])
