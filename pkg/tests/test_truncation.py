"""Truncation sets, competitors and their certificates."""
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlgriffith.densities import BulkDensity, NonlocalDensity
from nlgriffith.energy import EnergyParams, F_eps
from nlgriffith.gammalab import corpus
from nlgriffith.grid import DisplacementField
from nlgriffith.truncation import (Certificate, audit_truncation, averaged_competitor,
                                   build_truncation_sets, compactness_params, rle_decode,
                                   rle_encode, threshold_field, truncated_competitor)

from test_grid import brute_ball_average

TA = NonlocalDensity.truncated_affine(1.0, 1.0)
W2 = BulkDensity.p_norm(2.0)


def params(eps=0.1, delta=0.5, density=TA):
    return EnergyParams(eps, density, W2, delta)


def test_zero_field_gives_empty_sets():
    u = corpus.zero(0.125, 16)
    sets = build_truncation_sets(u, params(0.125))
    assert sets.empty and not sets.K_prime.any() and not sets.K_dprime.any()
    assert sets.perimeter_K_prime == 0.0
    assert sets.measure_bound.passed and sets.perimeter_bound.passed


def test_affine_below_threshold_gives_empty_sets():
    u = corpus.affine(0.125, 16)
    sets = build_truncation_sets(u, params(0.125))
    assert sets.empty
    v, bulk, jump = averaged_competitor(u, params(0.125), sets)
    assert bulk.passed and jump.passed
    inner = np.zeros(u.domain.shape, bool)
    inner[8:-8, 8:-8] = True
    assert np.max(np.abs(v.values - u.values)[inner]) < 1e-12
    assert truncated_competitor(u, sets).values is not None
    np.testing.assert_array_equal(truncated_competitor(u, sets).values, u.values)


def test_threshold_field_against_direct_sum():
    P = params()
    u = corpus.mollified_step(0.1, 16)
    psi = threshold_field(u, P)
    du = np.gradient(u.values[:, 0], u.domain.h)
    oracle = P.epsilon * brute_ball_average(du ** 2, np.ones(du.size, bool),
                                            (1 - P.delta) * P.epsilon / u.domain.h)
    np.testing.assert_allclose(psi, oracle, rtol=1e-12)
    # central differences spread the one-cell ramp over three cells with
    # slopes 1/(4h), 1/(2h), 1/(4h): int |u'|^2 = 3/(8h), held by one inner ball
    h = u.domain.h
    peak = P.epsilon * (3 / (8 * h)) / (2 * (1 - P.delta) * P.epsilon + h)
    assert psi.max() == pytest.approx(peak, rel=1e-9)


def test_mollified_step_sets():
    P = params()
    u = corpus.mollified_step(0.1, 16)
    sets = build_truncation_sets(u, P, a=1.0, b=1.0)
    K = np.flatnonzero(sets.K)
    assert K.size > 0 and np.all(np.diff(K) == 1)  # an interval
    x = u.domain.centers()[0]
    assert x[K].min() < 0.5 < x[K].max()
    assert sets.K.sum() <= sets.K_prime.sum() <= sets.K_dprime.sum()
    assert 0 < sets.delta_prime < P.delta * P.epsilon
    assert sets.measure_bound.passed and sets.perimeter_bound.passed
    json.loads(sets.to_json())


def test_truncated_competitor_vanishes_on_K_prime():
    P = params()
    u = corpus.mollified_step(0.1, 16)
    sets = build_truncation_sets(u, P)
    ub = truncated_competitor(u, sets)
    assert np.all(ub.values[sets.K_prime] == 0.0)
    assert np.all(ub.values[~sets.K_prime] == u.values[~sets.K_prime])


def test_audit_on_step_records_claim_constant():
    au = audit_truncation(corpus.mollified_step(0.1, 16), params())
    assert au.passed
    assert au.claim_N <= 25
    d = json.loads(au.to_json())
    assert set(d["certificates"]) == {"measure_bound", "perimeter_bound", "bulk_bound",
                                      "jump_bound", "truncation_bound"}


@pytest.mark.parametrize("name", ["two_cracks", "random_smooth"])
def test_audit_passes_on_2d_corpus(name):
    u = corpus.corpus_field(name, 0.125, 16)
    au = audit_truncation(u, params(0.125))
    assert au.passed, [c for c in au.certificates if not c.passed]


def test_compactness_params_for_exponential_density():
    P = params(density=NonlocalDensity.saturating_exponential(1.0, 1.0))
    cp = compactness_params(P, 2)
    assert cp.a >= (1 - P.delta) * 1.0 - 1e-12
    assert np.min(cp.a * np.linspace(0, 20, 2001)) <= 1.0
    t = np.linspace(0, 20, 2001)
    assert np.all(np.minimum(cp.a * t, cp.b) <= P.density(t) + 1e-12)


def test_certificate_slack():
    c = Certificate.make("x", 1.0, 2.0, 0.05)
    assert c.slack == pytest.approx(0.5) and c.passed
    assert not Certificate.make("x", 2.2, 2.0, 0.05).passed
    assert Certificate.make("x", 2.05, 2.0, 0.05).passed


@given(st.lists(st.booleans(), min_size=1, max_size=60), st.integers(1, 6))
def test_rle_roundtrip(bits, cols):
    B = np.array(bits + [False] * (-len(bits) % cols)).reshape(-1, cols)
    np.testing.assert_array_equal(rle_decode(rle_encode(B)), B)


def test_energy_passed_through():
    u = corpus.mollified_step(0.1, 16)
    P = params()
    sets = build_truncation_sets(u, P)
    assert sets.energy == pytest.approx(F_eps(u, P))
