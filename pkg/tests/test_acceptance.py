"""Acceptance criteria 1 to 9.

Each test prints exactly one line ``criterion N [name]: PASS|FAIL details``
and then asserts the criterion at its stated tolerance. Run with
``pytest tests/test_acceptance.py -v`` (the lines are printed even when
output capture is on) or ``python tests/test_acceptance.py``.
"""
import json
import math
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

from nlgriffith.cli import main as cli_main
from nlgriffith.densities import BulkDensity, NonlocalDensity, minorant_family
from nlgriffith.energy import EnergyParams, F_eps, F_eps_sliced
from nlgriffith.gammalab import corpus
from nlgriffith.gammalab.sweep import run_sweep
from nlgriffith.grid import DisplacementField, Domain, averaged_field
from nlgriffith.spec import bundled_specs, load_spec
from nlgriffith.truncation import audit_truncation

TA = NonlocalDensity.truncated_affine(1.0, 1.0)
W2 = BulkDensity.p_norm(2.0)
TOL = 0.05
CORPUS_2D = ["zero", "affine", "mollified_step", "two_cracks", "random_smooth"]


@pytest.fixture
def report(capsys):
    def _report(n, name, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n} [{name}]: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail
    return _report


@lru_cache(maxsize=None)
def bundled_run(name):
    """Run a bundled sweep once per session; returns (report, seconds)."""
    spec = load_spec(f"bundled:{name}")
    t0 = time.perf_counter()
    rep = run_sweep(spec.plan(), threads=1)
    return rep, time.perf_counter() - t0


# ---------------------------------------------------------------------------


def test_criterion_1_affine_exactness(report):
    eps = 0.125
    details, ok = [], True
    for dim, target in ((1, 0.3 ** 2), (2, 0.3 ** 2 + 2 * 0.1 ** 2 + 0.2 ** 2)):
        t0 = time.perf_counter()
        u = corpus.affine(eps, 16, dim)
        F = F_eps(u, EnergyParams(eps, TA, W2))
        dt = time.perf_counter() - t0
        gap = abs(F - target) / target
        assert eps * target < 1.0  # below the kink b/a
        ok &= gap <= 0.02 and dt < 1.0
        details.append(f"d={dim} F={F:.6g} target={target:.6g} gap={gap:.2e} t={dt:.2f}s")
    report(1, "affine exactness", ok, "; ".join(details))


def test_criterion_2_oned_gamma_limit(report):
    details, ok = [], True
    total = 0.0
    for name in ("oned_limit_below", "oned_limit", "oned_limit_above"):
        rep, dt = bundled_run(name)
        total += dt
        gaps = [r.relative_gap for r in rep.rows]
        last = rep.rows[-1]
        smallest = math.isclose(last.epsilon, 1 / 128)
        ok &= rep.verdict.passed and smallest and gaps[-1] <= TOL
        ok &= all(b <= a + 1e-3 for a, b in zip(gaps, gaps[1:]))
        details.append(f"{last.case}: E={last.energy_total:.5g} target={last.limit_target:.5g} "
                       f"gap={gaps[-1]:.3g}")
    ok &= total < 60
    report(2, "1D Gamma-limit", ok, "; ".join(details) + f"; total {total:.1f}s")


def test_criterion_3_recovery_upper_bound(report):
    rep, dt = bundled_run("recovery_2d")
    s = rep.summary
    eps = [r.epsilon for r in rep.rows]
    ok = (rep.verdict.passed and dt < 120 and s["extrapolated_gap"] <= TOL
          and eps == [2.0 ** -k for k in range(3, 8)])
    F = ", ".join(f"{r.energy_total:.4f}" for r in rep.rows)
    report(3, "2D recovery", ok,
           f"F=[{F}] extrapolated={s['extrapolated']:.4f} gap={s['extrapolated_gap']:.3g} "
           f"(raw final gap {s['raw_final_gap']:.3g}) t={dt:.1f}s")


def _corpus_audits(eps, delta):
    out = []
    for name in CORPUS_2D:
        dim = 1 if name == "mollified_step" else 2
        u = corpus.corpus_field(name, eps, 16) if dim == 2 else corpus.mollified_step(eps, 16)
        P = EnergyParams(eps, TA, W2, delta)
        out.append((name, audit_truncation(u, P, tol=TOL)))
    return out


def test_criterion_4_truncation_certificates(report):
    viol, worst = [], math.inf
    for eps in (0.125, 0.0625):
        for name, au in _corpus_audits(eps, 0.5):
            for c in (au.sets.measure_bound, au.sets.perimeter_bound):
                worst = min(worst, c.slack)
                if not c.passed:
                    viol.append(f"{name}@{eps}:{c.name}")
    report(4, "truncation certificates", not viol,
           f"{2 * len(CORPUS_2D)} fields x 2 bounds, violations={viol or 0}, "
           f"min slack={worst:.3g}")


def test_criterion_5_bulk_lower_bound(report):
    viol, worst = [], math.inf
    for delta in (0.25, 0.5):
        for name, au in _corpus_audits(0.125, delta):
            worst = min(worst, au.bulk_bound.slack)
            if not au.bulk_bound.passed:
                viol.append(f"{name}@delta={delta}")
    report(5, "bulk lower bound", not viol,
           f"{len(CORPUS_2D)} fields x 2 deltas, violations={viol or 0}, min slack={worst:.3g}")


def test_criterion_6_slicing(report):
    rng = np.random.default_rng(20240601)
    P = EnergyParams(0.125, TA, W2)
    dom = Domain.from_extents([(0.0, 1.0), (0.0, 1.0)], 1 / 32)
    X, Y = dom.centers()
    worst, bad = -math.inf, 0
    for i in range(100):
        amp = 10 ** rng.uniform(-3, 0.5)
        if i % 2:
            vals = rng.normal(size=dom.shape + (2,))
        else:
            f = rng.normal(size=(3, 2))
            y0 = rng.uniform(0.3, 0.7)
            vals = np.stack([np.sin(2 * np.pi * (f[0, c] * X + f[1, c] * Y)) + f[2, c]
                             * (Y > y0) for c in range(2)], axis=-1)
        u = DisplacementField(dom, amp * vals)
        F = F_eps(u, P)
        for xi in ("e1", "e2"):
            Fx = F_eps_sliced(u, P, xi)
            worst = max(worst, (Fx - F) / F)
            bad += Fx > F * (1 + 1e-12)
    rep, dt = bundled_run("slicing_audit")
    last = rep.rows[-1].extras
    target = last["bound_sliced"]
    ok_e2 = last["F_sliced_e2"] >= (1 - TOL) * target
    ok_e1 = abs(last["F_sliced_e1"]) <= TOL * target
    ok = bad == 0 and ok_e2 and ok_e1 and rep.verdict.passed
    report(6, "slicing", ok,
           f"100 random fields: {bad} violations, max (F_xi-F)/F={worst:.2e}; "
           f"eps={rep.rows[-1].epsilon:g}: F_e2={last['F_sliced_e2']:.4f} >= "
           f"{(1 - TOL) * target:.4f}, F_e1={last['F_sliced_e1']:.2e}")


def test_criterion_7_minorants(report):
    rng = np.random.default_rng(7)
    t_grid = np.concatenate([[0.0], np.logspace(-4, 2, 1023)])
    samples = np.concatenate([rng.uniform(0, 100, 5000), 10 ** rng.uniform(-6, 2, 5000)])
    details, ok = [], True
    for f in (NonlocalDensity.truncated_affine(2.0, 3.0),
              NonlocalDensity.saturating_exponential(1.0, 2.0)):
        fam = minorant_family(f, 64, 64, t_grid)
        viol = int(np.sum(np.max(fam.evaluate(samples), axis=0) > f(samples) * (1 + 1e-12)))
        ga = abs(fam.sup_a - f.alpha) / f.alpha
        gb = abs(fam.sup_b - f.beta) / f.beta
        ok &= viol == 0 and ga <= 0.02 and gb <= 0.02
        details.append(f"{f.kind}: violations={viol}/{samples.size} sup_a gap={ga:.2e} "
                       f"sup_b gap={gb:.2e}")
    report(7, "minorants", ok, "; ".join(details))


def test_criterion_8_averaging_convergence(report):
    ks = np.arange(3, 9)
    eps = 2.0 ** -ks.astype(float)
    err1, err2 = [], []
    d1 = Domain.from_extents([(0.0, 1.0)], 2.0 ** -14)
    w1 = DisplacementField.from_function(d1, lambda x: np.abs(x - 0.37) + 0.5 * np.sin(3 * x))
    for e in eps:
        a = averaged_field(w1, e)
        err1.append(float(np.sum(np.abs(a.values - w1.values))) * d1.cell_volume)
        d2 = Domain.from_extents([(0.0, 1.0), (0.0, 1.0)], e / 4)
        w2 = DisplacementField.from_function(
            d2, lambda x, y: (np.abs(x - 0.37) + np.abs(y - 0.61), np.minimum(x, y)))
        a2 = averaged_field(w2, e)
        err2.append(float(np.sum(np.abs(a2.values - w2.values))) * d2.cell_volume)
    o1 = np.polyfit(np.log(eps), np.log(err1), 1)[0]
    o2 = np.polyfit(np.log(eps), np.log(err2), 1)[0]
    report(8, "averaging convergence", o1 >= 0.9 and o2 >= 0.9,
           f"empirical L1 order d=1: {o1:.3f}, d=2: {o2:.3f} over eps=2^-3..2^-8")


def test_criterion_9_determinism(report, tmp_path, capsys):
    diffs, checked = [], []
    for name in bundled_specs():
        spec = load_spec(f"bundled:{name}")
        if spec.experiment is None:
            cmd = "certify" if "compactness" in spec.raw else "energy"
            outs = []
            for rep in range(2):
                d = tmp_path / f"{name}{rep}"
                cli_main([cmd, "--spec", f"bundled:{name}", "--out", str(d)])
                text = capsys.readouterr().out
                files = sorted(p.read_bytes() for p in d.glob("*")) if d.exists() else []
                outs.append((text, files))
            if outs[0] != outs[1]:
                diffs.append(name)
            checked.append(f"{name}({cmd})")
            continue
        first, _ = bundled_run(name)
        d = tmp_path / name
        cli_main(["sweep", "--spec", f"bundled:{name}", "--out", str(d), "--threads", "2"])
        capsys.readouterr()
        csv_path = spec.output_paths(d)["csv_path"]
        if csv_path.read_bytes() != first.to_csv().encode():
            diffs.append(name)
        checked.append(name)
    report(9, "determinism", not diffs,
           f"{len(checked)} bundled specs, byte-identical CSV/outputs across runs "
           f"(second run with 2 threads); differing: {diffs or 'none'}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(pytest.main([__file__, "-q"]))
