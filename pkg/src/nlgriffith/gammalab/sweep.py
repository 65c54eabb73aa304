"""Epsilon sweeps: one experiment evaluated along a decreasing ladder of scales.

Each experiment turns a ladder entry into one or more :class:`ReportRow`
objects and a list of failure reasons; :func:`run_sweep` assembles them
into an :class:`ExperimentReport` and applies the experiment's acceptance
rule. Entries are independent and may run on a thread pool; results are
collected in ladder order, so the report never depends on scheduling.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..densities import PerturbedDensity, coercive_perturbation
from ..energy import (
    CrackCandidate,
    EnergyParams,
    F_eps,
    F_eps_parts,
    F_eps_sliced,
    G_eps,
    H_eps,
    H_eps_parts,
    limit_energy,
)
from ..errors import NLGError, UsageError
from ..grid import DisplacementField, Domain
from . import corpus
from .audit import liminf_audit
from .minimize import MAX_ITER, DirichletBC, minimize_energy
from .recovery import RecoveryParams, build_recovery_sequence, recovery_domain
from .report import ExperimentReport, ReportRow, Verdict

__all__ = ["SweepPlan", "run_sweep", "EXPERIMENTS", "horizontal_crack", "richardson",
           "oned_candidates"]

log = logging.getLogger(__name__)

EXPERIMENTS = ("oned_limit", "recovery_2d", "truncation_audit", "slicing_audit",
               "minimize_F", "minimize_G")

#: Tolerance of the Gamma-limit gap at the smallest ladder entry.
GAP_TOL = 0.05
#: Slack allowed above the explicit competitors after minimisation.
COMPETITOR_TOL = 0.02
#: Absolute slack when checking that gaps do not grow along the ladder.
MONOTONE_ATOL = 1e-3


@dataclass(frozen=True)
class SweepPlan:
    """A ladder of scales, an experiment and its parameters.

    ``h_rule`` maps ``eps`` to the grid spacing; by default
    ``h = eps / 16``. ``options`` holds experiment specific settings
    (documented in :func:`run_sweep`).
    """

    experiment: str
    eps_ladder: tuple
    params: EnergyParams
    h_rule: Callable[[float], float] = field(default=lambda eps: eps / 16)
    bc: Optional[dict] = None
    options: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise UsageError(f"unknown experiment {self.experiment!r}")
        ladder = tuple(float(e) for e in self.eps_ladder)
        if not ladder:
            raise UsageError("empty epsilon ladder")
        if any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise UsageError("epsilon ladder must be strictly decreasing")
        for e in ladder:
            h = self.h_rule(e)
            if e < 2 * h * (1 - 1e-9):
                raise UsageError(f"epsilon={e:.6g} is below twice the grid spacing h={h:.6g}")
        object.__setattr__(self, "eps_ladder", ladder)

    def entry_params(self, eps: float) -> EnergyParams:
        """Template parameters at scale ``eps`` (a coercive slope follows ``eps**2``)."""
        dens = self.params.density
        if isinstance(dens, PerturbedDensity):
            dens = coercive_perturbation(dens.base, eps)
        return self.params.replace(epsilon=eps, density=dens)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def richardson(values, eps, rate: float) -> float:
    """Extrapolate the last two entries assuming an error ``~ eps**rate``."""
    v1, v2 = values[-2], values[-1]
    r = (eps[-2] / eps[-1]) ** rate
    return (r * v2 - v1) / (r - 1)


def horizontal_crack(domain: Domain, y0: float = 0.5, opening=(0.0, 1.0),
                     x_range=None) -> CrackCandidate:
    """Piecewise constant candidate ``u = ±opening/2`` across ``y = y0``."""
    (xl, xh), _ = domain.extents
    if x_range is not None:
        xl, xh = x_range
    op = np.asarray(opening, dtype=float)

    def smooth(X, Y):
        s = np.where(Y > y0, 0.5, -0.5)
        return (s * op[0], s * op[1])

    return CrackCandidate(domain, smooth, [((xl, y0), (xh, y0))])


def oned_candidates(L: float, c: float, n: int):
    """Affine and mid-point jump nodal fields for Dirichlet data ``0, c``."""
    x = np.linspace(0.0, L, n + 1)
    affine = c * x / L
    jump = np.where(x > 0.5 * L, c, 0.0)
    return affine, jump


def _oned_limit_target(L, c, p, params: EnergyParams) -> float:
    dens = params.density
    dom = Domain.from_extents([(0.0, L)], L / 64)
    aff = CrackCandidate(dom, lambda X: c * X / L)
    jmp = CrackCandidate(dom, lambda X: np.where(X > 0.5 * L, c, 0.0), [0.5 * L])
    e1 = limit_energy(aff, dens.alpha, dens.beta, params.bulk).total
    e2 = limit_energy(jmp, dens.alpha, dens.beta, params.bulk).total
    return min(e1, e2)


def _non_increasing(gaps, atol=MONOTONE_ATOL) -> bool:
    return all(b <= a + atol for a, b in zip(gaps, gaps[1:]))


# ---------------------------------------------------------------------------
# experiments: each returns (rows, reasons, summary) for one ladder entry
# ---------------------------------------------------------------------------


def _entry_oned(plan: SweepPlan, k: int, eps: float):
    opt = plan.options
    L = float(opt.get("L", 1.0))
    bc = plan.bc or {"left": 0.0, "right": opt.get("c", 1.0)}
    left, right = float(bc["left"]), float(bc["right"])
    c = right - left
    p = float(opt.get("p", plan.params.bulk.p))
    P = plan.entry_params(eps)
    h = plan.h_rule(eps)
    n = int(round(L / h))
    if abs(n * h - L) > 1e-9 * L:
        raise UsageError(f"h={h:.6g} does not divide L={L}")
    aff, jmp = oned_candidates(L, c, n)
    aff, jmp = aff + left, jmp + left
    dbc = DirichletBC.endpoints(n + 1, left, right)
    res = minimize_energy("H_eps", aff, P, dbc, p=p, I=(0.0, L))
    tot, bulk, surf = H_eps_parts(res.field, eps, P.density, p, (0.0, L), collar=True)
    comp = min(H_eps(aff, eps, P.density, p, (0.0, L), True),
               H_eps(jmp, eps, P.density, p, (0.0, L), True))
    target = _oned_limit_target(L, abs(c), p, P)
    reasons = []
    if tot > comp * (1 + COMPETITOR_TOL):
        reasons.append(f"eps={eps:.6g}: minimised energy {tot:.6g} above competitor {comp:.6g}")
    row = ReportRow(eps, h, tot, bulk, surf, target, iterations=res.iterations,
                    case=f"c={c:.6g}", extras={"competitor": comp, "start": res.start,
                                                "converged": res.converged})
    return [row], reasons


def _entry_recovery(plan: SweepPlan, k: int, eps: float):
    opt = plan.options
    rp = _recovery_params(opt)
    P = plan.entry_params(eps)
    ext = [tuple(e) for e in opt.get("extents", [(0.0, 1.0), (0.0, 1.0)])]
    dom = recovery_domain(ext, eps, rp, int(opt.get("cells_per_eps", 16)))
    cand = horizontal_crack(dom, float(opt.get("y0", 0.5)), opt.get("opening", (0.0, 1.0)))
    u = build_recovery_sequence(cand, eps, rp, dom)
    tot, bulk, surf = F_eps_parts(u, P)
    target = limit_energy(cand, P.density.alpha, P.density.beta, P.bulk).total
    extras = {"gamma": rp.gamma(eps), "cells": int(np.prod(dom.shape))}
    if opt.get("sliced", False):
        extras["F_sliced_e1"] = F_eps_sliced(u, P, (1.0, 0.0))
        extras["F_sliced_e2"] = F_eps_sliced(u, P, (0.0, 1.0))
        lim = liminf_audit([u], [P], cand, xi=(0.0, 1.0))
        extras.update({k2: lim["rows"][0][k2] for k2 in
                       ("bound_bulk", "bound_jump", "bound_sliced", "l1_distance")})
    row = ReportRow(eps, dom.h, tot, bulk, surf, target, case="horizontal_crack", extras=extras)
    return [row], []


def _recovery_params(opt) -> RecoveryParams:
    expo = float(opt.get("gamma_exponent", 1.5))
    return RecoveryParams(gamma_rule=lambda e: e ** expo,
                          cutoff_profile=int(opt.get("cutoff_profile", 3)),
                          transition=opt.get("transition", "inner"))


_CORPUS_TARGETS = {"zero": lambda P: 0.0}


def _entry_truncation(plan: SweepPlan, k: int, eps: float):
    from ..truncation import audit_truncation

    opt = plan.options
    names = opt.get("fields", list(corpus.CORPUS))
    deltas = opt.get("deltas", [plan.params.delta])
    cpe = int(round(eps / plan.h_rule(eps)))
    tol = float(opt.get("tol", 0.05))
    rows, reasons = [], []
    for name in names:
        u = corpus.corpus_field(name, eps, cpe)
        for delta in deltas:
            P = plan.entry_params(eps).replace(delta=float(delta))
            au = audit_truncation(u, P, a=opt.get("a"), b=opt.get("b"), tol=tol)
            tot, bulk, surf = F_eps_parts(u, P)
            slacks = {c.name: c.slack for c in au.certificates}
            failed = [c.name for c in au.certificates if not c.passed]
            if failed:
                reasons.append(f"eps={eps:.6g} {name} delta={delta}: {', '.join(failed)} violated")
            rows.append(ReportRow(eps, u.domain.h, tot, bulk, surf, math.nan,
                                  case=f"{name}/delta={delta:g}", min_slack=min(slacks.values()),
                                  extras={"slacks": slacks, "claim_N": au.claim_N,
                                          "delta_prime": au.sets.delta_prime}))
    return rows, reasons


def _random_field(rng, eps: float, cells: int = 64, cpe: int = 4) -> DisplacementField:
    h = eps / cpe
    dom = Domain.from_extents([(0.0, cells * h)] * 2, h)
    kind = rng.integers(3)
    amp = 10 ** rng.uniform(-3, 0.5)
    if kind == 0:
        vals = rng.normal(size=dom.shape + (2,))
    elif kind == 1:
        X, Y = dom.centers()
        f = rng.normal(size=(4, 2))
        vals = np.stack([np.sin(2 * np.pi * (f[0, c] * X + f[1, c] * Y) / (cells * h))
                         + f[2, c] * X + f[3, c] * Y for c in range(2)], axis=-1)
    else:
        X, Y = dom.centers()
        y0 = rng.uniform(0.3, 0.7) * cells * h
        vals = np.stack([0 * X, np.where(Y > y0, 1.0, 0.0)], axis=-1)
        vals = vals + 0.1 * rng.normal(size=vals.shape)
    return DisplacementField(dom, amp * vals)


def _entry_slicing(plan: SweepPlan, k: int, eps: float):
    opt = plan.options
    n_random = int(opt.get("n_random", 100))
    rng = np.random.default_rng([plan.seed, k])
    P = plan.entry_params(eps)
    worst = -math.inf
    violations = 0
    for _ in range(n_random):
        u = _random_field(rng, eps)
        F = F_eps(u, P)
        for xi in ((1.0, 0.0), (0.0, 1.0)):
            Fx = F_eps_sliced(u, P, xi)
            excess = (Fx - F) / max(abs(F), 1e-300)
            worst = max(worst, excess)
            if Fx > F * (1 + 1e-12) and Fx - F > 1e-300:
                violations += 1
    rows, _ = _entry_recovery(_with_options(plan, sliced=True), k, eps)
    row = rows[0]
    row.case = "recovery/sliced"
    row.extras.update({"random_fields": n_random, "violations": violations,
                       "worst_relative_excess": worst})
    reasons = []
    if violations:
        reasons.append(f"eps={eps:.6g}: {violations} sliced-energy violations")
    return [row], reasons


def _with_options(plan: SweepPlan, **kw) -> SweepPlan:
    opts = dict(plan.options)
    opts.update(kw)
    return SweepPlan(plan.experiment, plan.eps_ladder, plan.params, plan.h_rule, plan.bc,
                     opts, plan.seed)


def _entry_minimize(plan: SweepPlan, k: int, eps: float):
    opt = plan.options
    P = plan.entry_params(eps)
    objective = "F_eps" if plan.experiment == "minimize_F" else "G_eps"
    h = plan.h_rule(eps)
    dom = Domain.from_extents([(0.0, 1.0), (0.0, 1.0)], h)
    bc = plan.bc or {"left": [0.0, 0.0], "right": [opt.get("c", 1.0), 0.0]}
    left = np.asarray(bc["left"], dtype=float)
    right = np.asarray(bc["right"], dtype=float)
    zero = DisplacementField.zeros(dom)
    dbc = DirichletBC.side_strips(zero, left, right, int(opt.get("strip", 1)))
    X, _ = dom.centers()
    x_lo, x_hi = X[0, 0], X[-1, 0]
    s = ((X - x_lo) / (x_hi - x_lo))[..., None]
    aff = DisplacementField(dom, left + s * (right - left))
    crk = DisplacementField(dom, np.where((X > 0.5)[..., None], right, left)
                            * np.ones(dom.shape + (2,)))
    maxit = int(opt.get("max_iter", MAX_ITER))
    res = minimize_energy(objective, aff, P, dbc, max_iter=maxit)

    def energy(u):
        return F_eps(u, P) if objective == "F_eps" else G_eps(u, P).total

    comp = min(energy(aff), energy(crk))
    if objective == "F_eps":
        tot, bulk, surf = F_eps_parts(res.field, P)
    else:
        br = G_eps(res.field, P)
        tot = br.total
        _, bulk, surf = F_eps_parts(res.field, P)
    target = _minimize_target(P, left, right)
    reasons = []
    if tot > comp * (1 + COMPETITOR_TOL):
        reasons.append(f"eps={eps:.6g}: minimised energy {tot:.6g} above competitor {comp:.6g}")
    row = ReportRow(eps, h, tot, bulk, surf, target, iterations=res.iterations,
                    case=objective, extras={"competitor": comp, "start": res.start})
    return [row], reasons


def _minimize_target(P: EnergyParams, left, right) -> float:
    """Smaller limit energy of the affine and the mid-line crack candidates."""
    dom = Domain.from_extents([(0.0, 1.0), (0.0, 1.0)], 1 / 64)
    d = right - left
    aff = CrackCandidate(dom, lambda X, Y: tuple(left[i] + d[i] * X for i in range(2)))

    def cracked(X, Y):
        return tuple(np.where(X > 0.5, right[i], left[i]) + 0 * Y for i in range(2))

    crk = CrackCandidate(dom, cracked, [((0.5, 0.0), (0.5, 1.0))])
    a, b = P.density.alpha, P.density.beta
    return min(limit_energy(aff, a, b, P.bulk, P.fidelity).total,
               limit_energy(crk, a, b, P.bulk, P.fidelity).total)


_ENTRY = {
    "oned_limit": _entry_oned,
    "recovery_2d": _entry_recovery,
    "truncation_audit": _entry_truncation,
    "slicing_audit": _entry_slicing,
    "minimize_F": _entry_minimize,
    "minimize_G": _entry_minimize,
}


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------


def _verdict(plan: SweepPlan, rows, reasons, complete: bool):
    reasons = list(reasons)
    summary = {}
    exp = plan.experiment
    if not complete:
        reasons.insert(0, "incomplete run")
    elif exp in ("oned_limit", "minimize_F", "minimize_G"):
        gaps = [r.relative_gap for r in rows]
        summary["final_gap"] = gaps[-1]
        if exp == "oned_limit":
            if gaps[-1] > GAP_TOL:
                reasons.append(f"final relative gap {gaps[-1]:.4g} exceeds {GAP_TOL}")
            if not _non_increasing(gaps):
                reasons.append("relative gap increases along the ladder")
        else:
            last = rows[-1]
            if last.energy_total > last.limit_target * (1 + GAP_TOL):
                reasons.append(f"final energy {last.energy_total:.6g} exceeds the limit "
                               f"upper bound {last.limit_target:.6g} by more than {GAP_TOL:.0%}")
    elif exp in ("recovery_2d", "slicing_audit"):
        F = [r.energy_total for r in rows]
        eps = [r.epsilon for r in rows]
        target = rows[-1].limit_target
        summary["raw_final_gap"] = rows[-1].relative_gap
        if len(rows) >= 2:
            rate = float(plan.options.get("extrapolation_rate", 0.5))
            ext = richardson(F, eps, rate)
            gap = abs(ext - target) / max(target, 1e-12)
            summary.update({"extrapolated": ext, "extrapolated_gap": gap, "rate": rate})
            if gap > GAP_TOL:
                reasons.append(f"extrapolated gap {gap:.4g} exceeds {GAP_TOL}")
            if any(b > a * (1 + 1e-12) for a, b in zip(F, F[1:])):
                reasons.append("energy does not decrease along the ladder")
        elif rows[-1].relative_gap > GAP_TOL:
            reasons.append(f"final relative gap {rows[-1].relative_gap:.4g} exceeds {GAP_TOL}")
        if exp == "slicing_audit":
            last = rows[-1].extras
            ok_b = last["F_sliced_e2"] >= (1 - GAP_TOL) * last["bound_sliced"]
            ok_e1 = abs(last["F_sliced_e1"]) <= GAP_TOL * max(last["bound_sliced"], 1e-12)
            summary.update({"sliced_e2_ok": ok_b, "sliced_e1_ok": ok_e1})
            if not ok_b:
                reasons.append("sliced energy along e2 below 2 beta (1 - delta) length")
            if not ok_e1:
                reasons.append("sliced energy along e1 not close to 0")
    elif exp == "truncation_audit":
        summary["min_slack"] = min(r.min_slack for r in rows)
    return Verdict(not reasons, reasons), summary


def plan_hash(plan: SweepPlan) -> str:
    desc = {
        "experiment": plan.experiment,
        "eps_ladder": list(plan.eps_ladder),
        "h": [plan.h_rule(e) for e in plan.eps_ladder],
        "density": plan.params.density.to_dict(),
        "bulk": plan.params.bulk.to_dict(),
        "fidelity": plan.params.fidelity.to_dict() if plan.params.fidelity else None,
        "delta": plan.params.delta,
        "bc": plan.bc,
        "options": plan.options,
        "seed": plan.seed,
    }
    return hashlib.sha256(json.dumps(desc, sort_keys=True, default=str).encode()).hexdigest()


def run_sweep(plan: SweepPlan, threads: int = 1, provenance: Optional[dict] = None
              ) -> ExperimentReport:
    """Run ``plan`` along its ladder and judge the result.

    Experiment options:

    ``oned_limit``
        ``L`` (default 1), ``c`` or ``bc = {"left", "right"}``, ``p``.
        Passes if the final gap to ``min(alpha c^p / L^(p-1), 2 beta)`` is
        at most 5 %, gaps do not grow by more than ``1e-3`` between
        entries and every minimised energy is within 2 % of the better of
        the affine and single-jump competitors.
    ``recovery_2d``
        ``gamma_exponent`` (1.5), ``cutoff_profile`` (3), ``transition``,
        ``cells_per_eps`` (16), ``opening``. Passes if the energy decreases
        along the ladder and the Richardson extrapolation of the last two
        entries (error ``~ eps^rate``, ``extrapolation_rate`` 0.5) is within
        5 % of the limit energy.
    ``truncation_audit``
        ``fields`` (corpus names), ``deltas``, ``tol``, optional ``a``, ``b``.
        Passes if every certificate holds.
    ``slicing_audit``
        ``n_random`` (100) random fields per entry for ``F_xi <= F``, plus
        the recovery sequence with its sliced lower bounds.
    ``minimize_F`` / ``minimize_G``
        ``c`` or ``bc`` (left/right column values), ``strip``, ``max_iter``.
        Passes if minimisation never ends above the explicit competitors
        and the final energy does not exceed the limit upper bound by 5 %.
    """
    fn = _ENTRY[plan.experiment]

    def one(item):
        k, eps = item
        t0 = time.perf_counter()
        rows, reasons = fn(plan, k, eps)
        dt = 1000.0 * (time.perf_counter() - t0)
        for r in rows:
            r.runtime_ms = dt / max(len(rows), 1)
        log.info("%s eps=%.6g done in %.0f ms", plan.experiment, eps, dt)
        return rows, reasons

    items = list(enumerate(plan.eps_ladder))
    results = []
    complete = True
    error = None
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            futures = [ex.submit(one, it) for it in items]
            for fut in futures:
                try:
                    results.append(fut.result())
                except NLGError as exc:
                    complete, error = False, exc
                    break
    else:
        for it in items:
            try:
                results.append(one(it))
            except NLGError as exc:
                complete, error = False, exc
                break
    rows = [r for rs, _ in results for r in rs]
    reasons = [m for _, ms in results for m in ms]
    if error is not None:
        reasons.append(f"{type(error).__name__}: {error}")
    verdict, summary = _verdict(plan, rows, reasons, complete and bool(rows))
    prov = {"spec_hash": plan_hash(plan), "seed": plan.seed}
    if provenance:
        prov.update(provenance)
    return ExperimentReport(plan.experiment, rows, verdict, prov, complete, summary)
