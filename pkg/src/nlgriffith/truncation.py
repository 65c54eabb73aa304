"""Threshold sets, truncated and averaged competitors, and their certificates.

Given ``u`` and a truncated affine minorant ``min{a t, b}`` of ``f``:

* ``psi = eps * avg_{B_(1-delta)eps(x) ∩ A} W(Eu)`` is the threshold field;
* ``K = {psi >= C_delta b / a}`` with ``C_delta = (1 - delta)^-d``;
* ``K'' = {dist(., K) <= delta eps}`` and ``K' = {dist(., K) <= delta'}``
  where ``delta'`` is the distance level in ``(0, delta eps)`` whose
  sub-level set has the smallest discrete perimeter;
* ``u_bar`` equals ``u`` off ``K'`` and vanishes on ``K'``;
* ``v`` is the inner-ball average of ``u`` off ``K'`` and vanishes on ``K'``.

The energy of ``u`` controls the volume of ``K''``, the perimeter of
``K'`` and the elastic energy of ``v``; each bound is returned as a
:class:`Certificate` carrying both sides and the relative margin.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .densities import minorant_family
from .energy import EnergyParams, F_eps, _region
from .errors import UsageError
from .grid import (
    DisplacementField,
    ball_average,
    ball_stencil,
    discrete_perimeter,
    sym_gradient,
)

__all__ = [
    "CompactnessParams",
    "Certificate",
    "TruncationSets",
    "TruncationAudit",
    "compactness_params",
    "threshold_field",
    "build_truncation_sets",
    "truncated_competitor",
    "competitor_strain_energy",
    "claim_constant",
    "averaged_competitor",
    "audit_truncation",
    "rle_encode",
    "rle_decode",
]

DEFAULT_TOL = 0.05


@dataclass(frozen=True)
class CompactnessParams:
    """Parameters of the threshold construction in dimension ``dim``."""

    delta: float
    a: float
    b: float
    dim: int
    C_delta: Optional[float] = None

    def __post_init__(self):
        if not (0 < self.delta < 1):
            raise UsageError("delta must lie in (0, 1)")
        if not (self.a > 0 and self.b > 0):
            raise UsageError("minorant parameters a and b must be positive")
        expected = (1.0 - self.delta) ** (-self.dim)
        if self.C_delta is None:
            object.__setattr__(self, "C_delta", expected)
        elif abs(self.C_delta - expected) > 1e-12 * expected:
            raise UsageError(f"C_delta={self.C_delta} inconsistent with delta (expected {expected})")

    @property
    def threshold(self) -> float:
        return self.C_delta * self.b / self.a


def compactness_params(params: EnergyParams, dim: int, a: Optional[float] = None,
                       b: Optional[float] = None) -> CompactnessParams:
    """Pick the minorant ``(a, b)``.

    Explicit values win. A truncated affine density is its own minorant.
    Otherwise the pair of a 64 x 64 family with ``a >= alpha (1 - delta)``
    and the largest ``b`` is used.
    """
    dens = params.density
    if a is None or b is None:
        if getattr(dens, "kind", None) == "truncated_affine":
            a0, b0 = dens.alpha, dens.beta
        else:
            t = np.concatenate([[0.0], np.geomspace(1e-6, 1e3, 2048) * dens.kink])
            fam = minorant_family(dens, 64, 64, t)
            a0, b0 = fam.best_pair(dens.alpha * (1 - params.delta))
        a = a0 if a is None else a
        b = b0 if b is None else b
    return CompactnessParams(params.delta, float(a), float(b), dim)


@dataclass(frozen=True)
class Certificate:
    """Inequality ``lhs <= rhs * (1 + tol)`` with ``slack = (rhs - lhs) / rhs``."""

    name: str
    lhs: float
    rhs: float
    tol: float
    slack: float
    passed: bool

    @classmethod
    def make(cls, name: str, lhs: float, rhs: float, tol: float = DEFAULT_TOL) -> "Certificate":
        lhs, rhs = float(lhs), float(rhs)
        if rhs > 0:
            slack = (rhs - lhs) / rhs
        else:
            slack = 0.0 if lhs <= 0 else -np.inf
        passed = bool(lhs <= rhs * (1 + tol) or lhs <= 0)
        return cls(name, lhs, rhs, float(tol), float(slack), passed)

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "slack": self.slack, "tol": self.tol,
                "passed": self.passed}


def rle_encode(B: np.ndarray) -> dict:
    """Run-length code of a boolean grid in C order."""
    flat = np.asarray(B, dtype=bool).ravel()
    if flat.size == 0:
        return {"shape": list(B.shape), "start": False, "runs": []}
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    return {"shape": list(B.shape), "start": bool(flat[0]), "runs": np.diff(bounds).tolist()}


def rle_decode(code: dict) -> np.ndarray:
    vals = []
    cur = bool(code["start"])
    for r in code["runs"]:
        vals.append(np.full(int(r), cur))
        cur = not cur
    flat = np.concatenate(vals) if vals else np.zeros(0, dtype=bool)
    return flat.reshape(code["shape"])


@dataclass(frozen=True, eq=False)
class TruncationSets:
    """``K ⊆ K' ⊆ K''`` together with the certified bounds."""

    K: np.ndarray = field(repr=False)
    K_prime: np.ndarray = field(repr=False)
    K_dprime: np.ndarray = field(repr=False)
    delta_prime: float
    perimeter_K_prime: float
    region: np.ndarray = field(repr=False)
    cparams: CompactnessParams
    epsilon: float
    h: float
    energy: float
    measure_bound: Certificate
    perimeter_bound: Certificate

    def __post_init__(self):
        if np.any(self.K & ~self.K_prime) or np.any(self.K_prime & ~self.K_dprime):
            raise AssertionError("truncation sets are not nested")
        if not (0 < self.delta_prime < self.cparams.delta * self.epsilon):
            raise AssertionError("delta' outside (0, delta eps)")

    @property
    def empty(self) -> bool:
        return not self.K.any()

    def to_dict(self) -> dict:
        return {
            "K": rle_encode(self.K),
            "K_prime": rle_encode(self.K_prime),
            "K_dprime": rle_encode(self.K_dprime),
            "delta_prime": self.delta_prime,
            "perimeter_K_prime": self.perimeter_K_prime,
            "epsilon": self.epsilon,
            "h": self.h,
            "F_eps": self.energy,
            "compactness": asdict(self.cparams),
            "certificates": {
                "measure_bound": self.measure_bound.to_dict(),
                "perimeter_bound": self.perimeter_bound.to_dict(),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def threshold_field(u: DisplacementField, params: EnergyParams, A=None) -> np.ndarray:
    """``eps`` times the inner-ball average of ``W(Eu)`` over ``B ∩ A``."""
    dom = u.domain
    radius = (1.0 - params.delta) * params.epsilon
    if radius < dom.h * (1 - 1e-9):
        raise UsageError(f"inner radius (1-delta) eps = {radius:.6g} is below h = {dom.h:.6g}")
    st = ball_stencil(radius, dom.h, dom.dim)
    region = _region(dom, A)
    s = params.bulk.of_strain(sym_gradient(u).values)
    return params.epsilon * ball_average(s, st, region)


def _distance_to(K: np.ndarray, h: float) -> np.ndarray:
    if not K.any():
        return np.full(K.shape, np.inf)
    return ndimage.distance_transform_edt(~K, sampling=h)


def build_truncation_sets(u: DisplacementField, params: EnergyParams, A=None,
                          a: Optional[float] = None, b: Optional[float] = None,
                          energy: Optional[float] = None,
                          tol: float = DEFAULT_TOL) -> TruncationSets:
    """Threshold, dilate and select ``delta'``; certify both bounds."""
    dom = u.domain
    eps, delta = params.epsilon, params.delta
    cp = compactness_params(params, dom.dim, a, b)
    region = _region(dom, A)
    psi = threshold_field(u, params, A)
    K = region & (psi >= cp.threshold)
    dist = _distance_to(K, dom.h)
    reach = delta * eps
    K2 = region & (dist <= reach * (1 + 1e-12))
    if K.any():
        levels = np.unique(dist[region & (dist > 0) & (dist < reach * (1 - 1e-12))])
    else:
        levels = np.empty(0)
    best_t, best_S, best_per = 0.5 * reach, K.copy(), discrete_perimeter(K, region, dom.h)
    if levels.size:
        best_per = np.inf
        for t in levels:
            S = region & (dist <= t)
            per = discrete_perimeter(S, region, dom.h)
            if per < best_per:
                best_t, best_S, best_per = float(t), S, per
    F = F_eps(u, params, A) if energy is None else float(energy)
    meas = Certificate.make("measure_bound", cp.b * np.count_nonzero(K2) * dom.cell_volume,
                            eps * F, tol)
    perc = Certificate.make("perimeter_bound", best_per, F / (delta * cp.b), tol)
    return TruncationSets(K, best_S, K2, best_t, float(best_per), region, cp, eps, dom.h, F,
                          meas, perc)


def truncated_competitor(u: DisplacementField, sets: TruncationSets) -> DisplacementField:
    """``u`` off ``K'`` and zero on ``K'``."""
    vals = np.where(sets.K_prime[..., None], 0.0, u.values)
    return DisplacementField(u.domain, vals)


def _outside_mask(sets: TruncationSets) -> np.ndarray:
    return sets.region & ~sets.K_prime


def competitor_strain_energy(v: DisplacementField, sets: TruncationSets, bulk) -> np.ndarray:
    """``W(Ev)`` with differences confined to ``A \\ K'``.

    The cut along the boundary of ``K'`` is treated as a jump, so the one
    cell collar where a difference would straddle it is not charged to
    the bulk; cells in ``K'`` carry zero.
    """
    keep = _outside_mask(sets)
    if not keep.any():
        return np.zeros(v.domain.shape)
    E = sym_gradient(v, keep).values
    s = bulk.of_strain(E)
    return np.where(keep, s, 0.0)


def claim_constant(u_bar: DisplacementField, sets: TruncationSets, params: EnergyParams) -> float:
    """Empirical ``N = max_x eps (1-delta)^d avg_{B_(1-delta)eps(x)} W(E u_bar) / (b/a)``."""
    dom = u_bar.domain
    s = competitor_strain_energy(u_bar, sets, params.bulk)
    st = ball_stencil((1 - params.delta) * params.epsilon, dom.h, dom.dim)
    avg = ball_average(s, st, sets.region)
    cp = sets.cparams
    scale = params.epsilon * (1 - params.delta) ** dom.dim
    if not sets.region.any():
        return 0.0
    return float(np.max(scale * avg[sets.region]) * cp.a / cp.b)


def averaged_competitor(u: DisplacementField, params: EnergyParams,
                        sets: Optional[TruncationSets] = None, A=None,
                        tol: float = DEFAULT_TOL):
    """Inner-ball average of ``u`` off ``K'``, zero on ``K'``, with bounds.

    Returns ``(v, bulk_bound, jump_bound)``. The bulk bound compares
    ``alpha (1-delta)^(2d+1) int_A W(Ev)`` with ``F_eps(u, A)``; the jump
    bound compares the discrete perimeter of ``K'`` with ``F_eps / (delta b)``.
    """
    dom = u.domain
    if sets is None:
        sets = build_truncation_sets(u, params, A, tol=tol)
    region = sets.region
    st = ball_stencil((1 - params.delta) * params.epsilon, dom.h, dom.dim)
    avg = np.stack([ball_average(u.values[..., j], st, region) for j in range(dom.dim)], axis=-1)
    vals = np.where(_outside_mask(sets)[..., None], avg, 0.0)
    v = DisplacementField(dom, vals)
    Wv = competitor_strain_energy(v, sets, params.bulk)
    alpha = params.density.alpha
    lhs = alpha * (1 - params.delta) ** (2 * dom.dim + 1) * float(np.sum(Wv)) * dom.cell_volume
    bulk = Certificate.make("bulk_bound", lhs, sets.energy, tol)
    jump = Certificate.make("jump_bound", sets.perimeter_K_prime,
                            sets.energy / (params.delta * sets.cparams.b), tol)
    return v, bulk, jump


@dataclass(frozen=True, eq=False)
class TruncationAudit:
    """All certificates of one field, plus the measured claim constant."""

    sets: TruncationSets
    bulk_bound: Certificate
    jump_bound: Certificate
    truncation_bound: Certificate
    claim_N: float

    @property
    def certificates(self) -> list:
        return [self.sets.measure_bound, self.sets.perimeter_bound, self.bulk_bound,
                self.jump_bound, self.truncation_bound]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.certificates)

    def to_dict(self) -> dict:
        d = self.sets.to_dict()
        for c in self.certificates[2:]:
            d["certificates"][c.name] = c.to_dict()
        d["claim_N"] = self.claim_N
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def audit_truncation(u: DisplacementField, params: EnergyParams, A=None,
                     a: Optional[float] = None, b: Optional[float] = None,
                     tol: float = DEFAULT_TOL) -> TruncationAudit:
    """Build the sets and evaluate every certificate for ``u``.

    The truncation bound checks that cutting ``u`` to zero on ``K'`` costs
    no more than the bulk energy it had plus ``beta`` per unit perimeter:
    ``F_eps(u_bar) <= F_eps(u) + beta * perimeter(K')``, where the strain
    of ``u_bar`` ignores the cut (see :func:`competitor_strain_energy`).
    """
    sets = build_truncation_sets(u, params, A, a, b, tol=tol)
    _, bulk, jump = averaged_competitor(u, params, sets, A, tol)
    u_bar = truncated_competitor(u, sets)
    N = claim_constant(u_bar, sets, params)
    dom = u.domain
    s = competitor_strain_energy(u_bar, sets, params.bulk)
    st = ball_stencil(params.epsilon, dom.h, dom.dim)
    avg = ball_average(s, st, sets.region)
    F_bar = float(np.sum(params.density(params.epsilon * avg[sets.region]))) \
        * dom.cell_volume / params.epsilon
    trunc = Certificate.make("truncation_bound", F_bar,
                             sets.energy + params.density.beta * sets.perimeter_K_prime, tol)
    return TruncationAudit(sets, bulk, jump, trunc, N)
