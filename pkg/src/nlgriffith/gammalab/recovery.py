"""Recovery sequences ``u_eps = u (1 - phi_eps)`` for explicit crack candidates.

``phi_eps`` is a polynomial smoothstep of the distance to the jump set. It
equals one on a thin tube of width ``gamma_eps = o(eps)`` around the
crack and vanishes away from it, so ``u_eps`` is smooth, agrees with ``u``
far from the crack and is zero on the tube.

Two placements of the transition layer are available:

``"inner"`` (default)
    ``phi = 1`` for ``dist <= gamma/2`` and ``phi = 0`` for
    ``dist >= gamma``. Outside the ``gamma``-tube the field is untouched,
    so only points within ``eps`` of that tube see the cut and the energy
    tends to ``2 beta`` per unit crack length, with an excess of order
    ``gamma / eps``.
``"outer"``
    ``phi = 1`` for ``dist <= gamma`` and ``phi = 0`` for
    ``dist >= gamma + eps``. The transition layer then has width ``eps``
    and the saturated region around it is about twice as wide, so the
    energy approaches ``4 beta`` per unit length instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..energy import CrackCandidate
from ..errors import UsageError
from ..grid import DisplacementField, Domain

__all__ = ["RecoveryParams", "smoothstep", "cutoff", "recovery_spacing", "recovery_domain",
           "build_recovery_sequence", "default_gamma"]


def default_gamma(epsilon: float) -> float:
    return epsilon ** 1.5


def smoothstep(s, degree: int = 3) -> np.ndarray:
    """Polynomial step from 0 to 1 on ``[0, 1]`` (clamped outside)."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    if degree == 1:
        return s
    if degree == 3:
        return s * s * (3.0 - 2.0 * s)
    if degree == 5:
        return s ** 3 * (s * (6.0 * s - 15.0) + 10.0)
    raise UsageError("smoothstep degree must be 1, 3 or 5")


@dataclass(frozen=True)
class RecoveryParams:
    """Tube width rule, smoothstep degree and transition placement."""

    gamma_rule: Callable[[float], float] = default_gamma
    cutoff_profile: int = 3
    transition: str = "inner"

    def __post_init__(self):
        if self.cutoff_profile not in (1, 3, 5):
            raise UsageError("cutoff_profile must be 1, 3 or 5")
        if self.transition not in ("inner", "outer"):
            raise UsageError("transition must be 'inner' or 'outer'")

    def gamma(self, epsilon: float) -> float:
        g = float(self.gamma_rule(epsilon))
        if not (0 < g < epsilon):
            raise UsageError(f"gamma={g:.6g} must lie in (0, eps={epsilon:.6g})")
        return g

    def check_ladder(self, ladder) -> None:
        """``gamma < eps`` everywhere and ``gamma/eps`` decreasing along the ladder."""
        ratios = [self.gamma(e) / e for e in ladder]
        if any(r2 >= r1 for r1, r2 in zip(ratios, ratios[1:])):
            raise UsageError("gamma/eps must decrease along the ladder")


def cutoff(dist: np.ndarray, epsilon: float, gamma: float, rp: RecoveryParams) -> np.ndarray:
    """``phi_eps`` as a function of the distance to the jump set."""
    if rp.transition == "inner":
        return 1.0 - smoothstep((dist - 0.5 * gamma) / (0.5 * gamma), rp.cutoff_profile)
    return 1.0 - smoothstep((dist - gamma) / epsilon, rp.cutoff_profile)


def recovery_spacing(epsilon: float, rp: RecoveryParams, cells_per_eps: int = 16) -> float:
    """Target spacing ``min(eps / cells_per_eps, gamma / 2)``.

    The second term keeps at least two cells across the cutoff layer.
    """
    return min(epsilon / cells_per_eps, 0.5 * rp.gamma(epsilon))


def recovery_domain(extents, epsilon: float, rp: RecoveryParams,
                    cells_per_eps: int = 16) -> Domain:
    """Grid over ``extents`` with spacing at most :func:`recovery_spacing`.

    The shortest extent is split into the smallest even number of cells
    that meets the target, so its midline falls on cell faces. Other
    extents must then be whole multiples of the resulting spacing.
    """
    h0 = recovery_spacing(epsilon, rp, cells_per_eps)
    base = min(hi - lo for lo, hi in extents)
    n = math.ceil(base / h0 - 1e-9)
    n += n % 2
    return Domain.from_extents(extents, base / n)


def _clearance(candidate: CrackCandidate) -> float:
    ext = candidate.domain.extents
    if candidate.domain.dim == 1:
        return min(min(x - ext[0][0], ext[0][1] - x) for x in candidate.jump_set)
    out = math.inf
    for (x0, y0), (x1, y1) in candidate.jump_set:
        if y0 == y1:
            out = min(out, y0 - ext[1][0], ext[1][1] - y0)
        else:
            out = min(out, x0 - ext[0][0], ext[0][1] - x0)
    return out


def build_recovery_sequence(candidate: CrackCandidate, epsilon: float,
                            rp: Optional[RecoveryParams] = None,
                            domain: Optional[Domain] = None) -> DisplacementField:
    """Sample ``u (1 - phi_eps)`` on ``domain`` (default: the candidate's grid)."""
    rp = rp or RecoveryParams()
    dom = domain or candidate.domain
    u = candidate.sample(dom)
    if not candidate.jump_set:
        return u
    gamma = rp.gamma(epsilon)
    reach = gamma if rp.transition == "inner" else gamma + epsilon
    if reach > _clearance(candidate):
        raise UsageError(
            f"cutoff tube of width {reach:.6g} exceeds the crack's clearance from the boundary")
    phi = cutoff(candidate.distance(dom), epsilon, gamma, rp)
    return DisplacementField(dom, u.values * (1.0 - phi)[..., None])
