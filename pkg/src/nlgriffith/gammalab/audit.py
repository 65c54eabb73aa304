"""Lower-bound audits along a sequence of fields."""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from ..energy import CrackCandidate, EnergyParams, F_eps, F_eps_sliced, limit_energy

__all__ = ["liminf_audit", "l1_distance"]


def l1_distance(u, candidate: CrackCandidate, A=None) -> float:
    """Discrete ``L^1`` distance between ``u`` and the candidate sampled on ``u``'s grid."""
    ref = candidate.sample(u.domain).values
    m = u.domain.mask if A is None else (np.asarray(A, bool) & u.domain.mask)
    diff = np.sqrt(np.sum((u.values - ref) ** 2, axis=-1))
    return float(np.sum(diff[m])) * u.domain.cell_volume


def liminf_audit(u_sequence: Sequence, params: Sequence[EnergyParams],
                 candidate: CrackCandidate, A=None, xi=(0.0, 1.0),
                 tol: float = 0.05) -> dict:
    """Compare energies along a sequence with the lower bounds of its limit.

    For each entry the audit records ``F_eps(u_eps, A)``, the sliced energy
    in direction ``xi`` and the targets

    * (a) ``alpha * int W(Eu)`` of the candidate,
    * (b) ``2 beta * sum length |<nu, xi>|``,
    * (c) ``2 beta (1 - delta) * sum length |<nu, xi>|`` for the sliced energy.

    The verdict looks at the smallest ``eps`` only and requires each
    quantity to reach its target up to the relative slack ``tol``. If the
    ``L^1`` distance to the candidate does not decrease along the sequence
    no verdict is given.
    """
    if len(u_sequence) != len(params) or not u_sequence:
        raise ValueError("u_sequence and params must be non-empty and of equal length")
    xi = np.asarray(xi, dtype=float)
    rows = []
    dists = []
    for u, P in zip(u_sequence, params):
        lim = limit_energy(candidate, P.density.alpha, P.density.beta, P.bulk)
        proj = candidate.projected_measure(xi)
        F = F_eps(u, P, A)
        Fxi = F_eps_sliced(u, P, xi, A) if u.domain.dim == 2 else F
        row = {
            "epsilon": P.epsilon,
            "h": u.domain.h,
            "F": F,
            "F_sliced": Fxi,
            "bound_bulk": P.density.alpha * lim.bulk_integral,
            "bound_jump": 2 * P.density.beta * proj,
            "bound_sliced": 2 * P.density.beta * (1 - P.delta) * proj,
            "l1_distance": l1_distance(u, candidate, A),
        }
        rows.append(row)
        dists.append(row["l1_distance"])
    converging = all(b <= a * (1 + 1e-9) for a, b in zip(dists, dists[1:]))
    last = rows[-1]
    ok_a = last["F"] >= (1 - tol) * last["bound_bulk"]
    ok_b = last["F"] >= (1 - tol) * last["bound_jump"]
    ok_c = last["F_sliced"] >= (1 - tol) * last["bound_sliced"]
    verdict: Optional[bool] = (ok_a and ok_b and ok_c) if converging else None
    return {"rows": rows, "converging": converging, "bulk_ok": ok_a, "jump_ok": ok_b,
            "sliced_ok": ok_c, "passed": verdict}
