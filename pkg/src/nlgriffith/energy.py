"""Non-local energies on grids and limit energies of explicit crack candidates.

``F_eps(u, A) = (1/eps) int_A f(eps * avg_{B_eps(x) ∩ A} W(Eu)) dx``

is evaluated with the midpoint rule: ``W(Eu)`` per cell, a discrete ball
average normalised by the covered in-``A`` cells, ``f`` pointwise and a
cell sum. The same pipeline provides the gradient with respect to the
grid values, which :mod:`nlgriffith.gammalab.minimize` uses.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .densities import BulkDensity, FidelityDensity, NonlocalDensity
from .errors import UsageError
from .grid import (
    DisplacementField,
    Domain,
    ball_average,
    ball_stencil,
    ball_sum,
    sym_gradient,
    sym_gradient_adjoint,
)

__all__ = [
    "EnergyParams",
    "CrackCandidate",
    "EnergyBreakdown",
    "F_eps",
    "F_eps_value_and_grad",
    "G_eps",
    "G_eps_value_and_grad",
    "energy_breakdown",
    "F_eps_sliced",
    "H_eps",
    "H_eps_value_and_grad",
    "F_eps_parts",
    "H_eps_parts",
    "limit_energy",
    "check_epsilon",
]

_EPS_RTOL = 1e-9


@dataclass(frozen=True)
class EnergyParams:
    """Scale ``epsilon``, inner-radius parameter ``delta`` and densities."""

    epsilon: float
    density: NonlocalDensity
    bulk: BulkDensity
    delta: float = 0.5
    fidelity: Optional[FidelityDensity] = None

    def __post_init__(self):
        if not (self.epsilon > 0 and np.isfinite(self.epsilon)):
            raise UsageError("epsilon must be positive and finite")
        if not (0 < self.delta < 1):
            raise UsageError("delta must lie in (0, 1)")

    def C_delta(self, dim: int) -> float:
        return (1.0 - self.delta) ** (-dim)

    def replace(self, **kw) -> "EnergyParams":
        d = {k: getattr(self, k) for k in ("epsilon", "density", "bulk", "delta", "fidelity")}
        d.update(kw)
        return EnergyParams(**d)


def check_epsilon(epsilon: float, h: float) -> None:
    """Raise unless ``epsilon >= 2 h``."""
    if epsilon < 2 * h * (1 - _EPS_RTOL):
        raise UsageError(f"epsilon={epsilon:.6g} is below twice the grid spacing h={h:.6g}")


def _region(domain: Domain, A) -> np.ndarray:
    if A is None:
        return domain.mask
    A = np.asarray(A, dtype=bool)
    if A.shape != domain.shape:
        raise UsageError("localisation mask shape does not match the grid")
    return A & domain.mask


def _label(domain: Domain, A) -> str:
    if A is None:
        return "domain"
    return f"mask[{int(np.count_nonzero(_region(domain, A)))} cells]"


def _nonlocal_pieces(u: DisplacementField, params: EnergyParams, A):
    dom = u.domain
    check_epsilon(params.epsilon, dom.h)
    E = sym_gradient(u).values
    s = params.bulk.of_strain(E)
    region = _region(dom, A)
    st = ball_stencil(params.epsilon, dom.h, dom.dim)
    avg = ball_average(s, st, region)
    return E, s, region, st, avg


def F_eps(u: DisplacementField, params: EnergyParams, A=None) -> float:
    """Non-local energy of ``u`` localised on ``A`` (default the whole domain)."""
    _, _, region, _, avg = _nonlocal_pieces(u, params, A)
    eps = params.epsilon
    vals = params.density(eps * avg[region])
    return float(np.sum(vals)) * u.domain.cell_volume / eps


def F_eps_parts(u: DisplacementField, params: EnergyParams, A=None) -> tuple:
    """``(total, bulk_part, surface_part)`` of :func:`F_eps`.

    Points where ``eps * avg`` reaches the saturation scale ``beta/alpha``
    are booked as surface, the rest as bulk.
    """
    _, _, region, _, avg = _nonlocal_pieces(u, params, A)
    eps = params.epsilon
    t = eps * avg[region]
    vals = params.density(t)
    scale = u.domain.cell_volume / eps
    sat = t >= params.density.kink
    return (float(np.sum(vals)) * scale, float(np.sum(vals[~sat])) * scale,
            float(np.sum(vals[sat])) * scale)


def F_eps_value_and_grad(u: DisplacementField, params: EnergyParams, A=None):
    """Value of :func:`F_eps` and its gradient with respect to ``u.values``.

    At the kink of a truncated affine density the left derivative is used.
    """
    E, s, region, st, avg = _nonlocal_pieces(u, params, A)
    dom = u.domain
    eps = params.epsilon
    hd = dom.cell_volume
    t = eps * avg
    value = float(np.sum(params.density(t[region]))) * hd / eps
    den = ball_sum(region.astype(float), st)
    coef = np.zeros_like(t)
    fp = params.density.derivative(t[region])
    coef[region] = fp / den[region]
    g_s = hd * ball_sum(coef, st) * region
    S = g_s[..., None, None] * params.bulk.strain_gradient(E)
    grad = sym_gradient_adjoint(S, dom)
    return value, grad


@dataclass(frozen=True)
class EnergyBreakdown:
    """Energy total with its constituents.

    ``formula`` is ``"nonlocal"`` (``total = nonlocal_energy +
    fidelity_integral``) or ``"limit"`` (``total = alpha * bulk_integral
    + 2 beta * surface_measure + fidelity_integral``).
    """

    total: float
    bulk_integral: float
    surface_measure: float
    fidelity_integral: Optional[float]
    localized_on: str
    formula: str
    nonlocal_energy: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    epsilon: Optional[float] = None
    delta: Optional[float] = None
    h: Optional[float] = None

    def recompute(self) -> float:
        fid = self.fidelity_integral or 0.0
        if self.formula == "nonlocal":
            return self.nonlocal_energy + fid
        if self.formula == "limit":
            return self.alpha * self.bulk_integral + 2 * self.beta * self.surface_measure + fid
        raise UsageError(f"unknown formula {self.formula!r}")

    def consistent(self, rtol: float = 1e-12) -> bool:
        r = self.recompute()
        return abs(r - self.total) <= rtol * max(abs(self.total), 1e-300)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _fidelity_integral(u: DisplacementField, psi: FidelityDensity, region) -> float:
    return float(np.sum(psi(u.norm()[region]))) * u.domain.cell_volume


def energy_breakdown(u: DisplacementField, params: EnergyParams, A=None) -> EnergyBreakdown:
    """:class:`EnergyBreakdown` of ``F_eps`` (plus the fidelity term if present).

    ``bulk_integral`` is ``int_A W(Eu)``; ``surface_measure`` estimates the
    crack measure as the volume of the saturated set
    ``{eps * avg >= beta/alpha}`` divided by ``2 eps``.
    """
    _, s, region, _, avg = _nonlocal_pieces(u, params, A)
    dom = u.domain
    eps = params.epsilon
    hd = dom.cell_volume
    t = eps * avg[region]
    F = float(np.sum(params.density(t))) * hd / eps
    fid = None
    if params.fidelity is not None:
        fid = _fidelity_integral(u, params.fidelity, region)
    sat = float(np.count_nonzero(t >= params.density.kink)) * hd / (2 * eps)
    return EnergyBreakdown(
        total=F + (fid or 0.0),
        bulk_integral=float(np.sum(s[region])) * hd,
        surface_measure=sat,
        fidelity_integral=fid,
        localized_on=_label(dom, A),
        formula="nonlocal",
        nonlocal_energy=F,
        alpha=params.density.alpha,
        beta=params.density.beta,
        epsilon=eps,
        delta=params.delta,
        h=dom.h,
    )


def G_eps(u: DisplacementField, params: EnergyParams, A=None) -> EnergyBreakdown:
    """``F_eps(u, A) + int_A psi(|u|)`` with a bulk/surface breakdown."""
    if params.fidelity is None:
        raise UsageError("G_eps needs a fidelity density")
    return energy_breakdown(u, params, A)


def G_eps_value_and_grad(u: DisplacementField, params: EnergyParams, A=None):
    if params.fidelity is None:
        raise UsageError("G_eps needs a fidelity density")
    value, grad = F_eps_value_and_grad(u, params, A)
    region = _region(u.domain, A)
    r = u.norm()
    hd = u.domain.cell_volume
    value += float(np.sum(params.fidelity(r[region]))) * hd
    dpsi = params.fidelity.derivative(r)
    with np.errstate(invalid="ignore", divide="ignore"):
        fac = np.where((r > 0) & region, dpsi / r, 0.0)
    grad = grad + hd * fac[..., None] * u.values
    return value, grad


def F_eps_sliced(u: DisplacementField, params: EnergyParams, xi, A=None) -> float:
    """Sliced energy along the axis direction ``xi``.

    ``(1/eps) int_A f(c * eps * |B|^-1 int_{B_eps(x) ∩ A} |<(Eu) xi, xi>|^p)``
    where ``|B|`` is the measure of the full discrete ball, the discrete
    stand-in for ``omega_d eps^d``. Since the in-``A`` part of the ball is
    never larger than the full ball, the result never exceeds ``F_eps``.
    """
    dom = u.domain
    if dom.dim != 2:
        raise UsageError("sliced energies are defined for d = 2")
    k = _axis_index(xi)
    check_epsilon(params.epsilon, dom.h)
    E = sym_gradient(u).values
    region = _region(dom, A)
    st = ball_stencil(params.epsilon, dom.h, dom.dim)
    c = params.bulk.c
    s = c * np.abs(E[..., k, k]) ** params.bulk.p
    t = params.epsilon * ball_sum(np.where(region, s, 0.0), st) / st.count
    vals = params.density(t[region])
    return float(np.sum(vals)) * dom.cell_volume / params.epsilon


def _axis_index(xi) -> int:
    if isinstance(xi, (int, np.integer)):
        if xi in (0, 1):
            return int(xi)
        raise UsageError("axis index must be 0 or 1")
    if isinstance(xi, str):
        key = {"e1": 0, "e2": 1, "x": 0, "y": 1}.get(xi.lower())
        if key is None:
            raise UsageError(f"unsupported slice direction {xi!r}")
        return key
    v = np.asarray(xi, dtype=float).ravel()
    for k, e in enumerate(np.eye(2)):
        if v.shape == (2,) and np.allclose(v, e, atol=1e-12):
            return k
    raise UsageError("only the axis directions e1 and e2 are supported")


# ---------------------------------------------------------------------------
# one-dimensional energy
# ---------------------------------------------------------------------------


def _window_weights(epsilon: float, h: float) -> np.ndarray:
    """Overlap of ``[x - eps, x + eps]`` with cell ``k`` (``x`` a cell midpoint), in cells."""
    r = epsilon / h
    m = int(np.ceil(r + 0.5 - 1e-12))
    k = np.arange(-m, m + 1)
    w = np.clip(r + 0.5 - np.abs(k), 0.0, 1.0)
    return w[w > 0] if w[0] == 0 else w


def _h_setup(u, epsilon, I, collar):
    u = np.asarray(u, dtype=float).ravel()
    if u.size < 3:
        raise UsageError("H_eps needs at least two cells")
    a, b = map(float, I)
    n = u.size - 1
    h = (b - a) / n
    check_epsilon(epsilon, h)
    w = _window_weights(epsilon, h)
    du = np.diff(u) / h
    return u, h, w, du, ("full" if collar else "same")


def H_eps(u, epsilon: float, density: NonlocalDensity, p: float, I=(0.0, 1.0),
          collar: bool = False) -> float:
    """One-dimensional energy ``(1/eps) int f(1/2 int_{x-eps}^{x+eps} |u'|^p dy) dx``.

    ``u`` holds the nodal values of a continuous piecewise linear function
    on a uniform partition of ``I``; ``u'`` is extended by zero outside
    ``I``. With ``collar=True`` the outer integral also runs over the
    ``eps``-neighbourhood of ``I`` so that windows straddling an endpoint
    are counted in full, which is the right setting for Dirichlet data.
    """
    _, h, w, du, mode = _h_setup(u, epsilon, I, collar)
    g = np.abs(du) ** p
    t = 0.5 * h * np.convolve(g, w, mode=mode)
    return float(np.sum(density(t))) * h / epsilon


def H_eps_parts(u, epsilon: float, density, p: float, I=(0.0, 1.0),
                collar: bool = False) -> tuple:
    """``(total, bulk_part, surface_part)`` of :func:`H_eps` (split at ``beta/alpha``)."""
    _, h, w, du, mode = _h_setup(u, epsilon, I, collar)
    t = 0.5 * h * np.convolve(np.abs(du) ** p, w, mode=mode)
    vals = density(t)
    sat = t >= density.kink
    scale = h / epsilon
    return (float(np.sum(vals)) * scale, float(np.sum(vals[~sat])) * scale,
            float(np.sum(vals[sat])) * scale)


def H_eps_value_and_grad(u, epsilon: float, density, p: float, I=(0.0, 1.0),
                         collar: bool = False):
    """Value of :func:`H_eps` and its gradient with respect to the nodal values."""
    u, h, w, du, mode = _h_setup(u, epsilon, I, collar)
    g = np.abs(du) ** p
    t = 0.5 * h * np.convolve(g, w, mode=mode)
    value = float(np.sum(density(t))) * h / epsilon
    fp = density.derivative(t) * h / epsilon * 0.5 * h
    # adjoint of the convolution (w is symmetric)
    if mode == "full":
        back = np.convolve(fp, w, mode="valid")
    else:
        back = np.convolve(fp, w, mode="same")
    dg = p * np.abs(du) ** (p - 1) * np.sign(du)
    gdu = back * dg / h
    grad = np.zeros_like(u)
    grad[1:] += gdu
    grad[:-1] -= gdu
    return value, grad


# ---------------------------------------------------------------------------
# crack candidates and the limit energy
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CrackCandidate:
    """A displacement smooth off an explicit jump set.

    ``smooth_part(*coords)`` returns the ``dim`` displacement components at
    the given coordinate arrays. In one dimension ``jump_set`` is a list of
    points; in two dimensions it is a list of axis-aligned segments
    ``((x0, y0), (x1, y1))``.
    """

    domain: Domain
    smooth_part: Callable = field(repr=False)
    jump_set: tuple = ()
    jump_measure: float = 0.0

    def __post_init__(self):
        dom = self.domain
        js = tuple(self.jump_set)
        if dom.dim == 1:
            js = tuple(float(np.ravel(p)[0]) for p in js)
            meas = float(len(js))
        else:
            segs = []
            for seg in js:
                (x0, y0), (x1, y1) = seg
                if not (x0 == x1 or y0 == y1) or (x0 == x1 and y0 == y1):
                    raise UsageError(f"segment {seg} is not a non-degenerate axis-aligned segment")
                segs.append(((float(x0), float(y0)), (float(x1), float(y1))))
            js = tuple(segs)
            meas = float(sum(abs(b[0] - a[0]) + abs(b[1] - a[1]) for a, b in js))
        object.__setattr__(self, "jump_set", js)
        if self.jump_measure and abs(self.jump_measure - meas) > 1e-12 * max(meas, 1.0):
            raise UsageError(
                f"declared jump measure {self.jump_measure} differs from recomputed {meas}")
        object.__setattr__(self, "jump_measure", meas)
        self._check_inside()

    # -- geometry ---------------------------------------------------------
    def normals(self) -> list:
        """Unit normals: ``+1`` in 1D, the rotated tangent of each segment in 2D."""
        if self.domain.dim == 1:
            return [np.array([1.0]) for _ in self.jump_set]
        out = []
        for (x0, y0), (x1, y1) in self.jump_set:
            tvec = np.array([x1 - x0, y1 - y0])
            tvec /= np.linalg.norm(tvec)
            out.append(np.array([-tvec[1], tvec[0]]))
        return out

    def projected_measure(self, xi) -> float:
        """``sum length * |<nu, xi>|`` over the jump set."""
        xi = np.asarray(xi, dtype=float)
        if self.domain.dim == 1:
            return float(len(self.jump_set))
        total = 0.0
        for ((x0, y0), (x1, y1)), nu in zip(self.jump_set, self.normals()):
            total += (abs(x1 - x0) + abs(y1 - y0)) * abs(float(nu @ xi))
        return total

    def _check_inside(self):
        dom = self.domain
        ext = dom.extents
        tol = 1e-12 * max(1.0, *(abs(v) for e in ext for v in e))

        def inside_box(pt):
            return all(lo - tol <= c <= hi + tol for c, (lo, hi) in zip(pt, ext))

        pts = []
        if dom.dim == 1:
            for x in self.jump_set:
                if not inside_box((x,)):
                    raise UsageError(f"jump point {x} lies outside the domain")
                pts.append((x,))
        else:
            for a, b in self.jump_set:
                if not (inside_box(a) and inside_box(b)):
                    raise UsageError(f"segment {a}-{b} leaves the domain box")
                n = max(2, int(np.ceil((abs(b[0] - a[0]) + abs(b[1] - a[1])) / dom.h)) * 2 + 1)
                for s in np.linspace(0, 1, n):
                    pts.append((a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])))
        if dom.full:
            return
        for pt in pts:
            idx = []
            for c, o, nmax in zip(pt, dom.origin, dom.shape):
                f = (c - o) / dom.h
                lo = int(np.clip(np.floor(f - 1e-9), 0, nmax - 1))
                hi = int(np.clip(np.ceil(f - 1e-9) if abs(f - round(f)) < 1e-9 else np.floor(f),
                                 0, nmax - 1))
                idx.append({lo, hi})
            cells = [(i,) if dom.dim == 1 else (i, j) for i in idx[0]
                     for j in (idx[1] if dom.dim == 2 else [None])]
            cells = [tuple(c for c in cell if c is not None) for cell in cells]
            if not any(dom.mask[c] for c in cells):
                raise UsageError(f"jump set crosses the domain mask boundary near {pt}")

    def distance(self, domain: Optional[Domain] = None) -> np.ndarray:
        """Euclidean distance from each cell centre to the jump set."""
        dom = domain or self.domain
        C = dom.centers()
        d = np.full(dom.shape, np.inf)
        if dom.dim == 1:
            for x in self.jump_set:
                d = np.minimum(d, np.abs(C[0] - x))
            return d
        X, Y = C
        for (x0, y0), (x1, y1) in self.jump_set:
            xl, xh = sorted((x0, x1))
            yl, yh = sorted((y0, y1))
            dx = np.maximum(np.maximum(xl - X, X - xh), 0.0)
            dy = np.maximum(np.maximum(yl - Y, Y - yh), 0.0)
            d = np.minimum(d, np.hypot(dx, dy))
        return d

    def tube(self, radius: float, domain: Optional[Domain] = None) -> np.ndarray:
        """Cells with centre within ``radius`` of the jump set."""
        return self.distance(domain) <= radius * (1 + 1e-12)

    def sample(self, domain: Optional[Domain] = None) -> DisplacementField:
        """Smooth part evaluated at the cell centres of ``domain``."""
        return DisplacementField.from_function(domain or self.domain, self.smooth_part)


def limit_energy(candidate: CrackCandidate, alpha: float, beta: float, bulk: BulkDensity,
                 fidelity: Optional[FidelityDensity] = None) -> EnergyBreakdown:
    """``alpha int W(Eu) + 2 beta H^{d-1}(J_u)`` (plus ``int psi(|u|)``).

    The bulk term is a cell sum over the domain minus the one-cell tube
    around the jump set; differences never cross the tube.
    """
    dom = candidate.domain
    u = candidate.sample()
    keep = dom.mask & ~candidate.tube(dom.h)
    if keep.any() and min(dom.shape) >= 2:
        E = sym_gradient(u, keep).values
        # isolated cells have no neighbours and a zero stencil; harmless here
        bulk_int = float(np.sum(bulk.of_strain(E)[keep])) * dom.cell_volume
    else:
        bulk_int = 0.0
    fid = _fidelity_integral(u, fidelity, dom.mask) if fidelity is not None else None
    total = alpha * bulk_int + 2 * beta * candidate.jump_measure + (fid or 0.0)
    return EnergyBreakdown(
        total=total,
        bulk_integral=bulk_int,
        surface_measure=candidate.jump_measure,
        fidelity_integral=fid,
        localized_on="domain",
        formula="limit",
        alpha=float(alpha),
        beta=float(beta),
        h=dom.h,
    )
