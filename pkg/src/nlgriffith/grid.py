"""Regular cell-centred grids on rectangular domains in one and two dimensions.

Fields are stored with one array axis per space axis (axis 0 is ``x``,
axis 1 is ``y``) followed by component axes. Cell ``i`` of axis ``k`` has
centre ``origin[k] + (i + 1/2) h``.

The ball average over ``B_r(x) ∩ A`` is computed exactly on the discrete
ball (cell centres within distance ``r``) by decomposing the ball into
runs along axis 0: one cumulative-sum window per distinct run half-width
and one shift per row offset. The cost is ``O(N r / h)`` and the result
does not depend on scheduling.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import DomainError, UsageError

__all__ = [
    "Domain",
    "DisplacementField",
    "SymGradField",
    "BallStencil",
    "ball_stencil",
    "sym_gradient",
    "sym_gradient_adjoint",
    "ball_sum",
    "ball_average",
    "averaged_field",
    "commute_check",
    "discrete_perimeter",
    "interior_mask",
]

_EXTENT_RTOL = 1e-9
_RADIUS_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class Domain:
    """Uniform grid of ``shape`` cells of side ``h`` with an inclusion mask."""

    dim: int
    shape: tuple
    h: float
    origin: tuple = (0.0, 0.0)
    mask: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise UsageError("only one- and two-dimensional domains are supported")
        shape = tuple(int(n) for n in self.shape)
        if len(shape) != self.dim or any(n < 1 for n in shape):
            raise UsageError(f"shape {self.shape} incompatible with dim={self.dim}")
        if not (self.h > 0 and np.isfinite(self.h)):
            raise DomainError("grid spacing must be positive and finite")
        origin = tuple(float(o) for o in self.origin)[: self.dim]
        if len(origin) < self.dim:
            origin = origin + (0.0,) * (self.dim - len(origin))
        if self.mask is None:
            mask = np.ones(shape, dtype=bool)
        else:
            mask = np.array(self.mask, dtype=bool)
            if mask.shape != shape:
                raise UsageError(f"mask shape {mask.shape} does not match grid shape {shape}")
            if not mask.any():
                raise UsageError("domain mask is empty")
            _, ncomp = ndimage.label(mask)
            if ncomp > 1:
                warnings.warn(f"domain mask has {ncomp} connected components", stacklevel=3)
        mask.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_extents(cls, extents: Sequence[Sequence[float]], h: float,
                     rects: Optional[Sequence[Sequence[Sequence[float]]]] = None) -> "Domain":
        """Grid covering the box ``extents`` (one ``(lo, hi)`` per axis).

        Each axis length must be an integer multiple of ``h``. ``rects``
        optionally restricts the domain to the union of the given boxes
        (cells whose centre lies in at least one box).
        """
        extents = [tuple(map(float, e)) for e in extents]
        dim = len(extents)
        shape = []
        for lo, hi in extents:
            if not hi > lo:
                raise UsageError(f"empty extent ({lo}, {hi})")
            n = (hi - lo) / h
            nr = round(n)
            if nr < 1 or abs(n - nr) > _EXTENT_RTOL * max(n, 1.0):
                raise UsageError(f"extent length {hi - lo} is not an integer multiple of h={h}")
            shape.append(int(nr))
        origin = tuple(lo for lo, _ in extents)
        mask = None
        if rects:
            dom = cls(dim, tuple(shape), h, origin)
            centres = dom.centers()
            mask = np.zeros(tuple(shape), dtype=bool)
            for rect in rects:
                inside = np.ones(tuple(shape), dtype=bool)
                for k, (lo, hi) in enumerate(rect):
                    inside &= (centres[k] > lo) & (centres[k] < hi)
                mask |= inside
        return cls(dim, tuple(shape), float(h), origin, mask)

    @property
    def extents(self) -> tuple:
        return tuple((o, o + n * self.h) for o, n in zip(self.origin, self.shape))

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def full(self) -> bool:
        return bool(self.mask.all())

    @property
    def volume(self) -> float:
        """Measure of the masked region."""
        return float(np.count_nonzero(self.mask)) * self.cell_volume

    def axes(self) -> list:
        """1D arrays of cell-centre coordinates per axis."""
        return [o + (np.arange(n) + 0.5) * self.h for o, n in zip(self.origin, self.shape)]

    def centers(self) -> list:
        """Cell-centre coordinate grids (``indexing='ij'``)."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def with_mask(self, mask: np.ndarray) -> "Domain":
        return Domain(self.dim, self.shape, self.h, self.origin, mask)


@dataclass(frozen=True, eq=False)
class DisplacementField:
    """Vector field with ``dim`` components at cell centres."""

    domain: Domain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        d = self.domain.dim
        if v.shape == self.domain.shape and d == 1:
            v = v[..., None]
        if v.shape != self.domain.shape + (d,):
            raise UsageError(
                f"values shape {v.shape} does not match {self.domain.shape + (d,)}")
        if not np.all(np.isfinite(v[self.domain.mask])):
            raise DomainError("displacement values must be finite inside the domain")
        v = np.where(self.domain.mask[..., None], v, 0.0)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, domain: Domain, fn) -> "DisplacementField":
        """Sample ``fn(*coords)`` (returning ``dim`` component arrays) at cell centres."""
        comps = fn(*domain.centers())
        if domain.dim == 1 and np.ndim(comps) == 1:
            comps = [comps]
        vals = np.stack([np.broadcast_to(np.asarray(c, float), domain.shape) for c in comps],
                        axis=-1)
        return cls(domain, vals)

    @classmethod
    def zeros(cls, domain: Domain) -> "DisplacementField":
        return cls(domain, np.zeros(domain.shape + (domain.dim,)))

    def norm(self) -> np.ndarray:
        """Pointwise Euclidean norm ``|u(x)|``."""
        return np.sqrt(np.sum(self.values ** 2, axis=-1))


@dataclass(frozen=True, eq=False)
class SymGradField:
    """Symmetric ``dim x dim`` matrices at cell centres."""

    domain: Domain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        d = self.domain.dim
        if v.shape != self.domain.shape + (d, d):
            raise UsageError(f"values shape {v.shape} does not match {self.domain.shape + (d, d)}")
        if d == 2 and np.max(np.abs(v[..., 0, 1] - v[..., 1, 0]), initial=0.0) > 1e-14:
            raise DomainError("symmetrized gradient is not symmetric")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


# ---------------------------------------------------------------------------
# symmetrized gradient
# ---------------------------------------------------------------------------


def _shift(a: np.ndarray, k: int, axis: int) -> np.ndarray:
    """``out[i] = a[i + k]`` along ``axis`` with zero fill."""
    out = np.zeros_like(a)
    n = a.shape[axis]
    if abs(k) >= n:
        return out
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if k >= 0:
        src[axis] = slice(k, n)
        dst[axis] = slice(0, n - k)
    else:
        src[axis] = slice(0, n + k)
        dst[axis] = slice(-k, n)
    out[tuple(dst)] = a[tuple(src)]
    return out


@lru_cache(maxsize=32)
def _diff_coeffs_cached(key: bytes, shape: tuple, h: float):
    mask = np.frombuffer(key, dtype=bool).reshape(shape)
    return _diff_coeffs(mask, h)


def _diff_coeffs(mask: np.ndarray, h: float):
    """Per-axis coefficients ``(c_minus, c_zero, c_plus)`` of the masked
    difference ``D v(x) = c_- v(x-e) + c_0 v(x) + c_+ v(x+e)``."""
    coeffs = []
    m = mask.astype(float)
    for ax in range(mask.ndim):
        nb_p = _shift(m, 1, ax) * m
        nb_m = _shift(m, -1, ax) * m
        both = nb_p * nb_m
        only_p = nb_p * (1 - nb_m)
        only_m = nb_m * (1 - nb_p)
        cp = both / (2 * h) + only_p / h
        cm = -both / (2 * h) - only_m / h
        c0 = -only_p / h + only_m / h
        coeffs.append((cm, c0, cp))
    return coeffs


def _coeffs_for(mask: np.ndarray, h: float):
    return _diff_coeffs_cached(np.ascontiguousarray(mask).tobytes(), mask.shape, float(h))


def _grad_tensor(vals: np.ndarray, mask: np.ndarray, h: float) -> np.ndarray:
    """``G[..., j, i] = d_i u_j`` with masked differences."""
    d = mask.ndim
    coeffs = _coeffs_for(mask, h)
    G = np.zeros(mask.shape + (d, d))
    for i in range(d):
        cm, c0, cp = coeffs[i]
        for j in range(d):
            v = vals[..., j]
            G[..., j, i] = cm * _shift(v, -1, i) + c0 * v + cp * _shift(v, 1, i)
    return G


def sym_gradient(u: DisplacementField, mask: Optional[np.ndarray] = None) -> SymGradField:
    """Symmetric part of the finite-difference gradient of ``u``.

    Central differences are used where both axis neighbours lie in the
    mask, one-sided differences where only one does; cells without any
    in-mask neighbour along an axis get a zero derivative along it.
    ``mask`` defaults to the domain mask; passing a sub-mask makes the
    differencing blind to values outside it.
    """
    dom = u.domain
    if min(dom.shape) < 2:
        raise UsageError("sym_gradient needs at least two cells per axis")
    m = dom.mask if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != dom.shape:
        raise UsageError("mask shape does not match the field")
    G = _grad_tensor(u.values, m, dom.h)
    E = 0.5 * (G + np.swapaxes(G, -1, -2))
    return SymGradField(dom, E)


def sym_gradient_adjoint(S: np.ndarray, domain: Domain,
                         mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Adjoint of the linear map ``u -> Eu`` (Euclidean inner products).

    ``S`` holds ``(*shape, d, d)`` arrays; the result has the displacement
    shape ``(*shape, d)``. Used to back-propagate energy gradients.
    """
    m = domain.mask if mask is None else np.asarray(mask, dtype=bool)
    d = domain.dim
    S = np.asarray(S, dtype=float)
    Ssym = 0.5 * (S + np.swapaxes(S, -1, -2))
    coeffs = _coeffs_for(m, domain.h)
    out = np.zeros(domain.shape + (d,))
    for i in range(d):
        cm, c0, cp = coeffs[i]
        for j in range(d):
            w = Ssym[..., j, i]
            out[..., j] += (_shift(cp * w, -1, i) + c0 * w + _shift(cm * w, 1, i))
    return out


# ---------------------------------------------------------------------------
# ball stencils and averages
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BallStencil:
    """Lattice points ``z`` with ``|z| <= radius_cells`` (all weights one).

    ``half_widths[k]`` is the run half-width of row offset ``k - R`` along
    axis 0, ``R = floor(radius_cells)``.
    """

    radius_cells: float
    dim: int
    half_widths: np.ndarray = field(repr=False)

    @property
    def reach(self) -> int:
        return int(self.half_widths.max())

    @property
    def count(self) -> int:
        if self.dim == 1:
            return 2 * int(self.half_widths[0]) + 1
        return int(np.sum(2 * self.half_widths + 1))

    @property
    def offsets(self) -> np.ndarray:
        if self.dim == 1:
            w = int(self.half_widths[0])
            return np.arange(-w, w + 1)[:, None]
        R = (len(self.half_widths) - 1) // 2
        pts = [(dx, dy) for dy, w in zip(range(-R, R + 1), self.half_widths)
               for dx in range(-int(w), int(w) + 1)]
        return np.array(pts, dtype=int)

    @property
    def weights(self) -> np.ndarray:
        return np.ones(self.count)

    def measure(self, h: float) -> float:
        """Discrete ball measure ``count * h^d``."""
        return self.count * h ** self.dim


@lru_cache(maxsize=64)
def _stencil_cached(r_key: float, dim: int) -> BallStencil:
    r = r_key
    r2 = r * r * (1 + 2 * _RADIUS_RTOL)
    R = int(np.floor(r * (1 + _RADIUS_RTOL)))
    if dim == 1:
        hw = np.array([R])
    else:
        dy = np.arange(-R, R + 1)
        hw = np.floor(np.sqrt(np.maximum(r2 - dy * dy, 0.0))).astype(int)
    hw.setflags(write=False)
    return BallStencil(r, dim, hw)


def ball_stencil(radius: float, h: float, dim: int) -> BallStencil:
    """Discrete ball of physical radius ``radius`` on a grid of spacing ``h``."""
    r = float(radius) / float(h)
    if not np.isfinite(r) or r < 1 - _RADIUS_RTOL:
        raise UsageError(f"ball radius {radius} is below the grid spacing {h} (empty ball)")
    return _stencil_cached(round(r, 12), int(dim))


def _window_sum_axis0(a: np.ndarray, w: int) -> np.ndarray:
    n = a.shape[0]
    pad = [(w + 1, w)] + [(0, 0)] * (a.ndim - 1)
    cs = np.cumsum(np.pad(a, pad), axis=0)
    return cs[2 * w + 1: 2 * w + 1 + n] - cs[:n]


def ball_sum(s: np.ndarray, st: BallStencil) -> np.ndarray:
    """``sum_{z in ball} s(x + z)`` with zero extension outside the grid."""
    s = np.asarray(s, dtype=float)
    if s.ndim != st.dim:
        raise UsageError("field dimension does not match the stencil")
    if st.dim == 1:
        return _window_sum_axis0(s, int(st.half_widths[0]))
    R = (len(st.half_widths) - 1) // 2
    out = np.zeros_like(s)
    ny = s.shape[1]
    cache = {}
    for k, dy in enumerate(range(-R, R + 1)):
        if abs(dy) >= ny:
            continue
        w = int(st.half_widths[k])
        if w not in cache:
            cache[w] = _window_sum_axis0(s, w)
        rows = cache[w]
        if dy >= 0:
            out[:, : ny - dy] += rows[:, dy:]
        else:
            out[:, -dy:] += rows[:, : ny + dy]
    return out


def ball_average(s: np.ndarray, st: BallStencil, mask: np.ndarray) -> np.ndarray:
    """Average of ``s`` over the in-mask cells of each discrete ball.

    Values are returned inside ``mask`` and set to zero outside it.
    """
    mask = np.asarray(mask, dtype=bool)
    s = np.asarray(s, dtype=float)
    if s.shape != mask.shape:
        raise UsageError("field and mask shapes differ")
    mf = mask.astype(float)
    num = ball_sum(np.where(mask, s, 0.0), st)
    den = ball_sum(mf, st)
    out = np.zeros_like(s)
    np.divide(num, den, out=out, where=mask & (den > 0))
    return out


def averaged_field(u: DisplacementField, radius: float,
                   mask: Optional[np.ndarray] = None) -> DisplacementField:
    """Componentwise ball average of ``u`` at the given physical radius."""
    dom = u.domain
    m = dom.mask if mask is None else np.asarray(mask, dtype=bool)
    st = ball_stencil(radius, dom.h, dom.dim)
    vals = np.stack([ball_average(u.values[..., j], st, m) for j in range(dom.dim)], axis=-1)
    return DisplacementField(dom, vals)


def interior_mask(mask: np.ndarray, cells: float) -> np.ndarray:
    """Cells whose distance to the complement of ``mask`` (grid exterior
    included) is at least ``cells`` cell widths."""
    mask = np.asarray(mask, dtype=bool)
    padded = np.pad(mask, 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)
    inner = tuple(slice(1, -1) for _ in range(mask.ndim))
    return dist[inner] > cells


def commute_check(u: DisplacementField, radius: float) -> float:
    """Max discrepancy between ``E(avg u)`` and ``avg(E u)`` away from the boundary.

    Both operators are translation invariant in the interior, so the two
    sides agree up to rounding wherever neither stencil touches the
    boundary; this is a self-test of the discretisation.
    """
    dom = u.domain
    st = ball_stencil(radius, dom.h, dom.dim)
    inner = interior_mask(dom.mask, st.radius_cells + 2)
    if not inner.any():
        raise UsageError("domain too small for an interior region at this radius")
    lhs = sym_gradient(averaged_field(u, radius)).values
    E = sym_gradient(u).values
    d = dom.dim
    rhs = np.empty_like(E)
    for i in range(d):
        for j in range(d):
            rhs[..., i, j] = ball_average(E[..., i, j], st, dom.mask)
    return float(np.max(np.abs(lhs - rhs)[inner]))


def discrete_perimeter(S: np.ndarray, mask: np.ndarray, h: float) -> float:
    """Number of cell faces between ``S`` and ``mask \\ S`` times ``h^(d-1)``.

    Faces on the boundary of ``mask`` are not counted.
    """
    S = np.asarray(S, dtype=bool) & mask
    count = 0
    for ax in range(S.ndim):
        a = [slice(None)] * S.ndim
        b = [slice(None)] * S.ndim
        a[ax] = slice(0, -1)
        b[ax] = slice(1, None)
        a, b = tuple(a), tuple(b)
        both_in = mask[a] & mask[b]
        count += int(np.count_nonzero((S[a] != S[b]) & both_in))
    return count * h ** (S.ndim - 1)
