"""Scalar and matrix densities entering the non-local energies.

Three families live here:

* :class:`NonlocalDensity` -- the increasing function ``f`` applied to
  ``eps`` times a ball average of the bulk integrand. Its slope at the
  origin (``alpha``) fixes the limiting bulk coefficient, its value at
  infinity (``beta``) half the surface coefficient.
* :class:`BulkDensity` -- the convex integrand ``W`` acting on symmetric
  strain matrices.
* :class:`FidelityDensity` -- the lower order term ``psi(|u|)``.

:func:`minorant_family` builds truncated affine functions ``min{a t, b}``
lying below a given ``f`` whose parameters approach ``(alpha, beta)``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, UsageError

__all__ = [
    "NonlocalDensity",
    "PerturbedDensity",
    "BulkDensity",
    "FidelityDensity",
    "MinorantFamily",
    "eval_f",
    "eval_W",
    "minorant_family",
    "coercive_perturbation",
    "density_from_dict",
    "bulk_from_dict",
    "fidelity_from_dict",
]

_DENSITY_KINDS = ("truncated_affine", "saturating_exponential", "user_sampled")


def _check_t(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise DomainError("density argument must be finite")
    if np.any(t < 0):
        raise DomainError("density argument must be non-negative")
    return t


@dataclass(frozen=True, eq=False)
class NonlocalDensity:
    """Increasing density ``f : [0, inf) -> [0, inf)`` with ``f(0) = 0``.

    Use the constructors :meth:`truncated_affine`,
    :meth:`saturating_exponential` and :meth:`user_sampled` rather than
    instantiating directly.
    """

    kind: str
    alpha: float
    beta: float
    table_t: Optional[np.ndarray] = field(default=None, repr=False)
    table_f: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in _DENSITY_KINDS:
            raise UsageError(f"unknown density kind {self.kind!r}")
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError("alpha and beta must be positive")
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise DomainError("alpha and beta must be finite")

    # -- constructors -----------------------------------------------------
    @classmethod
    def truncated_affine(cls, a: float, b: float) -> "NonlocalDensity":
        """``f(t) = min{a t, b}``; here ``alpha = a`` and ``beta = b``."""
        return cls("truncated_affine", float(a), float(b))

    @classmethod
    def saturating_exponential(cls, alpha: float, beta: float) -> "NonlocalDensity":
        """``f(t) = beta (1 - exp(-alpha t / beta))``, smooth and concave."""
        return cls("saturating_exponential", float(alpha), float(beta))

    @classmethod
    def user_sampled(cls, t, f) -> "NonlocalDensity":
        """Monotone piecewise linear interpolation of a ``(t, f(t))`` table.

        The function is held constant beyond the last knot. ``alpha`` is
        estimated from the first segment and ``beta`` from the last value;
        both estimates trigger a warning since they cannot be certified
        from finitely many samples.
        """
        t = np.asarray(t, dtype=float).ravel()
        f = np.asarray(f, dtype=float).ravel()
        if t.size == 0 or t.size != f.size:
            raise UsageError("table must hold matching, non-empty t and f columns")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(f))):
            raise DomainError("table entries must be finite")
        if np.any(np.diff(t) <= 0):
            raise DomainError("table t values must be strictly increasing")
        if t[0] < 0:
            raise DomainError("table t values must be non-negative")
        if t[0] == 0:
            if f[0] != 0:
                raise DomainError("f(0) must vanish")
        else:
            t = np.concatenate([[0.0], t])
            f = np.concatenate([[0.0], f])
        if np.any(np.diff(f) < 0) or f[0] < 0:
            raise DomainError("tabulated f must be non-negative and non-decreasing")
        if t.size < 2 or f[-1] <= 0:
            raise DomainError("tabulated f must reach a positive value")
        alpha = (f[1] - f[0]) / (t[1] - t[0])
        beta = f[-1]
        warnings.warn(
            f"user_sampled density: alpha={alpha:.6g} and beta={beta:.6g} are "
            "estimated from the first slope and the last sample",
            stacklevel=2,
        )
        if alpha <= 0:
            raise DomainError("first table segment must have positive slope")
        t.setflags(write=False)
        f.setflags(write=False)
        return cls("user_sampled", float(alpha), float(beta), t, f)

    @classmethod
    def from_csv(cls, path) -> "NonlocalDensity":
        """Load a two-column ``t,f_t`` table (an optional header is skipped)."""
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(rec[0]), float(rec[1])))
                except ValueError:
                    if rows:
                        raise UsageError(f"malformed density table row {rec!r}")
                    continue  # header
        if not rows:
            raise UsageError(f"empty density table {path}")
        arr = np.array(rows)
        return cls.user_sampled(arr[:, 0], arr[:, 1])

    # -- evaluation -------------------------------------------------------
    @property
    def kink(self) -> float:
        """Saturation scale ``beta / alpha`` of the tangent minorant."""
        return self.beta / self.alpha

    def __call__(self, t):
        t = _check_t(t)
        return self._eval(t)

    def _eval(self, t: np.ndarray) -> np.ndarray:
        if self.kind == "truncated_affine":
            return np.minimum(self.alpha * t, self.beta)
        if self.kind == "saturating_exponential":
            return -self.beta * np.expm1(-self.alpha * t / self.beta)
        return np.interp(t, self.table_t, self.table_f)

    def derivative(self, t):
        """Left derivative of ``f`` (for the kink of ``min{a t, b}`` the
        value ``a`` is used at ``t = b/a``)."""
        t = _check_t(t)
        if self.kind == "truncated_affine":
            return np.where(t <= self.kink, self.alpha, 0.0)
        if self.kind == "saturating_exponential":
            return self.alpha * np.exp(-self.alpha * t / self.beta)
        tt, ff = self.table_t, self.table_f
        slopes = np.diff(ff) / np.diff(tt)
        idx = np.searchsorted(tt, t, side="left") - 1
        idx = np.clip(idx, 0, slopes.size - 1)
        out = slopes[idx]
        return np.where(t > tt[-1], 0.0, out)

    def ratio(self, t) -> np.ndarray:
        """``f(t)/t`` extended by continuity with ``alpha`` at ``t = 0``."""
        t = _check_t(t)
        out = np.full(t.shape, self.alpha)
        nz = t > 0
        out[nz] = self._eval(t[nz]) / t[nz]
        return out

    def knots(self) -> np.ndarray:
        """Points where the density is not smooth (kink or table knots)."""
        if self.kind == "truncated_affine":
            return np.array([self.kink])
        if self.kind == "user_sampled":
            return np.asarray(self.table_t)
        return np.empty(0)

    def to_dict(self) -> dict:
        if self.kind == "truncated_affine":
            return {"kind": self.kind, "a": self.alpha, "b": self.beta}
        if self.kind == "saturating_exponential":
            return {"kind": self.kind, "alpha": self.alpha, "beta": self.beta}
        return {"kind": self.kind, "t": self.table_t.tolist(), "f": self.table_f.tolist()}


@dataclass(frozen=True, eq=False)
class PerturbedDensity:
    """Coercive perturbation ``f(t) + slope * t`` of a density.

    Keeps ``f <= f_eps <= f + slope * t``; with ``slope = o(eps)`` the
    Gamma-limit is unchanged while the discrete problems become coercive.
    """

    base: NonlocalDensity
    slope: float

    def __post_init__(self):
        if not (self.slope >= 0 and np.isfinite(self.slope)):
            raise DomainError("perturbation slope must be finite and non-negative")

    kind = "perturbed"

    @property
    def alpha(self) -> float:
        return self.base.alpha + self.slope

    @property
    def beta(self) -> float:
        return self.base.beta

    @property
    def kink(self) -> float:
        return self.base.kink

    def __call__(self, t):
        t = _check_t(t)
        return self.base._eval(t) + self.slope * t

    def _eval(self, t):
        return self.base._eval(t) + self.slope * t

    def derivative(self, t):
        return self.base.derivative(t) + self.slope

    def ratio(self, t):
        return self.base.ratio(t) + self.slope

    def knots(self):
        return self.base.knots()

    def to_dict(self) -> dict:
        return {"kind": "perturbed", "base": self.base.to_dict(), "slope": self.slope}


def coercive_perturbation(density: NonlocalDensity, epsilon: float) -> PerturbedDensity:
    """Wrap ``density`` with the slope ``a_eps = eps**2``."""
    return PerturbedDensity(density, float(epsilon) ** 2)


def eval_f(d: NonlocalDensity, t: float) -> float:
    """Evaluate the non-local density at a single non-negative ``t``."""
    t = _check_t(t)
    return float(d(t))


# ---------------------------------------------------------------------------
# bulk density
# ---------------------------------------------------------------------------

_SYM_RTOL = 1e-12


def _symmetrize(M: np.ndarray) -> np.ndarray:
    if M.shape[-1] != M.shape[-2]:
        raise UsageError(f"expected square matrices, got shape {M.shape}")
    Mt = np.swapaxes(M, -1, -2)
    asym = np.max(np.abs(M - Mt)) if M.size else 0.0
    scale = max(np.max(np.abs(M)) if M.size else 0.0, 1e-300)
    if asym > _SYM_RTOL * scale:
        warnings.warn(
            f"bulk density argument not symmetric (relative asymmetry {asym / scale:.3g}); "
            "symmetrizing",
            stacklevel=3,
        )
        return 0.5 * (M + Mt)
    return M


@dataclass(frozen=True, eq=False)
class BulkDensity:
    """Convex integrand ``W`` on symmetric matrices with
    ``c |M|^p <= W(M) <= C_upper (1 + |M|^p)`` (Frobenius norm).

    ``fn`` (and optionally ``grad``) act on stacks of matrices with shape
    ``(..., d, d)``.
    """

    kind: str
    p: float
    c: float
    C_upper: float
    fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    grad_fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("p_norm", "user_convex"):
            raise UsageError(f"unknown bulk density kind {self.kind!r}")
        if not self.p > 1:
            raise DomainError("bulk exponent p must exceed 1")
        if not (self.c > 0 and self.C_upper > 0):
            raise DomainError("growth constants must be positive")
        if self.kind == "user_convex" and self.fn is None:
            raise UsageError("user_convex bulk density needs a callable")

    @classmethod
    def p_norm(cls, p: float) -> "BulkDensity":
        """``W(M) = |M|^p`` with ``c = C_upper = 1``."""
        return cls("p_norm", float(p), 1.0, 1.0)

    @classmethod
    def user_convex(cls, fn, p, c, C_upper, grad=None, dim: int = 2, n_check: int = 200,
                    seed: int = 0) -> "BulkDensity":
        """Wrap a user integrand after sampling its declared contract.

        ``W(0) = 0``, the two-sided growth bound and midpoint convexity are
        checked on ``n_check`` random symmetric ``dim x dim`` matrices.
        """
        w = cls("user_convex", float(p), float(c), float(C_upper), fn, grad)
        rng = np.random.default_rng(seed)
        zero = np.zeros((1, dim, dim))
        if abs(float(np.asarray(fn(zero)).ravel()[0])) > 1e-12:
            raise DomainError("user bulk density must vanish at the zero matrix")
        A = rng.normal(size=(n_check, dim, dim)) * rng.lognormal(size=(n_check, 1, 1))
        A = 0.5 * (A + np.swapaxes(A, 1, 2))
        B = rng.normal(size=(n_check, dim, dim))
        B = 0.5 * (B + np.swapaxes(B, 1, 2))
        wa, wb, wm = (np.asarray(fn(X), dtype=float) for X in (A, B, 0.5 * (A + B)))
        na = np.sqrt(np.sum(A * A, axis=(1, 2))) ** w.p
        tol = 1e-10 * (1 + na)
        if np.any(wa < w.c * na - tol) or np.any(wa > w.C_upper * (1 + na) + tol):
            raise DomainError("user bulk density violates its declared growth bounds")
        if np.any(wm > 0.5 * (wa + wb) + 1e-10 * (1 + np.abs(wa) + np.abs(wb))):
            raise DomainError("user bulk density fails the sampled convexity check")
        return w

    def __call__(self, M) -> np.ndarray:
        M = np.asarray(M, dtype=float)
        if not np.all(np.isfinite(M)):
            raise DomainError("bulk density argument must be finite")
        M = _symmetrize(M)
        return self.of_strain(M)

    def of_strain(self, E: np.ndarray) -> np.ndarray:
        """Evaluate on an already symmetric stack ``(..., d, d)`` without checks."""
        if self.kind == "p_norm":
            sq = np.sum(E * E, axis=(-1, -2))
            if self.p == 2:
                return sq
            return sq ** (0.5 * self.p)
        return np.asarray(self.fn(E), dtype=float)

    def strain_gradient(self, E: np.ndarray) -> np.ndarray:
        """``dW/dE`` on a stack of symmetric matrices."""
        if self.kind == "p_norm":
            sq = np.sum(E * E, axis=(-1, -2))
            if self.p == 2:
                return 2.0 * E
            with np.errstate(divide="ignore", invalid="ignore"):
                fac = np.where(sq > 0, self.p * sq ** (0.5 * self.p - 1.0), 0.0)
            return fac[..., None, None] * E
        if self.grad_fn is None:
            raise UsageError("user_convex bulk density has no gradient; cannot minimize")
        return np.asarray(self.grad_fn(E), dtype=float)

    def to_dict(self) -> dict:
        if self.kind == "p_norm":
            return {"kind": "p_norm", "p": self.p}
        return {"kind": "user_convex", "p": self.p, "c": self.c, "C_upper": self.C_upper}


def eval_W(w: BulkDensity, M) -> float:
    """Evaluate ``W`` at a single ``d x d`` matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise UsageError("eval_W expects a single square matrix")
    return float(w(M))


# ---------------------------------------------------------------------------
# fidelity density
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FidelityDensity:
    """Lower order density ``psi`` with ``psi(s+t) <= C_psi (psi(s) + psi(t))``
    and superlinear growth."""

    kind: str
    q: Optional[float]
    C_psi: float
    fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    deriv_fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind == "power":
            if not (self.q is not None and self.q > 1):
                raise DomainError("fidelity exponent q must exceed 1")
        elif self.kind == "user":
            if self.fn is None:
                raise UsageError("user fidelity needs a callable")
        else:
            raise UsageError(f"unknown fidelity kind {self.kind!r}")
        if not self.C_psi > 0:
            raise DomainError("C_psi must be positive")

    @classmethod
    def power(cls, q: float) -> "FidelityDensity":
        """``psi(s) = s^q`` with the sharp constant ``C_psi = 2^(q-1)``."""
        return cls("power", float(q), 2.0 ** (float(q) - 1.0))

    @classmethod
    def user(cls, fn, C_psi: float, deriv=None) -> "FidelityDensity":
        return cls("user", None, float(C_psi), fn, deriv)

    def __call__(self, s):
        s = _check_t(s)
        if self.kind == "power":
            return s ** self.q
        return np.asarray(self.fn(s), dtype=float)

    def derivative(self, s):
        s = _check_t(s)
        if self.kind == "power":
            return self.q * s ** (self.q - 1.0)
        if self.deriv_fn is None:
            raise UsageError("user fidelity has no derivative; cannot minimize")
        return np.asarray(self.deriv_fn(s), dtype=float)

    def to_dict(self) -> dict:
        if self.kind == "power":
            return {"kind": "power", "q": self.q}
        return {"kind": "user", "C_psi": self.C_psi}


# ---------------------------------------------------------------------------
# truncated affine minorants
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MinorantFamily:
    """Finite family of pairs ``(a_i, b_i)`` with ``min{a_i t, b_i} <= f(t)``."""

    pairs: np.ndarray  # shape (n, 2)
    sup_a: float
    sup_b: float

    def __len__(self) -> int:
        return len(self.pairs)

    def evaluate(self, t) -> np.ndarray:
        """``min{a_i t, b_i}`` with shape ``(n_pairs,) + t.shape``."""
        t = np.asarray(t, dtype=float)
        a = self.pairs[:, 0].reshape((-1,) + (1,) * t.ndim)
        b = self.pairs[:, 1].reshape((-1,) + (1,) * t.ndim)
        return np.minimum(a * t, b)

    def max_violation(self, density, t, chunk: int = 256) -> float:
        """Largest ``min{a_i t, b_i} - f(t)`` over all pairs and samples."""
        t = np.asarray(t, dtype=float).ravel()
        ft = density(t)
        worst = -np.inf
        for i in range(0, len(self.pairs), chunk):
            sub = MinorantFamily(self.pairs[i:i + chunk], self.sup_a, self.sup_b)
            worst = max(worst, float(np.max(sub.evaluate(t) - ft)))
        return worst

    def best_pair(self, min_a: float) -> tuple:
        """Pair with the largest ``b`` among those with ``a >= min_a``."""
        ok = self.pairs[:, 0] >= min_a
        if not np.any(ok):
            raise UsageError(f"no minorant pair with a >= {min_a}")
        cand = self.pairs[ok]
        i = int(np.argmax(cand[:, 1]))
        return float(cand[i, 0]), float(cand[i, 1])


def minorant_family(d, h_max: int, k_max: int, t_grid) -> MinorantFamily:
    """Pairs ``a_hk = min_{t in [0, k/h]} f(t)/t`` and ``b_hk = f(k/h)``.

    The minimum is taken over the samples of ``t_grid`` in ``[0, k/h]``
    together with the endpoint ``k/h`` itself and the density's knots; for
    the built-in kinds this makes ``a_hk`` exact (``f(t)/t`` is
    non-increasing or piecewise monotone between knots).
    """
    t_grid = np.asarray(t_grid, dtype=float).ravel()
    if t_grid.size == 0:
        raise UsageError("empty t_grid")
    if h_max < 1 or k_max < 1:
        raise UsageError("h_max and k_max must be positive integers")
    t_grid = _check_t(t_grid)
    hs = np.arange(1, int(h_max) + 1, dtype=float)
    ks = np.arange(1, int(k_max) + 1, dtype=float)
    tau = (ks[None, :] / hs[:, None]).ravel()
    samples = np.unique(np.concatenate([t_grid, d.knots(), tau, [0.0]]))
    r = d.ratio(samples)
    runmin = np.minimum.accumulate(r)
    idx = np.searchsorted(samples, tau, side="right") - 1
    a = runmin[idx]
    b = d(tau)
    pairs = np.stack([a, b], axis=1)
    pairs.setflags(write=False)
    return MinorantFamily(pairs, float(a.max()), float(b.max()))


# ---------------------------------------------------------------------------
# descriptors (experiment-spec JSON)
# ---------------------------------------------------------------------------


def density_from_dict(desc: dict, base_dir: Optional[Path] = None):
    kind = desc.get("kind")
    if kind == "truncated_affine":
        return NonlocalDensity.truncated_affine(desc["a"], desc["b"])
    if kind == "saturating_exponential":
        return NonlocalDensity.saturating_exponential(desc["alpha"], desc["beta"])
    if kind == "user_sampled":
        if "csv" in desc:
            path = Path(desc["csv"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return NonlocalDensity.from_csv(path)
        return NonlocalDensity.user_sampled(desc["t"], desc["f"])
    if kind == "perturbed":
        return PerturbedDensity(density_from_dict(desc["base"], base_dir), float(desc["slope"]))
    raise UsageError(f"unknown density kind {kind!r}")


def bulk_from_dict(desc: dict) -> BulkDensity:
    if desc.get("kind") == "p_norm":
        return BulkDensity.p_norm(desc["p"])
    raise UsageError(f"bulk density kind {desc.get('kind')!r} cannot be described in JSON")


def fidelity_from_dict(desc: Optional[dict], p: float) -> Optional[FidelityDensity]:
    if desc is None:
        return None
    if desc.get("kind") != "power":
        raise UsageError(f"fidelity kind {desc.get('kind')!r} cannot be described in JSON")
    q = float(desc.get("q", p))
    if q > p:
        raise DomainError(f"fidelity exponent q={q} exceeds bulk exponent p={p}")
    return FidelityDensity.power(q)
