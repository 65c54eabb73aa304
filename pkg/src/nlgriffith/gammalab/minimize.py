"""Quasi-Newton minimisation of the discrete energies with Dirichlet data.

The energies are non-convex, so every call may run several starts: the
supplied initial guess, a crack-free start (harmonic extension of the
boundary data) and a fully cracked start (each free unknown copies its
nearest prescribed value). The best end point is returned.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage, optimize, sparse
from scipy.sparse import linalg as splinalg

from ..energy import (
    EnergyParams,
    F_eps_value_and_grad,
    G_eps_value_and_grad,
    H_eps_value_and_grad,
)
from ..errors import UsageError
from ..grid import DisplacementField

__all__ = ["DirichletBC", "MinimizeResult", "minimize_energy", "elastic_start", "cracked_start"]

log = logging.getLogger(__name__)

MAX_ITER = 50_000
WINDOW = 25
RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class DirichletBC:
    """Unknowns marked in ``fixed`` are held at ``values``.

    For grid fields ``fixed`` has the grid shape and ``values`` the field
    shape ``(*grid, d)``; for one-dimensional nodal problems both are
    vectors of node values.
    """

    fixed: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @classmethod
    def endpoints(cls, n_nodes: int, left: float, right: float) -> "DirichletBC":
        fixed = np.zeros(n_nodes, dtype=bool)
        fixed[[0, -1]] = True
        vals = np.zeros(n_nodes)
        vals[0], vals[-1] = left, right
        return cls(fixed, vals)

    @classmethod
    def side_strips(cls, u: DisplacementField, left, right, width: int = 1) -> "DirichletBC":
        """Hold ``width`` cell columns at each end of axis 0 at constant vectors."""
        dom = u.domain
        fixed = np.zeros(dom.shape, dtype=bool)
        vals = np.zeros(dom.shape + (dom.dim,))
        fixed[:width] = True
        fixed[-width:] = True
        vals[:width] = np.asarray(left, dtype=float)
        vals[-width:] = np.asarray(right, dtype=float)
        return cls(fixed & dom.mask, vals)


@dataclass
class MinimizeResult:
    field: object
    energy: float
    iterations: int
    converged: bool
    message: str
    start: str
    starts: dict = field(default_factory=dict)


class _Stop:
    """Relative decrease below ``rtol`` over ``window`` iterations stops the run."""

    def __init__(self, window: int, rtol: float):
        self.window = window
        self.rtol = rtol
        self.history = []
        self.stopped = False

    def __call__(self, intermediate_result):
        f = float(intermediate_result.fun)
        self.history.append(f)
        if len(self.history) > self.window:
            old = self.history[-1 - self.window]
            if old - f <= self.rtol * max(abs(f), 1e-300):
                self.stopped = True
                raise StopIteration


def _run_lbfgs(fun_grad, x0: np.ndarray, free: np.ndarray, max_iter: int,
               window: int, rtol: float):
    base = x0.copy()
    shape = x0.shape

    def wrapped(z):
        x = base.copy()
        x[free] = z.reshape(x[free].shape)
        v, g = fun_grad(x.reshape(shape))
        return v, np.asarray(g)[free].ravel()

    z0 = x0[free].ravel()
    if z0.size == 0:
        v, _ = fun_grad(x0)
        return x0, v, 0, True, "no free unknowns"
    stop = _Stop(window, rtol)
    res = optimize.minimize(wrapped, z0, jac=True, method="L-BFGS-B", callback=stop,
                            options={"maxiter": max_iter, "maxfun": 4 * max_iter,
                                     "ftol": 0.0, "gtol": 1e-12, "maxcor": 20})
    x = base.copy()
    x[free] = res.x.reshape(x[free].shape)
    value, _ = fun_grad(x)
    converged = bool(stop.stopped or res.success)
    msg = "relative decrease below tolerance" if stop.stopped else str(res.message)
    return x, float(value), int(res.nit), converged, msg


def _graph_laplacian(shape, active: np.ndarray):
    n = int(np.prod(shape))
    idx = np.arange(n).reshape(shape)
    rows, cols = [], []
    for ax in range(len(shape)):
        a = [slice(None)] * len(shape)
        b = [slice(None)] * len(shape)
        a[ax] = slice(0, -1)
        b[ax] = slice(1, None)
        both = active[tuple(a)] & active[tuple(b)]
        rows.append(idx[tuple(a)][both])
        cols.append(idx[tuple(b)][both])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    A = sparse.coo_matrix((np.ones(r.size), (r, c)), shape=(n, n))
    A = A + A.T
    deg = np.asarray(A.sum(axis=1)).ravel()
    return (sparse.diags(deg) - A).tocsr()


def elastic_start(shape, active: np.ndarray, bc: DirichletBC) -> np.ndarray:
    """Harmonic extension of the prescribed values over the active unknowns."""
    vals = np.array(bc.values, dtype=float)
    comps = vals.shape[len(shape):]
    Lap = _graph_laplacian(shape, active)
    fixed = bc.fixed.ravel()
    free = active.ravel() & ~fixed
    out = vals.reshape(int(np.prod(shape)), -1).copy()
    if free.any():
        Lff = Lap[free][:, free]
        Lfc = Lap[free][:, fixed]
        for k in range(out.shape[1]):
            rhs = -Lfc @ out[fixed, k]
            if Lff.shape[0] and np.any(Lff.diagonal() == 0):
                # isolated free unknowns keep a zero value
                diag = Lff.diagonal().copy()
                Lff = Lff + sparse.diags((diag == 0).astype(float))
            out[free, k] = splinalg.spsolve(Lff.tocsc(), rhs)
    return out.reshape(tuple(shape) + comps)


def cracked_start(shape, active: np.ndarray, bc: DirichletBC) -> np.ndarray:
    """Every unknown copies the value of its nearest prescribed unknown."""
    vals = np.array(bc.values, dtype=float)
    if not bc.fixed.any():
        return np.zeros_like(vals)
    _, inds = ndimage.distance_transform_edt(~bc.fixed, return_indices=True)
    out = vals[tuple(inds)]
    comps = vals.shape[len(shape):]
    return np.where(active.reshape(active.shape + (1,) * len(comps)), out, 0.0)


def minimize_energy(objective: str, init, params: EnergyParams, bc: Optional[DirichletBC] = None,
                    *, p: Optional[float] = None, I=(0.0, 1.0), A=None, multistart: bool = True,
                    max_iter: int = MAX_ITER, window: int = WINDOW,
                    rtol: float = RTOL) -> MinimizeResult:
    """Minimise ``objective`` in ``{"F_eps", "G_eps", "H_eps"}``.

    ``init`` is a :class:`~nlgriffith.grid.DisplacementField` for the grid
    energies and a vector of nodal values for ``H_eps`` (then ``p`` and
    ``I`` describe the one-dimensional problem, evaluated with the
    boundary collar). The result is deterministic; the starting guesses are
    fixed constructions, not random draws.
    """
    if objective == "H_eps":
        x0 = np.asarray(init, dtype=float).ravel()
        shape = x0.shape
        active = np.ones(shape, dtype=bool)
        pp = params.bulk.p if p is None else p

        def fun_grad(x):
            return H_eps_value_and_grad(x, params.epsilon, params.density, pp, I, collar=True)

        def wrap(x):
            return x
    elif objective in ("F_eps", "G_eps"):
        if not isinstance(init, DisplacementField):
            raise UsageError("grid energies need a DisplacementField start")
        dom = init.domain
        shape = dom.shape
        active = dom.mask
        x0 = np.array(init.values)
        vg = F_eps_value_and_grad if objective == "F_eps" else G_eps_value_and_grad
        if objective == "G_eps" and params.fidelity is None:
            raise UsageError("G_eps needs a fidelity density")

        def fun_grad(x):
            v, g = vg(DisplacementField(dom, x), params, A)
            return v, g

        def wrap(x):
            return DisplacementField(dom, x)
    else:
        raise UsageError(f"unknown objective {objective!r}")

    if bc is not None:
        fixed = np.asarray(bc.fixed, dtype=bool)
        if fixed.shape != tuple(shape):
            raise UsageError("boundary condition shape does not match the unknowns")
        x0 = np.where(_expand(fixed, x0), bc.values, x0)
    else:
        fixed = np.zeros(shape, dtype=bool)
    free_u = active & ~fixed
    free = _expand(free_u, x0)

    starts = {"initial": x0}
    if multistart:
        if bc is not None and fixed.any():
            starts["elastic"] = np.where(_expand(fixed, x0), bc.values,
                                         elastic_start(shape, active, bc))
            starts["cracked"] = np.where(_expand(fixed, x0), bc.values,
                                         cracked_start(shape, active, bc))
        else:
            starts["zero"] = np.zeros_like(x0)

    best = None
    summary = {}
    for name, xs in starts.items():
        x, v, nit, conv, msg = _run_lbfgs(fun_grad, xs, free, max_iter, window, rtol)
        log.debug("start %s: energy %.12g after %d iterations (%s)", name, v, nit, msg)
        summary[name] = {"energy": v, "iterations": nit, "converged": conv}
        if best is None or v < best[1]:
            best = (x, v, nit, conv, msg, name)
    x, v, nit, conv, msg, name = best
    return MinimizeResult(wrap(x), v, nit, conv, msg, name, summary)


def _expand(mask: np.ndarray, like: np.ndarray) -> np.ndarray:
    extra = like.ndim - mask.ndim
    return np.broadcast_to(mask.reshape(mask.shape + (1,) * extra), like.shape)
