"""Reference displacement fields used by the audits and the test-suite.

Every constructor takes the scale ``epsilon`` and a resolution ratio
``cells_per_eps`` (``h = epsilon / cells_per_eps``) and returns a field on
the unit interval or square.
"""
from __future__ import annotations

import numpy as np

from ..grid import DisplacementField, Domain

__all__ = ["unit_domain", "zero", "affine", "mollified_step", "two_cracks", "random_smooth",
           "CORPUS", "corpus_field"]


def unit_domain(dim: int, h: float) -> Domain:
    return Domain.from_extents([(0.0, 1.0)] * dim, h)


def _ramp(s: np.ndarray, h: float) -> np.ndarray:
    """Step of height one smeared linearly over one cell."""
    return np.clip(s / h + 0.5, 0.0, 1.0)


def _bump(s: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Smooth plateau on ``[lo, hi]`` falling to zero over a width 0.1."""
    w = 0.1
    t = np.clip(np.minimum(s - lo, hi - s) / w + 1.0, 0.0, 1.0)
    return t * t * (3 - 2 * t)


def zero(epsilon: float, cells_per_eps: int = 16, dim: int = 2) -> DisplacementField:
    return DisplacementField.zeros(unit_domain(dim, epsilon / cells_per_eps))


def affine(epsilon: float, cells_per_eps: int = 16, dim: int = 2,
           M=None) -> DisplacementField:
    """``u(x) = M x`` with a small symmetric ``M`` by default."""
    dom = unit_domain(dim, epsilon / cells_per_eps)
    if M is None:
        M = np.array([[0.3]]) if dim == 1 else np.array([[0.3, 0.1], [0.1, -0.2]])
    M = np.asarray(M, dtype=float)
    C = dom.centers()
    vals = np.stack([sum(M[i, j] * C[j] for j in range(dim)) for i in range(dim)], axis=-1)
    return DisplacementField(dom, vals)


def mollified_step(epsilon: float, cells_per_eps: int = 16, dim: int = 1,
                   height: float = 1.0, x0: float = 0.5) -> DisplacementField:
    """Jump of ``height`` near ``x = x0`` smeared over one cell.

    ``x0`` is moved to the nearest cell centre so that exactly one cell
    carries an intermediate value. In two dimensions the first component
    jumps across a vertical line.
    """
    h = epsilon / cells_per_eps
    dom = unit_domain(dim, h)
    x0 = (np.floor(x0 / h) + 0.5) * h
    C = dom.centers()
    vals = np.zeros(dom.shape + (dim,))
    vals[..., 0] = height * _ramp(C[0] - x0, h)
    return DisplacementField(dom, vals)


def two_cracks(epsilon: float, cells_per_eps: int = 16) -> DisplacementField:
    """Two interior cracks: a horizontal one opening ``u_2`` and a vertical
    one sliding ``u_1``, each faded out smoothly towards its tips."""
    h = epsilon / cells_per_eps
    dom = unit_domain(2, h)
    X, Y = dom.centers()
    u1 = 0.5 * _ramp(X - 0.7, h) * _bump(Y, 0.55, 0.85)
    u2 = 0.5 * _ramp(Y - 0.35, h) * _bump(X, 0.25, 0.75)
    return DisplacementField(dom, np.stack([u1, u2], axis=-1))


def random_smooth(epsilon: float, cells_per_eps: int = 16, seed: int = 0,
                  amplitude: float = 0.05, modes: int = 4) -> DisplacementField:
    """Random trigonometric polynomial of low degree (deterministic in ``seed``)."""
    rng = np.random.default_rng(seed)
    dom = unit_domain(2, epsilon / cells_per_eps)
    X, Y = dom.centers()
    vals = np.zeros(dom.shape + (2,))
    for c in range(2):
        coef = rng.normal(size=(modes, modes, 2)) / (1 + np.add.outer(np.arange(modes),
                                                                        np.arange(modes)))[..., None]
        for k in range(modes):
            for l in range(modes):
                ph = 2 * np.pi * (k * X + l * Y)
                vals[..., c] += coef[k, l, 0] * np.cos(ph) + coef[k, l, 1] * np.sin(ph)
    vals *= amplitude
    return DisplacementField(dom, vals)


CORPUS = {
    "zero": zero,
    "affine": affine,
    "mollified_step": mollified_step,
    "two_cracks": two_cracks,
    "random_smooth": random_smooth,
}


def corpus_field(name: str, epsilon: float, cells_per_eps: int = 16, **kw) -> DisplacementField:
    try:
        return CORPUS[name](epsilon, cells_per_eps, **kw)
    except KeyError:
        raise KeyError(f"unknown corpus field {name!r}; choose from {sorted(CORPUS)}") from None
