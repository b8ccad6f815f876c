"""Lorentz-hyperboloid primitives and the tetrahedron score functions.

Points are arrays whose last axis is ``(x0, x1, ..., xn)`` with ``x0`` the
time-like coordinate.  All curvatures are the hyperboloid parameter ``beta``
in ``<x, x>_L = -beta``; the origin is ``(sqrt(beta), 0, ..., 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import csv_string
from .errors import NumericError, ShapeError, UnsupportedError


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta > 0:
        raise NumericError(f"curvature must be positive, got {beta}")
    return beta


def lift(v, beta: float) -> np.ndarray:
    """Map Euclidean coordinates onto the hyperboloid by solving for ``x0``."""
    beta = _check_beta(beta)
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise NumericError("cannot lift non-finite coordinates")
    x0 = np.sqrt(beta + np.sum(v * v, axis=-1, keepdims=True))
    return np.concatenate([x0, v], axis=-1)


def origin(dim: int, beta: float) -> np.ndarray:
    """Hyperboloid origin in ``R^(dim+1)``."""
    beta = _check_beta(beta)
    out = np.zeros(dim + 1)
    out[0] = np.sqrt(beta)
    return out


def lorentz_inner(x, y) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-1] != y.shape[-1]:
        raise ShapeError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    return np.sum(x[..., 1:] * y[..., 1:], axis=-1) - x[..., 0] * y[..., 0]


def sq_lorentz_dist(x, y, beta: float) -> np.ndarray:
    """``<x - y, x - y>_L``, equal to ``-2 beta - 2 <x, y>_L`` on the hyperboloid.

    The difference form is exactly zero for ``x == y`` and exactly symmetric.
    """
    _check_beta(beta)
    diff = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return lorentz_inner(diff, diff)


def geodesic_dist(x, y, beta: float) -> np.ndarray:
    """``arccosh(-<x, y>_L / beta)`` with the argument clamped at 1."""
    beta = _check_beta(beta)
    # -<x,y>/beta = 1 + z; arccosh(1 + z) = log1p(z + sqrt(z (z + 2))) avoids cancellation
    z = np.maximum(sq_lorentz_dist(x, y, beta) / (2.0 * beta), 0.0)
    return np.log1p(z + np.sqrt(z * (z + 2.0)))


def _origin_like(x, beta):
    return origin(np.shape(x)[-1] - 1, beta)


def score_sg(u, v, t, beta: float) -> np.ndarray:
    """Geodesic tetrahedron score; positive exactly when the inequality fails."""
    o = _origin_like(u, beta)
    d = lambda a, b: geodesic_dist(a, b, beta)  # noqa: E731
    return d(u, v) + d(o, t) - d(u, t) - d(v, t) - d(o, u) - d(o, v)


def tetrahedron_holds(u, v, t, beta: float) -> np.ndarray:
    """Direct evaluation of ``d(u,v) + d(o,t) <= d(u,t) + d(v,t) + d(o,u) + d(o,v)``."""
    o = _origin_like(u, beta)
    d = lambda a, b: geodesic_dist(a, b, beta)  # noqa: E731
    return d(u, v) + d(o, t) <= d(u, t) + d(v, t) + d(o, u) + d(o, v)


def score_sh(u, v, t, beta: float) -> np.ndarray:
    """Smoothed tetrahedron score in its inner-product closed form."""
    beta = _check_beta(beta)
    u, v, t = (np.asarray(a, dtype=np.float64) for a in (u, v, t))
    u0, v0, t0 = u[..., 0], v[..., 0], t[..., 0]
    num = (2.0 * beta + np.sqrt(beta) * (t0 - u0 - v0)
           - (lorentz_inner(u, v) - lorentz_inner(u, t) - lorentz_inner(t, v)))
    den = beta * (u0 * v0 + u0 * t0 + t0 * v0)
    return num / den


def score_sh_six(u, v, t, beta: float) -> np.ndarray:
    """Same score built from six squared Lorentz distances; reference path for tests."""
    o = _origin_like(u, beta)
    d2 = lambda a, b: sq_lorentz_dist(a, b, beta)  # noqa: E731
    num = 0.5 * (d2(u, v) + d2(o, t) - d2(u, t) - d2(t, v) - d2(o, u) - d2(o, v))
    ou, ov, ot = lorentz_inner(o, u), lorentz_inner(o, v), lorentz_inner(o, t)
    return num / (ou * ov + ou * ot + ot * ov)


def sh_batch_terms(U, V, T, beta: float):
    """Numerator and denominator of the score for queries ``(U, T)`` against rows of ``V``.

    ``U``, ``T`` are ``(b, n+1)``; ``V`` is ``(n_e, n+1)``.  Returns two ``(b, n_e)``
    arrays.  Uses the expansion
    ``num = 2b + sqrt(b)(t0-u0) + <u,t> - V0 (sqrt(b) + t0 - u0) + V_s . (t_s - u_s)``
    so each output is one matrix product against ``V`` plus a per-query offset.
    """
    sb = np.sqrt(beta)
    u0, t0 = U[:, :1], T[:, :1]
    ut = lorentz_inner(U, T)[:, None]
    A = np.concatenate([-(sb + t0 - u0), T[:, 1:] - U[:, 1:]], axis=1)
    num = A @ V.T
    num += 2.0 * beta + sb * (t0 - u0) + ut
    den = (beta * (u0 + t0)) @ V[:, :1].T
    den += beta * u0 * t0
    return num, den


def score_sh_batch(u, V, t, beta: float) -> np.ndarray:
    """Score one query (or a batch of queries) against every row of ``V``."""
    beta = _check_beta(beta)
    u = np.asarray(u, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    single = u.ndim == 1
    U, T = np.atleast_2d(u), np.atleast_2d(t)
    if V.ndim != 2 or V.shape[1] != U.shape[1] or T.shape != U.shape:
        raise ShapeError(f"incompatible shapes u={u.shape} V={V.shape} t={t.shape}")
    if V.shape[0] == 0:
        return np.zeros(0) if single else np.zeros((U.shape[0], 0))
    num, den = sh_batch_terms(U, V, T, beta)
    out = num / den
    return out[0] if single else out


@dataclass
class Landscape:
    coords: np.ndarray
    values: np.ndarray  # values[i, j] -> u = coords[i], v = coords[j]
    mode: str
    t: float
    beta: float

    def to_csv(self) -> str:
        header = ["u\\v"] + [repr(float(c)) for c in self.coords]
        rows = [[repr(float(c))] + [repr(float(x)) for x in row]
                for c, row in zip(self.coords, self.values)]
        return csv_string(header, rows)


def landscape_grid(t, grid_min: float, grid_max: float, steps: int, beta: float,
                   mode: str = "lorentz") -> Landscape:
    """Score surface over 1-D entity coordinates ``u`` (rows) and ``v`` (columns)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if t.shape != (1,):
        raise UnsupportedError("landscapes are only defined for one spatial dimension")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if mode not in ("lorentz", "geodesic"):
        raise ValueError(f"unknown mode {mode!r}")
    coords = np.linspace(grid_min, grid_max, steps)
    U = lift(np.repeat(coords, steps)[:, None], beta)
    V = lift(np.tile(coords, steps)[:, None], beta)
    T = np.broadcast_to(lift(t, beta), U.shape)
    fn = score_sh if mode == "lorentz" else score_sg
    values = fn(U, V, T, beta).reshape(steps, steps)
    return Landscape(coords, values, mode, float(t[0]), float(beta))


def sign_agreement(a: Landscape, b: Landscape) -> float:
    return float(np.mean(np.sign(a.values) == np.sign(b.values)))
