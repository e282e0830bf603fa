"""Additive cubic-spline median regression.

The mechanism of a node is ``f(x) = intercept + sum_k s_k(x_k)`` where each
``s_k`` is a cubic B-spline over quantile-placed knots.  Coefficients minimise

    sum_i |r_i| / 2 + lam * sum_k ||D2 c_k||^2

on a standardised target, solved by majorise-minimise IRLS on a Huber-smoothed
absolute loss.  Outside the boundary knots each ``s_k`` continues linearly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from . import _kernels

DEGREE = 3
MIN_SAMPLES = 10
_MAD_TO_SD = 1.482602218505602
# tiny ridge removing the constant-shift null space of each centred block
_RIDGE = 1e-9


class DegenerateCovariateError(ValueError):
    pass


class FitError(RuntimeError):
    pass


def knots_for(n_samples: int) -> int:
    """Knots per parent: ``min(max(5, floor(n**(1/3) / 2)), 30)``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    root = round(n_samples ** (1.0 / 3.0))
    # exact integer cube root when n is a perfect cube
    cube = root if root ** 3 == n_samples else n_samples ** (1.0 / 3.0)
    return int(min(max(5, math.floor(cube / 2)), 30))


def place_knots(values, m: int) -> np.ndarray:
    """``m`` knots at the empirical quantiles ``i/(m-1)``, made strictly increasing."""
    values = np.asarray(values, dtype=np.float64)
    if m < 2:
        raise ValueError("need at least 2 knots")
    if values.size == 0:
        raise ValueError("values must be nonempty")
    lo, hi = values.min(), values.max()
    if not lo < hi:
        raise DegenerateCovariateError("all covariate values are identical")
    knots = np.quantile(values, np.linspace(0.0, 1.0, m))
    knots[0], knots[-1] = lo, hi
    step = 1e-6 * (hi - lo)
    for i in range(1, m):
        if knots[i] <= knots[i - 1]:
            knots[i] = knots[i - 1] + step
    return knots


def _full_knots(knots):
    return np.concatenate([[knots[0]] * DEGREE, knots, [knots[-1]] * DEGREE])


def _boundary_jets(t):
    """Basis values and first derivatives at both boundary knots."""
    pts = np.array([t[DEGREE], t[-DEGREE - 1]])
    n_basis = t.shape[0] - DEGREE - 1
    basis = BSpline(t, np.eye(n_basis), DEGREE, extrapolate=True)
    return basis(pts), basis.derivative()(pts)


def spline_basis(x, knots, jets=None) -> np.ndarray:
    """Cubic B-spline basis of ``x`` with linear continuation past the boundary knots."""
    x = np.asarray(x, dtype=np.float64)
    t = _full_knots(np.asarray(knots, dtype=np.float64))
    lo, hi = knots[0], knots[-1]
    inside = np.clip(x, lo, hi)
    basis = _kernels.bspline_basis(inside, t, DEGREE)
    below = x < lo
    above = x > hi
    if below.any() or above.any():
        vals, der = jets if jets is not None else _boundary_jets(t)
        if below.any():
            basis[below] = vals[0] + (x[below] - lo)[:, None] * der[0]
        if above.any():
            basis[above] = vals[1] + (x[above] - hi)[:, None] * der[1]
    return basis


def second_difference(n: int) -> np.ndarray:
    d = np.zeros((max(n - 2, 0), n))
    for i in range(n - 2):
        d[i, i:i + 3] = (1.0, -2.0, 1.0)
    return d


@dataclass
class SplineMechanism:
    """Fitted additive mechanism; ``parents`` index columns of the caller's matrix.

    ``knots[k]`` and ``coefs[k]`` belong to ``parents[k]``.  Columns dropped for
    being constant are recorded in ``dropped`` and ignored at prediction time.
    """

    parents: tuple
    knots: list
    coefs: list
    intercept: float
    lam: float = 1.0
    target_scale: float = 1.0
    dropped: tuple = ()
    converged: bool = True
    n_iter: int = 0

    def __post_init__(self):
        self._jets = [_boundary_jets(_full_knots(np.asarray(k))) for k in self.knots]

    @property
    def n_parents(self):
        return len(self.parents)

    def predict(self, parents_matrix) -> np.ndarray:
        """Predictions for an ``(n, k)`` matrix whose columns follow ``parents``+``dropped`` order
        of the original fit (i.e. the full parent matrix passed to :func:`fit_median`)."""
        pm = np.asarray(parents_matrix, dtype=np.float64)
        if pm.ndim == 1:
            pm = pm[:, None]
        if not np.all(np.isfinite(pm)):
            raise ValueError("non-finite parent values")
        out = np.full(pm.shape[0], self.intercept)
        for col, knots, coef, jets in zip(self.parents, self.knots, self.coefs, self._jets):
            out += spline_basis(pm[:, col], knots, jets) @ coef
        return out

    def to_dict(self) -> dict:
        return {
            "parents": list(self.parents),
            "knots": [np.asarray(k).tolist() for k in self.knots],
            "coefs": [np.asarray(c).tolist() for c in self.coefs],
            "intercept": float(self.intercept),
            "lam": float(self.lam),
            "target_scale": float(self.target_scale),
            "dropped": list(self.dropped),
            "converged": bool(self.converged),
            "n_iter": int(self.n_iter),
        }

    @classmethod
    def from_dict(cls, obj) -> "SplineMechanism":
        return cls(
            parents=tuple(obj["parents"]),
            knots=[np.asarray(k, dtype=np.float64) for k in obj["knots"]],
            coefs=[np.asarray(c, dtype=np.float64) for c in obj["coefs"]],
            intercept=float(obj["intercept"]),
            lam=float(obj["lam"]),
            target_scale=float(obj.get("target_scale", 1.0)),
            dropped=tuple(obj.get("dropped", ())),
            converged=bool(obj.get("converged", True)),
            n_iter=int(obj.get("n_iter", 0)),
        )


def predict(mech: SplineMechanism, parents_row) -> float:
    row = np.asarray(parents_row, dtype=np.float64).reshape(1, -1)
    return float(mech.predict(row)[0])


def constant_mechanism(target, lam=1.0) -> SplineMechanism:
    """Intercept-only median fit (root nodes and solver fallback)."""
    target = np.asarray(target, dtype=np.float64)
    return SplineMechanism((), [], [], float(np.median(target)), lam, _robust_scale(target))


def _robust_scale(y):
    mad = np.median(np.abs(y - np.median(y)))
    if mad > 0:
        return float(_MAD_TO_SD * mad)
    sd = float(np.std(y))
    return sd if sd > 0 else 1.0


def penalized_objective(mech: SplineMechanism, parents_matrix, target) -> float:
    """Exact (unsmoothed) pinball-0.5 loss plus curvature penalty, in standardised units."""
    r = (np.asarray(target, dtype=np.float64) - mech.predict(parents_matrix)) / mech.target_scale
    pen = 0.0
    for coef in mech.coefs:
        c = np.asarray(coef) / mech.target_scale
        dc = np.diff(c, 2)
        pen += float(dc @ dc)
    return float(0.5 * np.abs(r).sum() + mech.lam * pen)


def fit_median(parents_matrix, target, lam: float = 1.0, n_knots: int | None = None,
               max_iter: int = 200, tol: float = 1e-8) -> SplineMechanism:
    """Fit an additive cubic-spline median regression of ``target`` on the columns of
    ``parents_matrix``.

    Raises
    ------
    ValueError
        Non-finite input or fewer than ``MIN_SAMPLES`` rows.
    FitError
        The penalised normal equations are singular.
    """
    X = np.asarray(parents_matrix, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = y.shape[0]
    if X.shape[0] != n:
        raise ValueError("parents_matrix and target have different lengths")
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {n}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in regression inputs")
    if lam < 0:
        raise ValueError("lam must be nonnegative")

    center = float(np.median(y))
    scale = _robust_scale(y)
    ys = (y - center) / scale

    m = n_knots or knots_for(n)
    used, dropped, knots, blocks, means = [], [], [], [], []
    for col in range(X.shape[1]):
        try:
            k = place_knots(X[:, col], m)
        except DegenerateCovariateError:
            warnings.warn(f"dropping constant parent column {col}", RuntimeWarning, stacklevel=2)
            dropped.append(col)
            continue
        b = spline_basis(X[:, col], k)
        mu = b.mean(axis=0)
        used.append(col)
        knots.append(k)
        blocks.append(b - mu)
        means.append(mu)

    if not used:
        mech = constant_mechanism(y, lam)
        mech.dropped = tuple(dropped)
        return mech

    A = np.hstack([np.ones((n, 1))] + blocks)
    p = A.shape[1]
    S = np.zeros((p, p))
    pos = 1
    for b in blocks:
        nb = b.shape[1]
        D = second_difference(nb)
        S[pos:pos + nb, pos:pos + nb] = lam * (D.T @ D) + _RIDGE * np.eye(nb)
        pos += nb

    mad = float(np.median(np.abs(ys - np.median(ys))))
    h = max(1e-4 * mad, 1e-8)

    def smoothed(c):
        r = ys - A @ c
        a = np.abs(r)
        loss = np.where(a <= h, 0.5 * r * r / h, a - 0.5 * h)
        return 0.5 * loss.sum() + c @ S @ c, r

    try:
        c = np.linalg.solve(A.T @ A + 2.0 * S, A.T @ ys)
        obj, r = smoothed(c)
        converged = False
        it = 0
        for it in range(1, max_iter + 1):
            wts = 0.5 / np.maximum(np.abs(r), h)
            Aw = A * wts[:, None]
            c = np.linalg.solve(A.T @ Aw + 2.0 * S, Aw.T @ ys)
            new_obj, r = smoothed(c)
            if abs(obj - new_obj) <= tol * max(abs(new_obj), 1e-300):
                obj = new_obj
                converged = True
                break
            obj = new_obj
    except np.linalg.LinAlgError as exc:
        raise FitError(f"singular penalised system: {exc}") from exc
    if not np.all(np.isfinite(c)):
        raise FitError("non-finite spline coefficients")

    coefs = []
    intercept = center + scale * c[0]
    pos = 1
    for mu, b in zip(means, blocks):
        nb = b.shape[1]
        cb = scale * c[pos:pos + nb]
        intercept -= float(mu @ cb)
        coefs.append(cb)
        pos += nb
    return SplineMechanism(tuple(used), knots, coefs, float(intercept), float(lam), scale,
                           tuple(dropped), converged, it)
