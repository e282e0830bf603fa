"""Trimmed Gaussian KDE for residual (noise) densities."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels

MIN_RETAINED = 10
BANDWIDTH_FLOOR = 1e-9
MODE_GRID = 512


@dataclass
class TrimmedKde:
    points: np.ndarray
    bandwidth: float
    alpha: float = 0.01
    _log_mode: float | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.points = np.sort(np.asarray(self.points, dtype=np.float64))
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")

    def log_density(self, x):
        """Log-density at scalar or array ``x``."""
        arr = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite evaluation point")
        out = _kernels.kde_logpdf(np.atleast_1d(arr).ravel(), self.points, self.bandwidth)
        if arr.ndim == 0:
            return float(out[0])
        return out.reshape(arr.shape)

    def sample(self, rng, size=None):
        """Draw a retained point uniformly and add ``N(0, h^2)`` noise."""
        n = 1 if size is None else size
        idx = rng.integers(0, self.points.shape[0], size=n)
        draws = self.points[idx] + self.bandwidth * rng.standard_normal(n)
        return float(draws[0]) if size is None else draws

    @property
    def log_mode(self) -> float:
        """Maximum of the log-density (grid search refined by bounded Brent)."""
        if self._log_mode is None:
            self._log_mode = _find_log_mode(self)
        return self._log_mode

    def to_dict(self):
        return {"points": self.points.tolist(), "bandwidth": float(self.bandwidth),
                "alpha": float(self.alpha)}

    @classmethod
    def from_dict(cls, obj):
        return cls(np.asarray(obj["points"], dtype=np.float64), float(obj["bandwidth"]),
                   float(obj["alpha"]))


def _find_log_mode(kde: TrimmedKde) -> float:
    h = kde.bandwidth
    grid = np.linspace(kde.points[0] - 3 * h, kde.points[-1] + 3 * h, MODE_GRID)
    vals = kde.log_density(grid)
    best = float(vals.max())
    step = grid[1] - grid[0] if grid.size > 1 else h
    # refine around the three highest local grid maxima
    interior = np.flatnonzero((vals[1:-1] >= vals[:-2]) & (vals[1:-1] >= vals[2:])) + 1
    cands = set(interior[np.argsort(vals[interior])[::-1][:3]].tolist()) | {int(vals.argmax())}
    for k in cands:
        res = minimize_scalar(lambda u: -kde.log_density(u),
                              bounds=(grid[k] - step, grid[k] + step), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, abs(grid[k]))})
        best = max(best, float(-res.fun))
    return best


def silverman_bandwidth(values) -> float:
    """``0.9 * min(sd, IQR/1.34) * n**(-1/5)``; falls back to sd when the IQR is zero."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    sd = float(np.std(values, ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * n ** (-0.2)


def trim_indices(residuals, alpha: float) -> np.ndarray:
    """Indices kept after dropping the ``ceil(alpha*N)`` points farthest from the median.

    Ties in distance are broken by ascending index (the later index is dropped first).
    """
    r = np.asarray(residuals, dtype=np.float64)
    n = r.size
    n_drop = math.ceil(alpha * n - 1e-12) if alpha > 0 else 0
    dist = np.abs(r - np.median(r))
    order = np.lexsort((np.arange(n), dist))
    return np.sort(order[:n - n_drop])


def fit_kde(residuals, alpha: float = 0.01) -> TrimmedKde:
    r = np.asarray(residuals, dtype=np.float64).ravel()
    if not 0 <= alpha < 0.5:
        raise ValueError("alpha must lie in [0, 0.5)")
    if not np.all(np.isfinite(r)):
        raise ValueError("non-finite residuals")
    keep = trim_indices(r, alpha)
    if keep.size < MIN_RETAINED:
        raise ValueError(f"only {keep.size} residuals left after trimming, need {MIN_RETAINED}")
    kept = r[keep]
    h = silverman_bandwidth(kept)
    if not h > BANDWIDTH_FLOOR:
        warnings.warn("residuals have no spread after trimming; bandwidth floored at 1e-9",
                      RuntimeWarning, stacklevel=2)
        h = BANDWIDTH_FLOOR
    return TrimmedKde(kept, h, alpha)


def log_density(kde: TrimmedKde, x):
    return kde.log_density(x)


def sample(kde: TrimmedKde, rng, size=None):
    return kde.sample(rng, size)
