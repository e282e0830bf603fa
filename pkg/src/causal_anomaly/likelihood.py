"""Joint likelihood of a sample under an outlier assignment.

``log p(x)`` integrates out the latent clean value of every measurement
outlier by Monte Carlo: latent completions are drawn from the fitted
mechanism plus KDE noise (or from the mechanistic prior when a node carries
both indicators), propagated in topological order, and the product of the
remaining clean / mechanistic-prior densities is averaged over completions.

Factors that do not depend on any latent completion are pulled out of the
average exactly.  All terms are combined with ``math.fsum`` so that the
result does not depend on summation order; this makes the sink-node
``z_j``/``w_j`` comparison exact under equal priors.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_MC = 100
NOISE_STREAM = 0
PRIOR_STREAM = 1


class PriorSupportWarning(RuntimeWarning):
    pass


@dataclass
class OutlierPriors:
    """Uniform densities over ``[lo, hi]`` per node, separately for both outlier kinds."""

    mech_lo: np.ndarray
    mech_hi: np.ndarray
    meas_lo: np.ndarray
    meas_hi: np.ndarray

    def __post_init__(self):
        for name in ("mech_lo", "mech_hi", "meas_lo", "meas_hi"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if not (np.all(self.mech_hi > self.mech_lo) and np.all(self.meas_hi > self.meas_lo)):
            raise ValueError("prior supports must satisfy hi > lo")

    @classmethod
    def shared(cls, lo, hi):
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        return cls(lo.copy(), hi.copy(), lo.copy(), hi.copy())

    def log_mech(self, j, value):
        return _uniform_logpdf(self.mech_lo[j], self.mech_hi[j], value)

    def log_meas(self, j, value):
        return _uniform_logpdf(self.meas_lo[j], self.meas_hi[j], value)

    def log_mech_matrix(self, data):
        return _uniform_logpdf_matrix(self.mech_lo, self.mech_hi, data)

    def log_meas_matrix(self, data):
        return _uniform_logpdf_matrix(self.meas_lo, self.meas_hi, data)

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("mech_lo", "mech_hi", "meas_lo", "meas_hi")}

    @classmethod
    def from_dict(cls, obj):
        return cls(obj["mech_lo"], obj["mech_hi"], obj["meas_lo"], obj["meas_hi"])


def _uniform_logpdf(lo, hi, value):
    if value < lo or value > hi:
        warnings.warn("value outside the prior support; support widened for this evaluation",
                      PriorSupportWarning, stacklevel=3)
        lo, hi = min(lo, value), max(hi, value)
    return -math.log(hi - lo)


def _uniform_logpdf_matrix(lo, hi, data):
    data = np.asarray(data, dtype=np.float64)
    lo_ = np.minimum(lo[None, :], data)
    hi_ = np.maximum(hi[None, :], data)
    if np.any(lo_ < lo[None, :]) or np.any(hi_ > hi[None, :]):
        warnings.warn("values outside the prior support; support widened for those cells",
                      PriorSupportWarning, stacklevel=3)
    return -np.log(hi_ - lo_)


def uniform_prior_from_data(data) -> OutlierPriors:
    """Per-column ``[min, max]`` widened by ``1e-9 * range`` on each side."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError("need a 2-D array with at least 2 rows")
    if not np.all(np.isfinite(data)):
        raise ValueError("non-finite data")
    lo = data.min(axis=0)
    hi = data.max(axis=0)
    rng = hi - lo
    if np.any(rng <= 0):
        bad = np.flatnonzero(rng <= 0).tolist()
        raise ValueError(f"constant column(s) {bad}: degenerate prior range")
    return OutlierPriors.shared(lo - 1e-9 * rng, hi + 1e-9 * rng)


@dataclass
class Rates:
    mech: np.ndarray
    meas: np.ndarray

    def __post_init__(self):
        self.mech = np.asarray(self.mech, dtype=np.float64)
        self.meas = np.asarray(self.meas, dtype=np.float64)
        for v in (self.mech, self.meas):
            if np.any(v < 0) or np.any(v > 1):
                raise ValueError("rates must lie in [0, 1]")

    @classmethod
    def constant(cls, d, rate):
        return cls(np.full(d, rate), np.full(d, rate))

    @classmethod
    def from_counts(cls, mech_counts, meas_counts, n, floor=True):
        """Empirical rates; with ``floor`` a zero count maps to ``0.5/(n+1)``."""
        mech = np.asarray(mech_counts, dtype=np.float64) / n
        meas = np.asarray(meas_counts, dtype=np.float64) / n
        if floor:
            f = 0.5 / (n + 1)
            mech = np.maximum(mech, f)
            meas = np.maximum(meas, f)
        return cls(mech, meas)


def bernoulli_log(bit, rate: float) -> float:
    """``bit*log(rate) + (1-bit)*log(1-rate)`` with ``log 0 = -inf``."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate {rate} outside [0, 1]")
    p = rate if bit else 1.0 - rate
    return math.log(p) if p > 0 else -math.inf


def binom_increment(n: int, k: int) -> float:
    """``log C(n, k+1) - log C(n, k) = log((n-k)/(k+1))``."""
    if not 0 <= k < n:
        raise ValueError(f"need 0 <= k < n, got n={n}, k={k}")
    return math.log((n - k) / (k + 1))


def profile_bernoulli(k: int, n: int) -> float:
    """Bernoulli log-likelihood of ``k`` successes in ``n`` at the MLE rate ``k/n``."""
    out = 0.0
    if k > 0:
        out += k * math.log(k / n)
    if k < n:
        out += (n - k) * math.log1p(-k / n)
    return out


def profile_bernoulli_gain(k: int, n: int) -> float:
    return profile_bernoulli(k + 1, n) - profile_bernoulli(k, n)


def log_mean_exp(values) -> float:
    """``log(mean(exp(values)))``; exactly rounded, so invariant to the order of ``values``."""
    v = np.asarray(values, dtype=np.float64)
    top = float(v.max())
    if not math.isfinite(top):
        return top
    return top + math.log(math.fsum(np.exp(v - top).tolist())) - math.log(v.size)


class LatentDraws:
    """Per-node Monte-Carlo draws for one sample.

    The stream of node ``j`` is seeded from ``(seed, sample_index, j, kind)``, so
    every pattern evaluated for the same sample reuses the same completions for
    the same node (common random numbers) regardless of evaluation order.
    """

    def __init__(self, seed: int, sample_index: int, n_draws: int = DEFAULT_MC):
        if n_draws < 1:
            raise ValueError("need at least one Monte-Carlo draw")
        self.seed = int(seed)
        self.sample_index = int(sample_index)
        self.n_draws = int(n_draws)
        self._cache = {}

    def _rng(self, j, kind):
        return np.random.default_rng([self.seed, self.sample_index, int(j), kind])

    def noise(self, j, kde) -> np.ndarray:
        key = (j, NOISE_STREAM)
        if key not in self._cache:
            self._cache[key] = kde.sample(self._rng(j, NOISE_STREAM), self.n_draws)
        return self._cache[key]

    def prior(self, j, lo, hi) -> np.ndarray:
        key = (j, PRIOR_STREAM)
        if key not in self._cache:
            self._cache[key] = self._rng(j, PRIOR_STREAM).uniform(lo, hi, self.n_draws)
        return self._cache[key]


class SampleEvaluator:
    """Evaluates ``log p(x)`` (marginalised) and its optimistic upper bound for one model.

    ``clean_ll`` and the prior log-densities of the data being explained are
    precomputed once so that unaffected nodes cost nothing.
    """

    def __init__(self, scm, data, seed: int = 0, n_draws: int = DEFAULT_MC, priors=None):
        self.scm = scm
        self.data = np.asarray(data, dtype=np.float64)
        self.priors = priors if priors is not None else scm.priors
        self.seed = int(seed)
        self.n_draws = int(n_draws)
        dag = scm.dag
        self.d = dag.node_count
        self.order = dag.order
        self.parents = [dag.parents(j) for j in range(self.d)]
        self.children = [dag.children(j) for j in range(self.d)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PriorSupportWarning)
            self.log_mech = self.priors.log_mech_matrix(self.data)
            self.log_meas = self.priors.log_meas_matrix(self.data)
        if np.any(self.priors.mech_lo > self.data.min(axis=0, initial=np.inf)) or \
                np.any(self.priors.mech_hi < self.data.max(axis=0, initial=-np.inf)):
            warnings.warn("data outside the fitted prior supports; widened per value",
                          PriorSupportWarning, stacklevel=2)
        self.clean_ll = scm.residual_loglik(self.data) if self.data.size else \
            np.empty((0, self.d))
        self.log_mode = np.array([scm.noises[j].log_mode for j in range(self.d)])
        self._draws = {}

    def draws(self, i) -> LatentDraws:
        dr = self._draws.get(i)
        if dr is None:
            dr = self._draws[i] = LatentDraws(self.seed, i, self.n_draws)
        return dr

    def _terms(self, i, z, w, bound):
        x = self.data[i]
        const = []
        coupled_idx = []
        latent = {}
        draws = None if bound else self.draws(i)
        coupled = np.zeros(self.n_draws) if not bound else None
        for k in self.order:
            pa = self.parents[k]
            if w[k]:
                const.append(self.log_meas[i, k])
                if bound:
                    latent[k] = None
                elif z[k]:
                    latent[k] = draws.prior(k, self.priors.mech_lo[k], self.priors.mech_hi[k])
                else:
                    latent[k] = self._predict(k, x, latent) + draws.noise(k, self.scm.noises[k])
                continue
            if z[k]:
                const.append(self.log_mech[i, k])
                continue
            if any(p in latent for p in pa):
                coupled_idx.append(k)
                if not bound:
                    pred = self._predict(k, x, latent)
                    coupled += self.scm.noises[k].log_density(x[k] - pred)
            else:
                const.append(self.clean_ll[i, k])
        return const, coupled_idx, coupled

    def _predict(self, k, x, latent):
        pa = self.parents[k]
        mech = self.scm.mechanisms[k]
        if not pa:
            return np.full(self.n_draws, mech.intercept)
        cols = [latent[p] if p in latent else np.full(self.n_draws, x[p]) for p in pa]
        return mech.predict(np.column_stack(cols))

    def log_marginal(self, i, z, w) -> float:
        const, coupled_idx, coupled = self._terms(i, z, w, bound=False)
        if coupled_idx:
            const.append(log_mean_exp(coupled))
        return math.fsum(const)

    def log_marginal_bound(self, i, z, w) -> float:
        """Upper bound on :meth:`log_marginal`: coupled residual terms at their density modes."""
        const, coupled_idx, _ = self._terms(i, z, w, bound=True)
        const.extend(self.log_mode[k] for k in coupled_idx)
        return math.fsum(const)

    def clean_log_marginal(self, i) -> float:
        return math.fsum(self.clean_ll[i])


def bernoulli_terms(z, w, rates: Rates) -> list:
    return [bernoulli_log(z[j], rates.mech[j]) for j in range(len(z))] + \
           [bernoulli_log(w[j], rates.meas[j]) for j in range(len(w))]


def log_joint(sample, pattern, scm, priors=None, rates=None, M: int = DEFAULT_MC, rng=0,
              sample_index: int = 0) -> float:
    """``log p(x) + sum_j log Bern(z_j; pi_mech_j) + log Bern(w_j; pi_meas_j)``.

    ``rng`` is an integer seed (or a :class:`LatentDraws`); completions for node ``j``
    are drawn from the stream ``(seed, sample_index, j)``.
    """
    x = np.asarray(sample, dtype=np.float64).reshape(1, -1)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite sample")
    if M < 1:
        raise ValueError("M must be >= 1")
    seed = rng.seed if isinstance(rng, LatentDraws) else int(rng)
    ev = SampleEvaluator(scm, x, seed=seed, n_draws=M, priors=priors)
    if isinstance(rng, LatentDraws):
        ev._draws[0] = rng
    else:
        ev._draws[0] = LatentDraws(seed, sample_index, M)
    z = np.asarray(pattern.mech, dtype=bool)
    w = np.asarray(pattern.meas, dtype=bool)
    lp = ev.log_marginal(0, z, w)
    if rates is None:
        return lp
    return math.fsum([lp] + bernoulli_terms(z, w, rates))
