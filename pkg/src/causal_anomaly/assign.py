"""Greedy latent maximum-likelihood assignment, root-cause scores and confidences.

The global objective is

    sum_i log p(x_i | a_i) + sum_j [B(k_j^mech) + B(k_j^meas)]

where ``B(k) = k log(k/N) + (N-k) log(1-k/N)`` is the Bernoulli log-likelihood
of the indicator column at its maximum-likelihood rate ``k/N``.  Candidates are
visited in order of an optimistic gain that provably dominates the exact gain,
so a candidate whose optimistic gain is not positive can be skipped.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .likelihood import (
    DEFAULT_MC,
    Rates,
    SampleEvaluator,
    binom_increment,
    profile_bernoulli,
    profile_bernoulli_gain,
)

MECH = "mech"
MEAS = "meas"
TIE_TOL = 1e-12
CHECK_TOL = 1e-9
CLASS_NONE = "none"
CLASS_MECH = "mechanistic"
CLASS_MEAS = "measurement"


class InvariantError(AssertionError):
    """Raised in strict mode when a search invariant fails."""


@dataclass
class AssignConfig:
    M: int = DEFAULT_MC
    seed: int = 0
    percentile: float = 10.0
    strict: bool = True
    workers: int = 1


@dataclass
class Assignment:
    Z: np.ndarray
    W: np.ndarray
    rates: Rates
    objective_trace: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    @property
    def n_samples(self):
        return self.Z.shape[0]

    def assigned_samples(self):
        return np.flatnonzero(self.Z.any(axis=1) | self.W.any(axis=1))


@dataclass
class Report:
    delta: np.ndarray
    confidence: np.ndarray
    labels: np.ndarray
    log_l_mech: np.ndarray
    log_l_meas: np.ndarray
    assignment: Assignment
    columns: list
    seed: int = 0
    M: int = DEFAULT_MC

    def rows(self):
        """``(sample, feature, delta, confidence, class)`` sorted by delta descending.

        Ties are ordered by sample then feature index.
        """
        n, d = self.delta.shape
        flat = self.delta.ravel()
        order = np.lexsort((np.arange(n * d), -flat))
        out = []
        for k in order:
            i, j = divmod(int(k), d)
            out.append((i, self.columns[j], float(self.delta[i, j]),
                        float(self.confidence[i, j]), str(self.labels[i, j])))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample_index", "feature", "delta_nats", "confidence_nats", "class"])
        for i, name, delta, conf, label in self.rows():
            w.writerow([i, name, _fmt(delta), _fmt(conf), label])
        return buf.getvalue()

    def summary(self) -> dict:
        a = self.assignment
        n = a.n_samples
        return {
            "n_samples": int(n),
            "features": list(self.columns),
            "seed": int(self.seed),
            "M": int(self.M),
            "counts": {"mechanistic": a.Z.sum(axis=0).tolist(),
                       "measurement": a.W.sum(axis=0).tolist()},
            "rates": {"mechanistic": [float(_fmt(v)) for v in a.Z.mean(axis=0)] if n else [],
                      "measurement": [float(_fmt(v)) for v in a.W.mean(axis=0)] if n else []},
            "n_assigned_samples": int(a.assigned_samples().size),
            "objective_trace": [float(_fmt(v)) for v in a.objective_trace],
            "checks": a.checks,
        }

    def write(self, csv_path, json_path=None):
        with open(csv_path, "w", newline="") as fh:
            fh.write(self.to_csv())
        if json_path is not None:
            with open(json_path, "w") as fh:
                fh.write(json.dumps(self.summary(), indent=1, sort_keys=True) + "\n")


def _fmt(v: float) -> str:
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return "%.9g" % v


class AssignState:
    """Mutable search state: indicators, counts and the current per-sample log p(x)."""

    def __init__(self, scm, data, config: AssignConfig | None = None, priors=None):
        self.config = config or AssignConfig()
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != scm.d:
            raise ValueError(f"data has shape {data.shape}, model has {scm.d} nodes")
        if not np.all(np.isfinite(data)):
            raise ValueError("data contains non-finite values")
        self.scm = scm
        self.data = data
        self.n, self.d = data.shape
        self.ev = SampleEvaluator(scm, data, seed=self.config.seed, n_draws=self.config.M,
                                  priors=priors)
        self.Z = np.zeros((self.n, self.d), dtype=bool)
        self.W = np.zeros((self.n, self.d), dtype=bool)
        self.k_mech = np.zeros(self.d, dtype=np.int64)
        self.k_meas = np.zeros(self.d, dtype=np.int64)
        self.logp = np.array([self.ev.clean_log_marginal(i) for i in range(self.n)])
        self.mode_slack = np.maximum(self.ev.log_mode, 0.0)
        self.trace = [self.objective()]
        self.n_checked = 0
        self.violations = []

    # -- objective -----------------------------------------------------------

    def objective(self) -> float:
        terms = list(self.logp)
        terms += [profile_bernoulli(int(k), self.n) for k in self.k_mech]
        terms += [profile_bernoulli(int(k), self.n) for k in self.k_meas]
        return math.fsum(terms)

    def counts(self, kind):
        return self.k_mech if kind == MECH else self.k_meas

    def _with(self, i, j, kind):
        z = self.Z[i].copy()
        w = self.W[i].copy()
        (z if kind == MECH else w)[j] = True
        return z, w

    # -- gains -----------------------------------------------------------------

    def optimistic_gain(self, i, j, kind) -> float:
        k = int(self.counts(kind)[j])
        if k >= self.n - 1 or 2 * k >= self.n:
            return -math.inf
        z, w = self._with(i, j, kind)
        bound = self.ev.log_marginal_bound(i, z, w)
        return bound + self.mode_slack[j] - self.logp[i] - binom_increment(self.n, k)

    def exact_gain(self, i, j, kind, return_logp=False):
        k = int(self.counts(kind)[j])
        if k >= self.n:
            return (-math.inf, None) if return_logp else -math.inf
        z, w = self._with(i, j, kind)
        lp = self.ev.log_marginal(i, z, w)
        gain = lp - self.logp[i] + profile_bernoulli_gain(k, self.n)
        return (gain, lp) if return_logp else gain

    def accept(self, i, j, kind, new_logp):
        before = self.trace[-1]
        (self.Z if kind == MECH else self.W)[i, j] = True
        self.counts(kind)[j] += 1
        self.logp[i] = new_logp
        after = self.objective()
        self.trace.append(after)
        if not after > before:
            self._violation(f"objective did not increase at ({i}, {j}, {kind}): "
                            f"{before!r} -> {after!r}")

    def check_dominance(self, i, j, kind, opt, exact):
        self.n_checked += 1
        if exact > opt + CHECK_TOL * max(1.0, abs(opt)):
            self._violation(f"optimistic gain {opt!r} below exact gain {exact!r} at "
                            f"({i}, {j}, {kind})")

    def _violation(self, msg):
        self.violations.append(msg)
        if self.config.strict:
            raise InvariantError(msg)

    def neighbours(self, j):
        dag = self.scm.dag
        return sorted({j, *dag.children(j), *dag.parents(j)})

    def final_rates(self, floor=True) -> Rates:
        return Rates.from_counts(self.k_mech, self.k_meas, self.n, floor=floor)

    def assignment(self) -> Assignment:
        return Assignment(self.Z.copy(), self.W.copy(), self.final_rates(floor=False),
                          list(self.trace),
                          {"dominance_checks": self.n_checked,
                           "violations": list(self.violations)})


def optimistic_meas_gain(sample_idx, j, state: AssignState) -> float:
    return state.optimistic_gain(sample_idx, j, MEAS)


def optimistic_mech_gain(sample_idx, j, state: AssignState) -> float:
    return state.optimistic_gain(sample_idx, j, MECH)


def exact_gain(sample_idx, j, kind, state: AssignState) -> float:
    return state.exact_gain(sample_idx, j, kind)


def candidate_pool(state: AssignState, percentile: float) -> list:
    """Cells whose clean residual log-density is below the node's ``percentile``."""
    ll = state.ev.clean_ll
    if state.n == 0:
        return []
    cut = np.percentile(ll, percentile, axis=0)
    ii, jj = np.nonzero(ll < cut[None, :])
    return sorted(zip(ii.tolist(), jj.tolist()))


def _run_pass(state: AssignState, kind, pool):
    heap = []
    queued = set()

    def push(i, j):
        if state.Z[i, j] or state.W[i, j]:
            return
        g = state.optimistic_gain(i, j, kind)
        if g > 0:
            heapq.heappush(heap, (-g, i, j))
            queued.add((i, j))

    for i, j in pool:
        push(i, j)
    while heap:
        neg, i, j = heapq.heappop(heap)
        queued.discard((i, j))
        if state.Z[i, j] or state.W[i, j]:
            continue
        opt = state.optimistic_gain(i, j, kind)
        if not opt > 0:
            continue
        if opt < -neg - TIE_TOL and heap and -heap[0][0] > opt:
            # stale key: requeue at its current value
            heapq.heappush(heap, (-opt, i, j))
            queued.add((i, j))
            continue
        gain, lp = state.exact_gain(i, j, kind, return_logp=True)
        state.check_dominance(i, j, kind, opt, gain)
        if not gain > 0:
            continue
        if kind == MEAS:
            comp = 0.0
            for k in [j, *state.scm.dag.children(j)]:
                if state.Z[i, k]:
                    continue
                g_mech = state.exact_gain(i, k, MECH)
                if g_mech > 0:
                    comp += g_mech
            if not gain > comp:
                continue
        state.accept(i, j, kind, lp)
        for k in state.neighbours(j):
            if (i, k) not in queued:
                push(i, k)


def mle_assign(data, scm, priors=None, config: AssignConfig | None = None,
               return_state=False):
    """Greedy measurement pass followed by a mechanistic pass.

    Parameters
    ----------
    data : (N, d) array
    scm : FittedScm
    priors : OutlierPriors, optional
        Defaults to the priors stored with the model.
    config : AssignConfig, optional
    """
    state = AssignState(scm, data, config, priors)
    pool = candidate_pool(state, state.config.percentile)
    _run_pass(state, MEAS, pool)
    _run_pass(state, MECH, pool)
    return (state.assignment(), state) if return_state else state.assignment()


# ---------------------------------------------------------------------------
# scores
# ---------------------------------------------------------------------------


def _branch_terms(rates: Rates, j):
    """Bernoulli log-odds for switching an indicator of node ``j`` on."""
    def odds(p):
        if p <= 0:
            return -math.inf
        if p >= 1:
            return math.inf
        return math.log(p) - math.log1p(-p)
    return odds(rates.mech[j]), odds(rates.meas[j])


def _score_sample(state: AssignState, rates: Rates, i):
    """``(delta, log_l_mech, log_l_meas, base)`` rows for one assigned sample."""
    d = state.d
    ev = state.ev
    delta = np.empty(d)
    lz = np.empty(d)
    lw = np.empty(d)
    for j in range(d):
        z = state.Z[i].copy()
        w = state.W[i].copy()
        z[j] = False
        w[j] = False
        base = ev.log_marginal(i, z, w)
        oz, ow = _branch_terms(rates, j)
        z[j] = True
        lz[j] = math.fsum([ev.log_marginal(i, z, w), oz])
        z[j] = False
        w[j] = True
        lw[j] = math.fsum([ev.log_marginal(i, z, w), ow])
        delta[j] = max(lz[j], lw[j]) - base
    return delta, lz, lw


def score_delta(sample_idx, j, state: AssignState, rates: Rates | None = None) -> float:
    rates = rates or state.final_rates()
    if state.Z[sample_idx].any() or state.W[sample_idx].any():
        return float(_score_sample(state, rates, sample_idx)[0][j])
    oz, _ = _branch_terms(rates, j)
    return float(state.ev.log_mech[sample_idx, j] - state.ev.clean_ll[sample_idx, j] + oz)


def confidence(sample_idx, j, state: AssignState, rates: Rates | None = None) -> float:
    rates = rates or state.final_rates()
    _, lz, lw = _score_sample(state, rates, sample_idx)
    return float(abs(lz[j] - lw[j]))


def classify(log_l_mech: float, log_l_meas: float) -> str:
    return CLASS_MECH if log_l_mech > log_l_meas + TIE_TOL else CLASS_MEAS


def build_report(state: AssignState, workers: int = 1) -> Report:
    """Scores for every cell at the final (floored) rates."""
    rates = state.final_rates()
    n, d = state.n, state.d
    ev = state.ev
    odds_mech = np.array([_branch_terms(rates, j)[0] for j in range(d)])
    lz = ev.log_mech - ev.clean_ll + odds_mech[None, :]
    lw = np.full((n, d), np.nan)
    delta = lz.copy()
    conf = np.full((n, d), np.nan)
    labels = np.full((n, d), CLASS_NONE, dtype=object)

    assigned = state.assignment().assigned_samples().tolist()
    if workers > 1 and len(assigned) > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda i: _score_sample(state, rates, i), assigned))
    else:
        results = [_score_sample(state, rates, i) for i in assigned]
    for i, (dl, z_row, w_row) in zip(assigned, results):
        delta[i] = dl
        lz[i] = z_row
        lw[i] = w_row
        for j in range(d):
            if state.Z[i, j] or state.W[i, j]:
                conf[i, j] = abs(z_row[j] - w_row[j])
                labels[i, j] = classify(z_row[j], w_row[j])
    return Report(delta, conf, labels, lz, lw, state.assignment(), list(state.scm.columns),
                  state.config.seed, state.config.M)


def explain(data, scm, config: AssignConfig | None = None, priors=None) -> Report:
    """Run the assignment search and score every cell."""
    config = config or AssignConfig()
    _, state = mle_assign(data, scm, priors, config, return_state=True)
    return build_report(state, workers=config.workers)
