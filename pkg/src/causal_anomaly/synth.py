"""Synthetic benchmark: random DAGs, polynomial mechanisms and outlier injection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .graph import Dag, write_dag

KIND_MECH = "mech"
KIND_MEAS = "meas"


@dataclass
class SynthSpec:
    d: int = 15
    N: int = 2000
    edge_prob: float = 0.3
    noise_sd: float = 0.1
    poly_len: int = 2
    strength: float = 5.0
    target_contamination: float = 0.10
    seed: int = 0
    rate: float | None = None
    random_sign: bool = False

    def __post_init__(self):
        if self.d < 1 or self.N < 1:
            raise ValueError("d and N must be >= 1")
        if not 0.0 <= self.edge_prob <= 1.0:
            raise ValueError("edge_prob must lie in [0, 1]")
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")
        if self.strength < 0:
            raise ValueError("strength must be nonnegative")
        if not 0.0 <= self.target_contamination < 1.0:
            raise ValueError("target_contamination must lie in [0, 1)")
        if self.poly_len < 1:
            raise ValueError("poly_len must be >= 1")

    @property
    def outlier_rate(self) -> float:
        return default_rates(self.d, self.target_contamination) if self.rate is None else self.rate


@dataclass
class PolyMechanism:
    """``f(pa) = (sum_k sum_t a_kt (x_k - b_kt)**e_kt - lo) / (hi - lo)``."""

    parents: tuple
    terms: list = field(default_factory=list)  # per parent: array of (a, b, e) rows
    lo: float = 0.0
    hi: float = 1.0
    normalized: bool = False

    def raw(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros(values.shape[0])
        for col, tt in zip(self.parents, self.terms):
            x = values[:, col]
            for a, b, e in tt:
                out += a * (x - b) ** int(e)
        return out

    def __call__(self, values: np.ndarray) -> np.ndarray:
        if not self.parents:
            return np.zeros(values.shape[0])
        return (self.raw(values) - self.lo) / (self.hi - self.lo)

    def to_dict(self):
        return {"parents": list(self.parents), "terms": [np.asarray(t).tolist() for t in self.terms],
                "lo": self.lo, "hi": self.hi}


@dataclass
class GroundTruth:
    dag: Dag
    Z_true: np.ndarray
    W_true: np.ndarray
    mechanisms: list

    @property
    def anomalous(self) -> np.ndarray:
        return self.Z_true.any(axis=1) | self.W_true.any(axis=1)

    def roots(self) -> np.ndarray:
        return self.Z_true | self.W_true

    def to_rows(self):
        rows = []
        for i, j in zip(*np.nonzero(self.roots())):
            if self.Z_true[i, j]:
                rows.append((int(i), int(j), KIND_MECH))
            if self.W_true[i, j]:
                rows.append((int(i), int(j), KIND_MEAS))
        return rows


def default_rates(d: int, target_contamination: float = 0.10) -> float:
    """Per-cell, per-kind rate giving ``target_contamination`` anomalous samples."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return 1.0 - (1.0 - target_contamination) ** (1.0 / (2 * d))


def gen_dag(spec: SynthSpec, rng=None) -> Dag:
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    edges = []
    for j in range(spec.d):
        for i in range(j):
            if rng.random() < spec.edge_prob:
                edges.append((i, j))
    return Dag.from_edges(spec.d, edges)


def _coef(rng, size):
    mag = rng.uniform(0.1, 1.0, size)
    return np.where(rng.random(size) < 0.5, -mag, mag)


def gen_mechanisms(dag: Dag, spec: SynthSpec, rng) -> list:
    """Polynomial descriptors; normalisation constants are set by :func:`sample_clean`."""
    mechs = []
    for j in range(dag.node_count):
        pa = dag.parents(j)
        terms = []
        for _ in pa:
            a = _coef(rng, spec.poly_len)
            b = rng.uniform(-3.0, 3.0, spec.poly_len)
            e = rng.choice([2, 3], spec.poly_len)
            terms.append(np.column_stack([a, b, e.astype(float)]))
        mechs.append(PolyMechanism(tuple(pa), terms))
    return mechs


def sample_clean(dag: Dag, mechanisms: list, spec: SynthSpec, rng):
    """Ancestral sampling; returns ``(data, latents, noise)`` (data equals latents).

    On first use the min/max of each raw mechanism output over this clean sample fix
    its normalisation to ``[0, 1]``.
    """
    n, d = spec.N, dag.node_count
    noise = rng.normal(0.0, spec.noise_sd, size=(n, d))
    x = np.zeros((n, d))
    for j in dag.order:
        m = mechanisms[j]
        if m.parents:
            raw = m.raw(x)
            if not m.normalized:
                lo, hi = float(raw.min()), float(raw.max())
                m.lo, m.hi = lo, (hi if hi > lo else lo + 1.0)
                m.normalized = True
            x[:, j] = (raw - m.lo) / (m.hi - m.lo) + noise[:, j]
        else:
            x[:, j] = noise[:, j]
    return x.copy(), x, noise


def inject_outliers(data, latents, dag: Dag, mechanisms: list, spec: SynthSpec, rng):
    """Independent measurement / mechanistic flips at ``spec.outlier_rate`` per cell.

    Returns ``(contaminated_data, GroundTruth)``.
    """
    n, d = np.shape(data)
    rate = spec.outlier_rate
    Z = rng.random((n, d)) < rate
    W = rng.random((n, d)) < rate
    return inject_at(data, latents, dag, mechanisms, spec, rng, Z, W)


def inject_at(data, latents, dag: Dag, mechanisms: list, spec: SynthSpec, rng, Z, W):
    """Inject outliers at the cells marked in ``Z`` (mechanistic) and ``W`` (measurement)."""
    data = np.asarray(data, dtype=np.float64)
    latents = np.asarray(latents, dtype=np.float64).copy()
    Z = np.asarray(Z, dtype=bool)
    W = np.asarray(W, dtype=bool)
    n, d = data.shape
    sd = data.std(axis=0, ddof=1) if n > 1 else np.zeros(d)

    def shifted(j):
        base = data[rng.integers(0, n), j]
        sign = 1.0
        if spec.random_sign:
            sign = -1.0 if rng.random() < 0.5 else 1.0
        return base + sign * spec.strength * sd[j]

    for i in np.flatnonzero(Z.any(axis=1)):
        row = latents[i].copy()
        touched = set()
        for j in dag.order:
            if Z[i, j]:
                row[j] = shifted(j)
                touched.add(j)
            elif any(p in touched for p in dag.parents(j)):
                row[j] = mechanisms[j](row[None, :])[0] + rng.normal(0.0, spec.noise_sd)
                touched.add(j)
        latents[i] = row
    obs = latents.copy()
    for i, j in zip(*np.nonzero(W)):
        obs[i, j] = shifted(j)
    return obs, GroundTruth(dag, Z.copy(), W.copy(), mechanisms)


def generate(spec: SynthSpec):
    """Full benchmark instance: ``(data, GroundTruth)``."""
    rng = np.random.default_rng(spec.seed)
    dag = gen_dag(spec, rng)
    mechs = gen_mechanisms(dag, spec, rng)
    data, latents, _ = sample_clean(dag, mechs, spec, rng)
    return inject_outliers(data, latents, dag, mechs, spec, rng)


def write_data_csv(path, data, columns=None):
    data = np.asarray(data)
    columns = columns or [f"X{j}" for j in range(data.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in data:
            w.writerow([repr(float(v)) for v in row])


def write_truth_csv(path, truth: GroundTruth):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_index", "feature", "kind"])
        for i, j, kind in truth.to_rows():
            w.writerow([i, j, kind])


def read_truth_csv(path, n, d):
    Z = np.zeros((n, d), dtype=bool)
    W = np.zeros((n, d), dtype=bool)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            i, j = int(row["sample_index"]), int(row["feature"])
            if not (0 <= i < n and 0 <= j < d):
                raise ValueError(f"truth entry ({i}, {j}) outside a {n}x{d} table")
            if row["kind"] == KIND_MECH:
                Z[i, j] = True
            elif row["kind"] == KIND_MEAS:
                W[i, j] = True
            else:
                raise ValueError(f"unknown kind {row['kind']!r}")
    return Z, W


def write_instance(prefix, data, truth: GroundTruth):
    """Write ``<prefix>data.csv``, ``<prefix>dag.txt`` and ``<prefix>truth.csv``."""
    write_data_csv(f"{prefix}data.csv", data)
    write_dag(truth.dag, f"{prefix}dag.txt")
    write_truth_csv(f"{prefix}truth.csv", truth)
