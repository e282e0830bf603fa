"""Small synthetic instances with outliers injected at chosen cells."""

import numpy as np

from causal_anomaly.graph import Dag
from causal_anomaly.synth import SynthSpec, gen_dag, gen_mechanisms, inject_at, sample_clean


def instance(seed, d=3, n=100, strength=6.0, edge_prob=0.5, cells=(), dag=None):
    """Clean benchmark data with outliers at ``cells`` = [(i, j, 'mech'|'meas'), ...]."""
    rng = np.random.default_rng(seed)
    spec = SynthSpec(d=d, N=n, edge_prob=edge_prob, strength=strength, seed=seed, rate=0.0)
    dag = dag if dag is not None else gen_dag(spec, rng)
    mechs = gen_mechanisms(dag, spec, rng)
    data, lat, _ = sample_clean(dag, mechs, spec, rng)
    Z = np.zeros((n, d), dtype=bool)
    W = np.zeros((n, d), dtype=bool)
    for i, j, kind in cells:
        (Z if kind == "mech" else W)[i, j] = True
    obs, truth = inject_at(data, lat, dag, mechs, spec, rng, Z, W)
    return obs, truth, data


def chain(d):
    return Dag.from_edges(d, [(j, j + 1) for j in range(d - 1)])
