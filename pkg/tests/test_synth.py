import numpy as np
import pytest

from causal_anomaly.graph import Dag
from causal_anomaly.synth import (
    SynthSpec,
    default_rates,
    gen_dag,
    gen_mechanisms,
    generate,
    inject_at,
    inject_outliers,
    read_truth_csv,
    sample_clean,
    write_instance,
)


def test_default_rates():
    assert round(default_rates(15, 0.10), 4) == 0.0035
    assert default_rates(15, 0.10) == pytest.approx(1 - 0.9 ** (1 / 30), rel=1e-15)
    assert default_rates(1, 0.0) == 0.0
    assert default_rates(5, 0.10) == pytest.approx(0.010480, abs=1e-6)


def test_gen_dag_extremes():
    assert gen_dag(SynthSpec(d=5, edge_prob=0.0)).edges == frozenset()
    assert gen_dag(SynthSpec(d=3, edge_prob=1.0)).edges == {(0, 1), (0, 2), (1, 2)}


def test_gen_dag_edge_count_mean():
    rng = np.random.default_rng(0)
    spec = SynthSpec(d=15)
    counts = np.array([len(gen_dag(spec, rng).edges) for _ in range(1000)])
    se = np.sqrt(105 * 0.3 * 0.7 / 1000)
    assert abs(counts.mean() - 31.5) < 3 * se


def test_mechanism_laws():
    spec = SynthSpec(d=6, edge_prob=0.7, seed=3)
    rng = np.random.default_rng(3)
    dag = gen_dag(spec, rng)
    mechs = gen_mechanisms(dag, spec, rng)
    for j, m in enumerate(mechs):
        assert m.parents == dag.parents(j)
        for t in m.terms:
            assert t.shape == (2, 3)
            a, b, e = t.T
            assert np.all((np.abs(a) >= 0.1) & (np.abs(a) <= 1))
            assert np.all((b >= -3) & (b <= 3))
            assert set(e) <= {2.0, 3.0}
    roots = dag.roots()
    assert all(not mechs[r].terms for r in roots)


def test_normalized_outputs_in_unit_interval():
    spec = SynthSpec(d=5, N=500, edge_prob=0.8, seed=4)
    rng = np.random.default_rng(4)
    dag = gen_dag(spec, rng)
    mechs = gen_mechanisms(dag, spec, rng)
    x, _, noise = sample_clean(dag, mechs, spec, rng)
    for j in range(5):
        if dag.parents(j):
            f = x[:, j] - noise[:, j]
            assert f.min() >= -1e-12 and f.max() <= 1 + 1e-12


def test_root_only_noise_scale():
    spec = SynthSpec(d=2, N=100_000, edge_prob=0.0, seed=5)
    rng = np.random.default_rng(5)
    dag = gen_dag(spec, rng)
    x, _, _ = sample_clean(dag, gen_mechanisms(dag, spec, rng), spec, rng)
    assert np.all(np.abs(x.std(axis=0) / 0.1 - 1) < 0.05)
    assert np.all(np.abs(np.median(x, axis=0)) < 0.01)


def test_zero_noise_limit_on_surface():
    spec = SynthSpec(d=3, N=200, edge_prob=1.0, noise_sd=1e-12, seed=6)
    rng = np.random.default_rng(6)
    dag = gen_dag(spec, rng)
    mechs = gen_mechanisms(dag, spec, rng)
    x, _, _ = sample_clean(dag, mechs, spec, rng)
    for j in (1, 2):
        np.testing.assert_allclose(x[:, j], mechs[j](x), atol=1e-9)


def test_determinism():
    a, ta = generate(SynthSpec(d=6, N=300, seed=9))
    b, tb = generate(SynthSpec(d=6, N=300, seed=9))
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(ta.Z_true, tb.Z_true)


def test_no_contamination_is_identity():
    spec = SynthSpec(d=4, N=100, strength=0.0, rate=0.0, seed=1)
    rng = np.random.default_rng(1)
    dag = gen_dag(spec, rng)
    mechs = gen_mechanisms(dag, spec, rng)
    x, lat, _ = sample_clean(dag, mechs, spec, rng)
    obs, truth = inject_outliers(x, lat, dag, mechs, spec, rng)
    np.testing.assert_array_equal(obs, x)
    assert not truth.anomalous.any()


def _setup(seed=2):
    spec = SynthSpec(d=3, N=50, strength=4.0, seed=seed)
    rng = np.random.default_rng(seed)
    dag = Dag.from_edges(3, [(0, 1), (1, 2)])
    mechs = gen_mechanisms(dag, spec, rng)
    x, lat, _ = sample_clean(dag, mechs, spec, rng)
    return spec, rng, dag, mechs, x, lat


def test_measurement_leaves_children_untouched():
    spec, rng, dag, mechs, x, lat = _setup()
    W = np.zeros((50, 3), bool)
    W[5, 1] = True
    obs, _ = inject_at(x, lat, dag, mechs, spec, rng, np.zeros_like(W), W)
    np.testing.assert_array_equal(obs[:, [0, 2]], x[:, [0, 2]])
    assert obs[5, 1] != x[5, 1]


def test_mechanistic_changes_descendants():
    spec, rng, dag, mechs, x, lat = _setup()
    Z = np.zeros((50, 3), bool)
    Z[5, 0] = True
    obs, _ = inject_at(x, lat, dag, mechs, spec, rng, Z, np.zeros_like(Z))
    assert obs[5, 1] != x[5, 1] and obs[5, 2] != x[5, 2]
    np.testing.assert_array_equal(np.delete(obs, 5, 0), np.delete(x, 5, 0))


def test_shift_direction():
    spec, rng, dag, mechs, x, lat = _setup()
    spec.strength = 3.0
    W = np.zeros((50, 3), bool)
    W[:, 0] = True
    obs, _ = inject_at(x, lat, dag, mechs, spec, rng, np.zeros_like(W), W)
    sd = x[:, 0].std(ddof=1)
    assert obs[:, 0].mean() >= x[:, 0].mean() + (3.0 - 1) * sd


def test_expected_anomalous_fraction():
    fr = [generate(SynthSpec(d=15, N=2000, seed=s)).__getitem__(1).anomalous.mean()
          for s in range(20)]
    assert abs(np.mean(fr) - 0.10) <= 0.02


def test_files(tmp_path):
    data, truth = generate(SynthSpec(d=4, N=100, seed=2, rate=0.05))
    write_instance(str(tmp_path) + "/", data, truth)
    Z, W = read_truth_csv(tmp_path / "truth.csv", 100, 4)
    np.testing.assert_array_equal(Z, truth.Z_true)
    np.testing.assert_array_equal(W, truth.W_true)
    back = np.loadtxt(tmp_path / "data.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(back, data)


@pytest.mark.parametrize("kw", [{"d": 0}, {"edge_prob": 1.5}, {"noise_sd": 0.0}, {"strength": -1}])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        SynthSpec(**kw)
