import numpy as np
import pytest

from confounded_ope import (
    BehaviorPolicy,
    SpaceSpec,
    TabularPOMDP,
    medical_dpomdp,
    random_dpomdp,
    random_pomdp,
)
from confounded_ope.environments import MedicalConfig
from confounded_ope.probtables import d_z_marginal, population_matrix
from confounded_ope.simulate import CHUNK, Dataset, project_observable, sample_dataset


def _same(d1, d2):
    for k in ("s", "u", "z_pre", "z", "a", "r"):
        np.testing.assert_array_equal(getattr(d1, k), getattr(d2, k))
    if d1.o is None:
        assert d2.o is None
    else:
        np.testing.assert_array_equal(d1.o, d2.o)


def test_deterministic_model_gives_identical_records():
    sp = SpaceSpec(n_u=2, n_z=2, n_a=2, reward_values=(0.0, 1.0))
    m = TabularPOMDP(spaces=sp, transition=np.stack([np.eye(2)[[1, 0]]] * 2), observation=np.eye(2),
                     reward=np.array([[0, 1], [1, 0]]), gamma=0.9, init=np.array([1.0, 0.0]))
    pi_b = BehaviorPolicy.stationary([[1.0, 0.0], [0.0, 1.0]], 3)
    d = sample_dataset(m, pi_b, 2, 50, seed=0)
    assert np.all(d.z == d.z[0]) and np.all(d.a == d.a[0]) and np.all(d.r == d.r[0])
    np.testing.assert_array_equal(d.z[0], [0, 1, 0])


def test_seed_contract():
    g = random_pomdp(1, L=2)
    a = sample_dataset(g.model, g.behavior_policy, 2, 1000, seed=1)
    b = sample_dataset(g.model, g.behavior_policy, 2, 1000, seed=1)
    c = sample_dataset(g.model, g.behavior_policy, 2, 1000, seed=2)
    _same(a, b)
    assert not np.array_equal(a.z, c.z)


@pytest.mark.parametrize("threads", [4, 8])
def test_thread_count_does_not_change_data(threads):
    cfg = MedicalConfig(seed=17, alpha=0.5)
    model, pi_b = medical_dpomdp(cfg)
    n = 3 * CHUNK + 17
    _same(sample_dataset(model, pi_b, cfg.L, n, seed=4, threads=1),
          sample_dataset(model, pi_b, cfg.L, n, seed=4, threads=threads))


def test_prefix_property_across_sizes():
    # chunked streams: a smaller sample is a prefix of a larger one
    g = random_pomdp(0, L=1)
    small = sample_dataset(g.model, g.behavior_policy, 1, CHUNK + 10, seed=3)
    large = sample_dataset(g.model, g.behavior_policy, 1, 2 * CHUNK, seed=3)
    np.testing.assert_array_equal(small.z, large.z[: small.n])


def test_initial_observation_frequencies():
    g = random_pomdp(21, n_u=3, n_z=3, L=0)
    p = population_matrix(g.model, g.behavior_policy, d_z_marginal(0), 0).values[:, 0]
    d = sample_dataset(g.model, g.behavior_policy, 0, 1_000_000, seed=0, threads=4)
    for j in range(3):
        assert abs(np.mean(d.z[:, 0] == j) - p[j]) <= 3 * np.sqrt(p[j] * (1 - p[j]) / d.n)


def test_observable_projection_structure():
    g = random_dpomdp(2, L=2)
    d = sample_dataset(g.model, g.behavior_policy, 2, 5, seed=0)
    recs = project_observable(d)
    assert len(recs) == 5
    for rec, tr in zip(recs, d.records):
        assert not hasattr(rec, "u")
        assert len(rec.a) == 3 and isinstance(rec.z_pre, int)
        assert rec.z == tr.z and rec.o == tr.o and rec.r == tr.r


def test_ndjson_roundtrip_preserves_fingerprint(tmp_path):
    g = random_dpomdp(6, L=2)
    d = sample_dataset(g.model, g.behavior_policy, 2, 300, seed=9)
    path = tmp_path / "d.ndjson"
    d.save(path)
    e = Dataset.load(path)
    _same(d, e)
    assert (e.fingerprint, e.seed, e.horizon, e.kind, e.gamma) == (d.fingerprint, 9, 2, "dpomdp", d.gamma)
    assert e.spaces == d.spaces


def test_rewards_are_logged_and_returns_use_them():
    g = random_pomdp(4, L=2)
    d = sample_dataset(g.model, g.behavior_policy, 2, 100, seed=0)
    rv = np.asarray(g.model.spaces.reward_values)
    expected = np.asarray(g.model.reward)[d.u, d.a]
    np.testing.assert_array_equal(d.r, expected)
    np.testing.assert_allclose(d.returns(), rv[d.r] @ (0.9 ** np.arange(3)))


def test_behavior_policy_required():
    g = random_pomdp(0, L=1)
    with pytest.raises(TypeError):
        sample_dataset(g.model, g.eval_policy, 1, 10, seed=0)
