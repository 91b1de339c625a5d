import numpy as np
import pytest

from oracles import brute_conditional, brute_reward_dist, brute_value, dist_array

from confounded_ope import (
    BehaviorPolicy,
    BudgetExceededError,
    GeneralPolicy,
    MemorylessPolicy,
    SpaceSpec,
    TabularPOMDP,
    exact_reward_dist,
    exact_value,
    monte_carlo_value,
    random_dpomdp,
    random_pomdp,
    verify_lemma_identities,
)
from confounded_ope.probtables import d_z_given_a_zprev, d_z_marginal, population_matrix
from confounded_ope.simulate import sample_dataset


def constant_model(gamma=0.5):
    sp = SpaceSpec(n_u=1, n_z=1, n_a=1, reward_values=(1.0,))
    return TabularPOMDP(spaces=sp, transition=np.ones((1, 1, 1)), observation=np.ones((1, 1)),
                        reward=np.zeros((1, 1), dtype=int), gamma=gamma, init=np.ones(1))


def test_geometric_sum():
    m = constant_model()
    pi = MemorylessPolicy(np.ones((3, 1, 1)))
    res = exact_value(m, pi, 2)
    assert res.v == pytest.approx(1.75, abs=1e-15)
    assert res.path == "memoryless-forward"


def test_degenerate_spaces_point_mass():
    m = constant_model()
    d = exact_reward_dist(m, MemorylessPolicy(np.ones((2, 1, 1))), 1)
    assert d.as_dict() == {1.0: 1.0}


def test_seed7_matches_exhaustive_enumeration():
    g = random_pomdp(7, L=2)
    assert exact_value(g.model, g.eval_policy, 2).v == pytest.approx(brute_value(g.model, g.eval_policy, 2), abs=1e-13)
    assert exact_value(g.model, g.behavior_policy, 2).v == pytest.approx(
        brute_value(g.model, g.behavior_policy, 2), abs=1e-13)


def test_decoupled_reward_dist_matches_enumeration():
    g = random_dpomdp(4, n_z=3, n_o=2, L=1)
    got = exact_reward_dist(g.model, g.eval_policy, 1)
    want = dist_array(brute_reward_dist(g.model, g.eval_policy, 1), got.values)
    np.testing.assert_allclose(got.probs, want, atol=1e-13)


def test_general_policy_enumeration_matches_brute_force():
    g = random_pomdp(2, L=2)

    def fn(t, h):
        p = 0.2 + 0.6 * ((sum(h.z) + sum(h.a)) % 2)
        return [p, 1 - p]

    pol = GeneralPolicy(fn, horizon=3, n_a=2)
    res = exact_value(g.model, pol, 2)
    assert res.path == "history-enumeration"
    assert res.v == pytest.approx(brute_value(g.model, pol, 2), abs=1e-13)


def test_full_observability_reduction():
    g = random_pomdp(3, L=2)
    m = g.model
    full = TabularPOMDP(spaces=m.spaces, transition=m.transition, observation=np.eye(2), reward=m.reward,
                        gamma=m.gamma, init=m.init)
    lifted = MemorylessPolicy(np.asarray(g.behavior_policy.tables))
    for t in range(3):
        np.testing.assert_allclose(exact_reward_dist(full, lifted, t).probs,
                                   exact_reward_dist(full, g.behavior_policy, t).probs, atol=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_value_and_reward_dist_agree(seed):
    g = random_pomdp(seed, n_u=3, n_z=3, L=3) if seed % 2 else random_dpomdp(seed, L=2)
    L = 3 if seed % 2 else 2
    res = exact_value(g.model, g.eval_policy, L)
    for t in range(L + 1):
        np.testing.assert_allclose(res.per_step[t].probs, exact_reward_dist(g.model, g.eval_policy, t).probs,
                                   atol=1e-12)
        assert res.per_step[t].total() == pytest.approx(1.0, abs=1e-9)
    recomputed = sum(g.model.gamma**t * s.mean() for t, s in enumerate(res.per_step))
    assert res.v == pytest.approx(recomputed, abs=1e-12)


def test_budget_guard_refuses_large_enumeration():
    g = random_pomdp(1, L=3)
    pol = GeneralPolicy(lambda t, h: [0.5, 0.5], horizon=4, n_a=2)
    with pytest.raises(BudgetExceededError):
        exact_value(g.model, pol, 3, budget=100)


def test_population_matrix_copy_dynamics_is_identity():
    sp = SpaceSpec(n_u=2, n_z=2, n_a=2, reward_values=(0.0, 1.0))
    m = TabularPOMDP(spaces=sp, transition=np.stack([np.eye(2)] * 2), observation=np.eye(2),
                     reward=np.array([[0, 1], [1, 0]]), gamma=0.9, init=np.array([0.4, 0.6]))
    pi_b = BehaviorPolicy.stationary([[0.5, 0.5], [0.2, 0.8]], 3)
    for i in (1, 2):
        np.testing.assert_allclose(population_matrix(m, pi_b, d_z_given_a_zprev(i, 1), 2).values, np.eye(2))


def test_population_marginal_single_observation():
    m = constant_model()
    pi_b = BehaviorPolicy(np.ones((1, 1, 1)))
    np.testing.assert_allclose(population_matrix(m, pi_b, d_z_marginal(0), 0).values, [[1.0]])


def test_population_matrix_matches_brute_conditional():
    g = random_pomdp(9, n_u=3, n_z=3, L=2)
    mat = population_matrix(g.model, g.behavior_policy, d_z_given_a_zprev(1, 0), 2)
    cond = brute_conditional(g.model, g.behavior_policy, 2,
                             target=lambda r: r["z"][1], given=lambda r: (r["z"][0], r["a"][1]))
    for z0 in range(3):
        for z1 in range(3):
            assert mat.values[z1, z0] == pytest.approx(cond[(z0, 0)].get(z1, 0.0), abs=1e-13)
    np.testing.assert_allclose(mat.values.sum(axis=0), 1.0, atol=1e-10)


def test_population_matrix_matches_monte_carlo():
    g = random_pomdp(11, L=1)
    mat = population_matrix(g.model, g.behavior_policy, d_z_given_a_zprev(1, 0), 1).values
    d = sample_dataset(g.model, g.behavior_policy, 1, 1_000_000, seed=5, threads=4)
    for z0 in range(2):
        sel = (d.z[:, 0] == z0) & (d.a[:, 1] == 0)
        n = sel.sum()
        for z1 in range(2):
            p = mat[z1, z0]
            emp = np.mean(d.z[sel, 1] == z1)
            assert abs(emp - p) <= 3 * np.sqrt(p * (1 - p) / n)


@pytest.mark.parametrize("seed", range(6))
def test_lemma_identities_random_models(seed):
    g = random_pomdp(seed, n_u=2, n_z=3, L=3, condition_cap=np.inf)
    for t in (1, 2, 3):
        rep = verify_lemma_identities(g.model, g.behavior_policy, t)
        assert rep.ok(1e-10), rep.residuals
        assert set(rep.residuals) == {"multiplication", "inverse-factor"}
    h = random_dpomdp(seed, n_z=3, n_o=3, L=1, condition_cap=np.inf)
    rep = verify_lemma_identities(h.model, h.behavior_policy, 1)
    assert rep.ok(1e-10) and "multiplication-decoupled" in rep.residuals


def test_identities_need_positive_step():
    g = random_pomdp(0, L=1)
    with pytest.raises(ValueError):
        verify_lemma_identities(g.model, g.behavior_policy, 0)


def test_monte_carlo_deterministic_model_has_zero_stderr():
    v, se = monte_carlo_value(constant_model(), MemorylessPolicy(np.ones((3, 1, 1))), 2, 100, seed=0)
    assert se == 0.0 and v == pytest.approx(1.75)


def test_monte_carlo_agrees_with_exact_and_is_reproducible():
    g = random_pomdp(13, L=2)
    exact = exact_value(g.model, g.eval_policy, 2).v
    v, se = monte_carlo_value(g.model, g.eval_policy, 2, 100_000, seed=1)
    assert abs(v - exact) <= 4 * se
    assert monte_carlo_value(g.model, g.eval_policy, 2, 100_000, seed=1) == (v, se)
    _, se2 = monte_carlo_value(g.model, g.eval_policy, 2, 200_000, seed=2)
    assert 1.2 <= se / se2 <= 1.7
