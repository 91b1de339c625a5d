import itertools
import json

import numpy as np
import pytest

from oracles import brute_conditional

from confounded_ope import (
    BehaviorPolicy,
    IndexSets,
    PopulationSource,
    SingularMatrixError,
    SpaceSpec,
    TabularDPOMDP,
    figure3_pomdp,
    random_dpomdp,
    random_pomdp,
    select_index_sets,
)
from confounded_ope.environments import MedicalConfig, medical_dpomdp
from confounded_ope.models import ObservableRecord
from confounded_ope.probtables import (
    EmpiricalSource,
    behavior_action_probs,
    d_o_given_zaZ,
    d_ooz_given,
    d_rz_given_a_zprev,
    d_z_given_a_zprev,
    d_zz_given_a_zprev2,
    dump_matrices,
    empirical_cond_matrix,
    population_matrix,
    solve_weights,
)
from confounded_ope.simulate import sample_dataset

SP2 = SpaceSpec(n_u=2, n_z=2, n_a=2, reward_values=(0.0, 1.0))


def test_solve_identity_returns_b():
    B = np.array([[0.2, 0.7], [0.8, 0.3]])
    x, cond = solve_weights(np.eye(2), B)
    np.testing.assert_array_equal(x, B)
    assert cond == 1.0


def test_self_solve_gives_identity():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    x, _ = solve_weights(A, A)
    np.testing.assert_allclose(x, np.eye(2), atol=1e-15)


def test_singular_matrix_is_refused_without_ridge():
    A = np.array([[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(SingularMatrixError):
        solve_weights(A, np.eye(2))
    x, cond = solve_weights(A, np.eye(2), ridge=1e-3)
    assert np.all(np.isfinite(x)) and cond > 1e8


def test_well_conditioned_residual():
    rng = np.random.default_rng(0)
    for _ in range(20):
        A = rng.dirichlet(np.ones(3), size=3).T
        B = rng.random((3, 4))
        x, cond = solve_weights(A, B)
        if cond < 1e6:
            assert np.max(np.abs(A @ x - B)) <= 1e-10


def test_figure3_first_weight_matrix_dual_path():
    model, pi_b, _ = figure3_pomdp(1.0, 0.9)
    src = PopulationSource(model, pi_b, 1)
    for a1, (z0, a0) in itertools.product(range(2), itertools.product(range(2), range(2))):
        A = src.matrix(d_z_given_a_zprev(1, a1))
        B = src.matrix(d_zz_given_a_zprev2(1, z0, a0))
        x, _ = solve_weights(A, B)
        np.testing.assert_allclose(x, np.linalg.inv(A.values) @ B.values, atol=1e-12)


def test_descriptor_step_bounds_are_checked():
    g = random_pomdp(0, L=1)
    src = PopulationSource(g.model, g.behavior_policy, 1)
    with pytest.raises(ValueError):
        src.matrix(d_z_given_a_zprev(2, 0))


def test_zero_probability_context_is_nan_marked():
    g = random_pomdp(0, L=1)
    # an action that the behaviour policy never takes at step 1
    tables = np.array(g.behavior_policy.tables)
    tables[1] = [[1.0, 0.0], [1.0, 0.0]]
    src = PopulationSource(g.model, BehaviorPolicy(tables), 1)
    mat = src.matrix(d_z_given_a_zprev(1, 1))
    assert set(mat.nan_columns.tolist()) == {0, 1}


def test_joint_target_columns_sum_to_fixed_mass():
    g = random_pomdp(5, L=2)
    src = PopulationSource(g.model, g.behavior_policy, 2)
    total = sum(src.matrix(d_zz_given_a_zprev2(2, z, 0)).values for z in range(2))
    np.testing.assert_allclose(total.sum(axis=0), 1.0, atol=1e-12)
    rz = src.matrix(d_rz_given_a_zprev(2, 1)).values
    np.testing.assert_allclose(rz.sum(axis=0), 1.0, atol=1e-12)


def test_decoupled_descriptor_matches_brute_force():
    g = random_dpomdp(8, n_z=2, n_o=3, L=1)
    src = PopulationSource(g.model, g.behavior_policy, 1)
    mat = src.matrix(d_ooz_given(1, 2, 1, 0, 1)).values  # P(O1, o0=2, z1=1 | z0=0, a0=1, Z-1)
    cond = brute_conditional(g.model, g.behavior_policy, 1,
                             target=lambda r: (r["o"][1], r["o"][0], r["z"][1]),
                             given=lambda r: (r["z"][0], r["a"][0], r["zpre"]))
    for zpre in range(2):
        for o1 in range(3):
            assert mat[o1, zpre] == pytest.approx(cond[(0, 1, zpre)].get((o1, 2, 1), 0.0), abs=1e-13)


def _copy_records(n=20):
    rng = np.random.default_rng(0)
    out = []
    for _ in range(n):
        z = int(rng.integers(2))
        out.append(ObservableRecord(z_pre=z, z=(z, z, z), a=tuple(int(x) for x in rng.integers(2, size=3)),
                                    r=(0, 1, 0)))
    return out


def test_empirical_copy_data_gives_identity():
    recs = _copy_records()
    for a in range(2):
        m = empirical_cond_matrix(recs, d_z_given_a_zprev(2, a), spaces=SP2)
        observed = ~np.isnan(m.values).any(axis=0)
        np.testing.assert_array_equal(m.values[:, observed], np.eye(2)[:, observed])


def test_single_record_columns_are_point_masses():
    rec = [ObservableRecord(z_pre=1, z=(0, 1), a=(1, 0), r=(1, 0))]
    m = empirical_cond_matrix(rec, d_z_given_a_zprev(1, 0), spaces=SP2)
    np.testing.assert_array_equal(m.values[:, 0], [0.0, 1.0])
    assert np.isnan(m.values[:, 1]).all()
    assert m.counts.tolist() == [1, 0]


def test_smoothing_removes_nans():
    rec = [ObservableRecord(z_pre=1, z=(0, 1), a=(1, 0), r=(1, 0))]
    src = EmpiricalSource(rec, SP2, 0.9, smoothing=1e-3)
    for d in (d_z_given_a_zprev(1, 0), d_z_given_a_zprev(1, 1), d_rz_given_a_zprev(1, 1),
              d_zz_given_a_zprev2(1, 0, 0)):
        assert not np.isnan(src.matrix(d).values).any()


def test_medical_empirical_matrix_within_three_standard_errors():
    cfg = MedicalConfig(seed=17, alpha=0.75)
    model, pi_b = medical_dpomdp(cfg)
    data = sample_dataset(model, pi_b, cfg.L, 200_000, seed=17, threads=4)
    d = d_o_given_zaZ(1, 0, 0)
    emp = empirical_cond_matrix(data, d)
    pop = population_matrix(model, pi_b, d, cfg.L).values
    se = np.sqrt(pop * (1 - pop) / np.maximum(emp.counts, 1))
    assert np.all(np.abs(emp.values - pop) <= 3 * se + 1e-12)


def test_empirical_converges_for_estimator_descriptors():
    g = random_pomdp(3, L=2)
    data = sample_dataset(g.model, g.behavior_policy, 2, 200_000, seed=1)
    src = EmpiricalSource(data, data.spaces, data.gamma)
    pop = PopulationSource(g.model, g.behavior_policy, 2)
    descs = [d_z_given_a_zprev(i, a) for i in range(3) for a in range(2)]
    descs += [d_rz_given_a_zprev(i, a) for i in range(3) for a in range(2)]
    descs += [d_zz_given_a_zprev2(i, z, a) for i in (1, 2) for z in range(2) for a in range(2)]
    for d in descs:
        e, p = src.matrix(d), pop.matrix(d).values
        se = np.sqrt(p * (1 - p) / np.maximum(e.counts, 1))
        assert np.all(np.abs(e.values - p) <= 4 * se + 1e-12), d.name


def test_pooling_over_time_changes_counts_only_for_shiftable_windows():
    g = random_pomdp(3, L=2)
    data = sample_dataset(g.model, g.behavior_policy, 2, 1000, seed=1)
    plain = EmpiricalSource(data, data.spaces, data.gamma)
    pooled = EmpiricalSource(data, data.spaces, data.gamma, pool_time=True)
    assert pooled.matrix(d_z_given_a_zprev(1, 0)).counts.sum() > plain.matrix(d_z_given_a_zprev(1, 0)).counts.sum()
    np.testing.assert_array_equal(pooled.matrix(d_z_given_a_zprev(0, 0)).counts,
                                  plain.matrix(d_z_given_a_zprev(0, 0)).counts)


def test_index_sets_forced_when_sizes_match():
    g = random_dpomdp(1, n_u=2, n_z=2, n_o=2, L=2)
    sets = select_index_sets(PopulationSource(g.model, g.behavior_policy, 2))
    full = IndexSets.full(2, 2)
    assert (sets.K, sets.J) == (full.K, full.J)


def test_index_sets_have_size_n_u():
    g = random_dpomdp(2, n_u=2, n_z=3, n_o=4, L=2)
    sets = select_index_sets(PopulationSource(g.model, g.behavior_policy, 2))
    assert all(len(k) == 2 for k in sets.K) and all(len(j) == 2 for j in sets.J)


@pytest.mark.parametrize("seed", range(5))
def test_selected_sets_no_worse_than_first_indices(seed):
    g = random_dpomdp(seed, n_u=2, n_z=4, n_o=4, L=2)
    src = PopulationSource(g.model, g.behavior_policy, 2)
    sets = select_index_sets(src)
    for i in range(3):
        def worst(K, J):
            return max(src.matrix(d_o_given_zaZ(i, z, a)).subset(K, J).condition_number
                       for z in range(4) for a in range(2))

        assert worst(sets.k(i), sets.j(i - 1)) <= worst((0, 1), (0, 1)) * (1 + 1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_index_sets_invariant_to_relabelling_unselected(seed):
    g = random_dpomdp(seed, n_u=2, n_z=2, n_o=4, L=0)
    src = PopulationSource(g.model, g.behavior_policy, 0)
    K = select_index_sets(src).k(0)
    rest = [o for o in range(4) if o not in K]
    perm = list(range(4))
    perm[rest[0]], perm[rest[1]] = rest[1], rest[0]
    m = g.model
    swapped = TabularDPOMDP(spaces=m.spaces, transition=m.transition,
                            independent_observation=np.asarray(m.independent_observation)[:, perm],
                            reward=m.reward, gamma=m.gamma, init=m.init)
    assert select_index_sets(PopulationSource(swapped, g.behavior_policy, 0)).k(0) == K


def test_uniform_behaviour_gives_uniform_action_table():
    g = random_pomdp(0, L=1)
    pi_b = BehaviorPolicy(np.full((2, 2, 2), 0.5))
    data = sample_dataset(g.model, pi_b, 1, 40_000, seed=0)
    tab = behavior_action_probs(data, 2, context="full")
    for t in range(2):
        se = np.sqrt(0.25 / tab.counts[t])
        assert np.all(np.abs(tab.probs[t] - 0.5) <= 4 * se[:, None])


def test_single_record_action_table_is_point_mass():
    rec = [ObservableRecord(z_pre=0, z=(1, 0), a=(1, 0), r=(0, 0))]
    tab = behavior_action_probs(rec, 2, min_count=1)
    np.testing.assert_array_equal(tab.probs[0], [[0.0, 1.0]])
    np.testing.assert_array_equal(tab.probs[1], [[1.0, 0.0]])


def test_figure3_first_action_marginalises_hidden_state():
    model, pi_b, _ = figure3_pomdp(1.0, 0.9)
    # P(u | z0 = 0) by Bayes from the model tables
    post = np.asarray(model.init) * np.asarray(model.observation)[:, 0]
    post /= post.sum()
    want = float(post @ np.asarray(pi_b.tables)[0, :, 0])
    cond = brute_conditional(model, pi_b, 1, target=lambda r: r["a"][0], given=lambda r: r["z"][0])
    assert cond[0][0] == pytest.approx(want, abs=1e-12)
    data = sample_dataset(model, pi_b, 1, 100_000, seed=0)
    tab = behavior_action_probs(data, 2, context="last")
    k = [i for i, key in enumerate(tab.keys[0]) if key[0] == 0][0]
    assert abs(tab.probs[0][k, 0] - want) <= 4 * np.sqrt(want * (1 - want) / tab.counts[0][k])


def test_dump_matrices_writes_json(tmp_path):
    g = random_pomdp(0, L=1)
    src = PopulationSource(g.model, g.behavior_policy, 1)
    mats = [src.matrix(d_z_given_a_zprev(1, a)) for a in range(2)]
    dump_matrices(mats, tmp_path / "m.json")
    back = json.loads((tmp_path / "m.json").read_text())
    assert [b["descriptor"] for b in back] == [m.descriptor for m in mats]
    assert set(src.requested) == {m.descriptor for m in mats}
