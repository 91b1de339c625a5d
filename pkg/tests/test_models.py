import numpy as np
import pytest

from confounded_ope import (
    BehaviorPolicy,
    GeneralPolicy,
    MemorylessPolicy,
    ObservableHistory,
    PolicyContextError,
    SpaceSpec,
    TabularDPOMDP,
    TabularPOMDP,
    embed_behavior_policy,
    embed_dpomdp_as_pomdp,
    embed_eval_policy,
    exact_value,
    figure3_pomdp,
    medical_dpomdp,
    random_dpomdp,
    validate,
)
from confounded_ope.environments import MedicalConfig
from confounded_ope.io import model_from_json, model_to_json, policy_from_json, policy_to_json
from confounded_ope.models import Trajectory, policy_action_dist, validate_dpomdp, validate_pomdp, validate_policy


def uniform_pomdp():
    sp = SpaceSpec(n_u=2, n_z=2, n_a=2, reward_values=(0.0, 1.0))
    return TabularPOMDP(
        spaces=sp,
        transition=np.full((2, 2, 2), 0.5),
        observation=np.eye(2),
        reward=np.array([[0, 1], [1, 0]]),
        gamma=0.9,
        init=np.array([0.5, 0.5]),
    )


def test_uniform_identity_model_is_valid():
    assert validate_pomdp(uniform_pomdp()).ok


def test_bad_transition_row_is_reported_with_location():
    m = uniform_pomdp()
    trans = np.array(m.transition)
    trans[1, 0] = [0.5, 0.4]
    bad = TabularPOMDP(spaces=m.spaces, transition=trans, observation=m.observation, reward=m.reward,
                       gamma=m.gamma, init=m.init)
    report = validate_pomdp(bad)
    assert not report.ok
    assert any("transition" in msg and "a=1" in msg and "u=0" in msg for msg in report)


def test_pre_observation_defaults_to_observation():
    m = uniform_pomdp()
    np.testing.assert_array_equal(m.pre_observation, m.observation)


def test_reward_outside_support_and_gamma_are_reported():
    m = uniform_pomdp()
    bad = TabularPOMDP(spaces=m.spaces, transition=m.transition, observation=m.observation,
                       reward=np.array([[0, 2], [1, 0]]), gamma=1.0, init=m.init)
    msgs = " ".join(validate_pomdp(bad))
    assert "reward" in msgs and "gamma" in msgs


def test_unsorted_reward_support_is_reported():
    sp = SpaceSpec(n_u=1, n_z=1, n_a=1, reward_values=(1.0, 0.0))
    m = TabularPOMDP(spaces=sp, transition=np.ones((1, 1, 1)), observation=np.ones((1, 1)),
                     reward=np.zeros((1, 1), dtype=int), gamma=0.5, init=np.ones(1))
    assert any("increasing" in msg for msg in validate(m))


def test_figure3_model_validates():
    model, pi_b, pi_e = figure3_pomdp(1.0, 0.9)
    assert validate(model).ok
    assert validate_policy(pi_b, model).ok and validate_policy(pi_e, model).ok


@pytest.mark.parametrize("seed", [0, 5, 17])
def test_medical_model_validates(seed):
    model, pi_b = medical_dpomdp(MedicalConfig(seed=seed, alpha=0.5))
    assert validate_dpomdp(model).ok
    assert validate_policy(pi_b, model).ok


def _tiny_dpomdp(init=None, n_o=2):
    g = random_dpomdp(0, L=1)
    m = g.model
    return TabularDPOMDP(spaces=SpaceSpec(n_u=2, n_z=2, n_a=2, n_o=n_o, reward_values=m.spaces.reward_values),
                         transition=m.transition, independent_observation=m.independent_observation,
                         reward=m.reward, gamma=m.gamma, init=m.init if init is None else init)


def test_init_joint_not_summing_to_one_is_reported():
    m = _tiny_dpomdp()
    bad = _tiny_dpomdp(init=np.asarray(m.init) * 1.1)
    assert any("init" in msg for msg in validate_dpomdp(bad))


def test_zero_independent_observations_is_reported():
    m = _tiny_dpomdp()
    bad = TabularDPOMDP(spaces=SpaceSpec(n_u=2, n_z=2, n_a=2, n_o=0, reward_values=m.spaces.reward_values),
                        transition=m.transition, independent_observation=np.zeros((2, 0)),
                        reward=m.reward, gamma=m.gamma, init=m.init)
    assert any("n_o" in msg for msg in validate_dpomdp(bad))


def test_embedding_sizes_and_indicator_structure():
    m = _tiny_dpomdp()
    e = embed_dpomdp_as_pomdp(m)
    assert (e.spaces.n_u, e.spaces.n_z) == (4, 4)
    assert validate(e).ok
    obs = np.asarray(e.observation).reshape(2, 2, 2, 2)  # [u, z, z~, o]
    for u in range(2):
        for z in range(2):
            blocks = [obs[u, z, zt].sum() for zt in range(2)]
            assert blocks[z] == pytest.approx(1.0) and blocks[1 - z] == 0.0


@pytest.mark.parametrize("seed", range(50))
def test_embedding_preserves_values(seed):
    g = random_dpomdp(seed, L=2, condition_cap=np.inf)
    e = embed_dpomdp_as_pomdp(g.model)
    for pol, emb in ((g.behavior_policy, embed_behavior_policy(g.behavior_policy)),
                     (g.eval_policy, embed_eval_policy(g.eval_policy, g.model.spaces.n_o))):
        assert abs(exact_value(e, emb, 2).v - exact_value(g.model, pol, 2).v) <= 1e-12


def test_medical_embedding_preserves_behaviour_value():
    cfg = MedicalConfig(seed=3, alpha=0.5)
    model, pi_b = medical_dpomdp(cfg)
    e = embed_dpomdp_as_pomdp(model)
    assert abs(exact_value(e, embed_behavior_policy(pi_b), cfg.L).v - exact_value(model, pi_b, cfg.L).v) <= 1e-12


def test_policy_action_dist_table_lookup_and_figure3_entry():
    _, pi_b, pi_e = figure3_pomdp(1.0, 0.9)
    h = ObservableHistory(z=(0,), a=())
    np.testing.assert_array_equal(policy_action_dist(pi_e, 0, h), pi_e.tables[0, 0])
    assert policy_action_dist(pi_e, 0, h)[0] == pytest.approx(2 / 3)
    np.testing.assert_array_equal(policy_action_dist(pi_b, 0, 1), pi_b.tables[0, 1])


def test_policy_action_dist_context_errors():
    _, pi_b, pi_e = figure3_pomdp(1.0, 0.9)
    with pytest.raises(PolicyContextError):
        policy_action_dist(pi_e, 0, 1)
    with pytest.raises(PolicyContextError):
        policy_action_dist(pi_e, 1, ObservableHistory(z=(0,), a=()))
    with pytest.raises(PolicyContextError):
        policy_action_dist(pi_b, 99, 0)


def test_general_policy_is_pure():
    pol = GeneralPolicy(lambda t, h: [0.25, 0.75] if sum(h.z) % 2 else [0.5, 0.5], horizon=3, n_a=2)
    h = ObservableHistory(z=(1, 0), a=(1,))
    np.testing.assert_array_equal(pol.dist(1, h), pol.dist(1, h))


def test_general_policy_rejects_invalid_output():
    pol = GeneralPolicy(lambda t, h: [0.5, 0.6], horizon=1, n_a=2)
    with pytest.raises(PolicyContextError):
        pol.dist(0, ObservableHistory(z=(0,), a=()))


def test_projection_keeps_non_hidden_fields_in_order():
    tr = Trajectory(z_pre=1, u=(0, 1), z=(1, 0), a=(0, 1), r=(2, 0), o=(1, 1))
    rec = tr.observable()
    assert not hasattr(rec, "u")
    assert (rec.z_pre, rec.z, rec.o, rec.a, rec.r) == (1, (1, 0), (1, 1), (0, 1), (2, 0))


def test_json_roundtrip():
    model, pi_b, pi_e = figure3_pomdp(0.6, 0.3)
    m2 = model_from_json(model_to_json(model))
    np.testing.assert_array_equal(m2.transition, model.transition)
    assert m2.spaces == model.spaces
    for p in (pi_b, pi_e):
        p2 = policy_from_json(policy_to_json(p))
        assert type(p2) is type(p)
        np.testing.assert_array_equal(p2.tables, p.tables)


def test_stationary_policies_replicate_tables():
    p = BehaviorPolicy.stationary([[0.3, 0.7], [1.0, 0.0]], 3)
    assert p.horizon == 3 and np.all(p.tables[2] == p.tables[0])
    q = MemorylessPolicy.stationary([[0.5, 0.5]], 2)
    assert q.tables.shape == (2, 1, 2)
