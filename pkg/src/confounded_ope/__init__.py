"""Off-policy evaluation under unobserved confounding with observable proxies."""

from .environments import (
    FIGURE3_HORIZON,
    GenerationError,
    MedicalConfig,
    assumption1_env,
    figure3_pomdp,
    medical_dpomdp,
    medical_eval_policy,
    random_dpomdp,
    random_pomdp,
)
from .estimators import (
    EstimateRecord,
    check_assumption1,
    naive_is_population,
    naive_is_value,
    oracle_is_value,
    proposition1_value,
    theorem1_value,
    theorem2_value,
)
from .io import load_model, load_policy, model_from_json, model_to_json, policy_from_json, policy_to_json
from .models import (
    BehaviorPolicy,
    GeneralPolicy,
    InvalidModelError,
    MemorylessPolicy,
    ObservableHistory,
    PolicyContextError,
    SpaceSpec,
    TabularDPOMDP,
    TabularPOMDP,
    embed_behavior_policy,
    embed_dpomdp_as_pomdp,
    embed_eval_policy,
    validate,
)
from .oracle import (
    BudgetExceededError,
    composite_reward_dist,
    exact_reward_dist,
    exact_value,
    monte_carlo_value,
    verify_lemma_identities,
)
from .probtables import EmpiricalSource, IndexSets, PopulationSource, SingularMatrixError, select_index_sets
from .simulate import Dataset, eval_rollouts, sample_dataset

__version__ = "0.1.0"
