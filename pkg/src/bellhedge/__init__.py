"""Risk-averse Bellman hedging of derivative books under OCE monetary utilities."""

from .kernels import BACKEND, available_backends
from .utility import FAMILIES, UtilityFamily, EmpiricalDistribution, oce_value, entropy_closed_form, check_axioms
from .market_sim import GeneratorConfig, generate_history, save_dataset, load_dataset
from .mdp import MDPConfig, HedgingMDP, build_mdp, calendar_expand, mdp_dataset
from .bellman import apply_T, apply_T_tilde, T_alt, apply_T_multi, value_iterate, verify_cashflow_equivalence
from .actor_critic import TrainConfig, TrainedModel, train, evaluate

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "available_backends",
    "FAMILIES",
    "UtilityFamily",
    "EmpiricalDistribution",
    "oce_value",
    "entropy_closed_form",
    "check_axioms",
    "GeneratorConfig",
    "generate_history",
    "save_dataset",
    "load_dataset",
    "MDPConfig",
    "HedgingMDP",
    "build_mdp",
    "calendar_expand",
    "mdp_dataset",
    "apply_T",
    "apply_T_tilde",
    "T_alt",
    "apply_T_multi",
    "value_iterate",
    "verify_cashflow_equivalence",
    "TrainConfig",
    "TrainedModel",
    "train",
    "evaluate",
]
