"""Experiment configuration for the ``hedge`` command line.

One JSON file holds every section a command may need; sections a command does
not use are ignored but still validated, and unknown keys are rejected.
"""

from __future__ import annotations

import json
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .actor_critic import TrainConfig
from .dynamics import CostConfig
from .market_sim import GeneratorConfig
from .mdp import MDPConfig
from .utility import UtilityConfig

U64_MAX = 2**64 - 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DatasetSource(_Strict):
    """Where ``train`` and ``evaluate`` read their data from.

    ``generator``: synthetic market history; ``mdp``: transitions of the
    tabular MDP (enumerated for training, one sampled path for evaluation);
    ``directory``: a dataset previously written by ``generate``.
    """

    source: Literal["generator", "mdp", "directory"] = "generator"
    path: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if self.source == "directory" and not self.path:
            raise ValueError("dataset.path is required when dataset.source is 'directory'")
        return self


class SolverConfig(_Strict):
    tol: float = Field(1e-8, gt=0.0)
    max_iter: Optional[int] = Field(None, ge=1)
    operator: Literal["T", "T_alt", "T_tilde"] = "T"
    random_starts: int = Field(1, ge=0)
    axiom_trials: int = Field(200, ge=0)


class EvaluationConfig(_Strict):
    model: Optional[str] = None  # TrainedModel JSON; defaults to <out>/model.json
    episodes: int = Field(50, ge=1)
    episode_length: int = Field(50, ge=1)
    holdout_seed: Optional[int] = Field(None, ge=0, le=U64_MAX)


class CompareConfig(_Strict):
    utilities: list[UtilityConfig] = [UtilityConfig(kind="expectation"), UtilityConfig(kind="entropy", lam=1.0), UtilityConfig(kind="cvar", lam=1.0)]
    eps: float = Field(1e-4, gt=0.0)
    horizon: Optional[int] = Field(None, ge=1)  # default: truncation horizon for eps
    enumerate_horizon: int = Field(2, ge=0)  # literal policy enumeration depth, 0 disables
    agree_tol: float = Field(1e-6, gt=0.0)


class ExperimentConfig(_Strict):
    seed: int = Field(0, ge=0, le=U64_MAX)
    out: Optional[str] = None
    generator: GeneratorConfig = GeneratorConfig()
    mdp: MDPConfig = MDPConfig()
    utility: UtilityConfig = UtilityConfig()
    cost: Optional[CostConfig] = None  # overrides training.cost when given
    solver: SolverConfig = SolverConfig()
    dataset: DatasetSource = DatasetSource()
    training: TrainConfig = TrainConfig()
    evaluation: EvaluationConfig = EvaluationConfig()
    compare: CompareConfig = CompareConfig()

    def with_seed(self, seed):
        return self.model_copy(update={"seed": seed}) if seed is not None else self

    def train_config(self) -> TrainConfig:
        """Training section with the global seed, utility and cost filled in."""
        upd = {"seed": self.seed, "utility": self.utility}
        if self.cost is not None:
            upd["cost"] = self.cost
        return TrainConfig.model_validate({**self.training.model_dump(), **{k: (v.model_dump() if isinstance(v, BaseModel) else v) for k, v in upd.items()}})


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON config file.

    ``OSError`` for unreadable files; ``ValueError`` (including pydantic's
    ``ValidationError``) for malformed JSON or schema violations.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: the config must be a JSON object")
    return ExperimentConfig.model_validate(raw)
