"""
Experiment Configuration Schema
pydantic models for a single training run, a weighting method and a full
seeded sweep; every file is a flat JSON document
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from dbpinn.core import ConfigurationError
from dbpinn.core.pde import PROBLEMS, get_problem
from dbpinn.core.weighting import GradStatistic, Strategy, UpdateRule, default_update_rule

RuleName = Literal["welford", "ema"]
DEFAULT_EMA_ALPHA = 0.1


class MethodSpec(BaseModel):
    """One weighting method: strategy, gradient statistic and update rule"""

    model_config = ConfigDict(extra="forbid")

    strategy: Strategy = Strategy.DB
    statistic: GradStatistic = GradStatistic.MEAN
    update_rule: Optional[RuleName] = None
    alpha: Optional[float] = None

    @field_validator("strategy", mode="before")
    @classmethod
    def _known_strategy(cls, value):
        if isinstance(value, str) and value not in {s.value for s in Strategy}:
            raise ValueError(f"unknown strategy {value!r}, expected one of {[s.value for s in Strategy]}")
        return value

    @field_validator("statistic", mode="before")
    @classmethod
    def _known_statistic(cls, value):
        if isinstance(value, str) and value not in {s.value for s in GradStatistic}:
            raise ValueError(
                f"unknown statistic {value!r}, expected one of {[s.value for s in GradStatistic]}"
            )
        return value

    @field_validator("update_rule", mode="before")
    @classmethod
    def _known_rule(cls, value):
        if value is not None and value not in ("welford", "ema"):
            raise ValueError(f"unknown update rule {value!r}, expected 'welford' or 'ema'")
        return value

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, value):
        if value is not None and not 0.0 < value <= 1.0:
            raise ValueError(f"alpha must satisfy 0 < alpha <= 1, got {value!r}")
        return value

    @model_validator(mode="after")
    def _resolve_rule(self):
        # fill in the default rule so a dumped config reparses identically
        if self.update_rule is None:
            if self.alpha is not None:
                self.update_rule = "ema"
            else:
                default = default_update_rule(self.strategy)
                self.update_rule = default.kind
                self.alpha = default.alpha
        if self.update_rule == "ema" and self.alpha is None:
            self.alpha = DEFAULT_EMA_ALPHA
        if self.update_rule == "welford" and self.alpha is not None:
            raise ValueError("alpha: only used by the ema update rule")
        if self.strategy is Strategy.DB_NO_BALANCE and self.update_rule != "welford":
            raise ValueError("update_rule: db_no_balance always uses the welford update rule")
        return self

    def rule(self) -> UpdateRule:
        if self.update_rule == "ema":
            return UpdateRule.ema(self.alpha)
        return UpdateRule.welford()

    @property
    def label(self) -> str:
        if self.strategy is Strategy.EQUAL:
            return "equal"
        label = f"{self.strategy.value}-{self.statistic.value}"
        if self.rule() != default_update_rule(self.strategy):
            label += "-welford" if self.update_rule == "welford" else f"-ema{self.alpha!r}"
        return label

    @classmethod
    def from_label(cls, label: str) -> "MethodSpec":
        """Inverse of ``label``: 'equal', 'gw-std', 'db_avg-mean', 'db-mean-ema0.5', 'gw-std-welford'"""
        parts = label.split("-")
        fields: Dict[str, Any] = {"strategy": parts[0]}
        if len(parts) > 1:
            fields["statistic"] = parts[1]
        if len(parts) > 2:
            rule = "-".join(parts[2:])
            if rule == "welford":
                fields["update_rule"] = "welford"
            elif rule.startswith("ema"):
                fields["update_rule"] = "ema"
                if rule[3:]:
                    try:
                        fields["alpha"] = float(rule[3:])
                    except ValueError:
                        raise ValueError(f"bad alpha in method {label!r}")
            else:
                raise ValueError(f"unknown update rule {rule!r} in method {label!r}")
        try:
            return cls(**fields)
        except ValidationError as e:
            raise ValueError(f"method {label!r}: {_format_error(e)}") from None


class TrainConfig(MethodSpec):
    """Everything one training run needs"""

    problem: str
    layer_sizes: List[int] = Field(default_factory=lambda: [2, 30, 30, 30, 1])
    n_collocation: int = Field(2000, gt=0)
    n_condition: int = Field(200, gt=0)
    condition_counts: Dict[str, int] = Field(default_factory=dict)
    max_train_steps: int = Field(20000, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    weight_update_stride: int = Field(1, ge=1)
    seed: int = Field(0, ge=0)
    eval_resolution: int = Field(101, ge=2)
    log_stride: int = Field(100, ge=1)
    merge_initial_conditions: bool = False

    @field_validator("problem")
    @classmethod
    def _known_problem(cls, value):
        if value not in PROBLEMS:
            raise ValueError(f"unknown problem {value!r}, expected one of {sorted(PROBLEMS)}")
        return value

    @field_validator("condition_counts")
    @classmethod
    def _positive_counts(cls, value):
        for label, n in value.items():
            if n <= 0:
                raise ValueError(f"count for {label!r} must be positive, got {n}")
        return value

    @model_validator(mode="after")
    def _fits_problem(self):
        problem = get_problem(self.problem, self.merge_initial_conditions)
        sizes = self.layer_sizes
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError(f"layer_sizes: must be at least two positive sizes, got {sizes}")
        if sizes[0] != problem.input_dim or sizes[-1] != 1:
            raise ValueError(
                f"layer_sizes: must start with {problem.input_dim} inputs and end with 1 output, got {sizes}"
            )
        unknown = sorted(set(self.condition_counts) - set(problem.condition_labels))
        if unknown:
            raise ValueError(
                f"condition_counts: unknown conditions {unknown}, "
                f"expected some of {list(problem.condition_labels)}"
            )
        return self

    @property
    def method(self) -> MethodSpec:
        return MethodSpec(
            strategy=self.strategy,
            statistic=self.statistic,
            update_rule=self.update_rule,
            alpha=self.alpha,
        )

    def with_method(self, method: MethodSpec, seed: int) -> "TrainConfig":
        data = self.model_dump(include=set(TrainConfig.model_fields))
        data.update(method.model_dump(), seed=seed)
        return TrainConfig(**data)


class ExperimentConfig(TrainConfig):
    """
    A seeded sweep. The TrainConfig keys form the run template; ``methods``
    lists the weighting methods to sweep (the template's own method when
    empty) and ``seeds`` or ``base_seed`` replace the single-run ``seed``,
    which is rejected here and left out of the echo.
    """

    seeds: Optional[List[int]] = None
    base_seed: int = Field(0, ge=0)
    repeats: int = Field(1, ge=1)
    output_dir: str = "runs"
    workers: int = Field(1, ge=1)
    methods: List[MethodSpec] = Field(default_factory=list)

    @field_validator("methods", mode="before")
    @classmethod
    def _expand_shorthand(cls, value):
        if not isinstance(value, list):
            return value
        return [MethodSpec.from_label(m) if isinstance(m, str) else m for m in value]

    @model_validator(mode="after")
    def _resolve_sweep(self):
        if "seed" in self.model_fields_set:
            raise ValueError("seed: a sweep takes seeds or base_seed")
        if self.seeds is None:
            self.seeds = [self.base_seed + k for k in range(self.repeats)]
        if not self.seeds:
            raise ValueError("seeds: must not be empty")
        if any(s < 0 for s in self.seeds):
            raise ValueError(f"seeds: must be nonnegative, got {self.seeds}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"seeds: must be distinct, got {self.seeds}")
        if not self.methods:
            self.methods = [self.method]
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ValueError(f"methods: must be distinct, got {labels}")
        return self

    def runs(self) -> List[Tuple[MethodSpec, int, TrainConfig]]:
        """Every (method, seed) cell in sweep order"""
        return [(m, s, self.with_method(m, s)) for m in self.methods for s in self.seeds]


def _format_error(error: ValidationError) -> str:
    first = error.errors()[0]
    loc = ".".join(str(part) for part in first["loc"])
    message = first["msg"]
    if message.startswith("Value error, "):
        message = message[len("Value error, "):]
    return f"{loc}: {message}" if loc else message


def load_config(data: Dict[str, Any], model=ExperimentConfig):
    """Validate a mapping, reporting the first problem as a ConfigurationError"""
    if not isinstance(data, dict):
        raise ConfigurationError(f"config: expected a JSON object, got {type(data).__name__}")
    try:
        return model(**data)
    except ValidationError as e:
        raise ConfigurationError(_format_error(e)) from None


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"config: cannot read {path}: {e.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config: malformed JSON in {path} (line {e.lineno}): {e.msg}") from None
    return load_config(data)


def serialize_config(config: BaseModel) -> str:
    """Full JSON echo with every default filled in"""
    exclude = {"seed"} if isinstance(config, ExperimentConfig) else None
    return json.dumps(config.model_dump(mode="json", exclude=exclude), indent=2) + "\n"


__all__ = [
    "MethodSpec",
    "TrainConfig",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "serialize_config",
]
