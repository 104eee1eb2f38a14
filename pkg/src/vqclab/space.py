"""Hyperparameter configuration space: definitions, sampling, encoding.

The trained-model space has ten dimensions (one learning rate on a log
scale, one integer circuit depth, eight categoricals). Surrogate models and
the variance analysis consume configurations as numeric feature vectors;
the encoding used throughout is log10 for the learning rate, the raw
integer for depth, and the category index for categorical dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields as dataclass_fields
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, ValidationError
from .util import fmt_float

CONTINUOUS_LOG = "continuous_log"
INTEGER_RANGE = "integer_range"
CATEGORICAL = "categorical"

FIXING_GRID_SIZE = 10  # numeric dimensions get this many fixed values


@dataclass(frozen=True)
class HyperparameterDef:
    """One dimension of a configuration space.

    kind is one of:
      - "continuous_log": positive range sampled uniformly in log10 space
      - "integer_range": inclusive integer range, uniform
      - "categorical": finite unordered list, uniform
    """

    name: str
    kind: str
    low: Optional[float] = None
    high: Optional[float] = None
    categories: Optional[tuple] = None

    def __post_init__(self):
        if self.kind == CONTINUOUS_LOG:
            if self.low is None or self.high is None or not 0 < self.low < self.high:
                raise ValidationError(
                    f"{self.name}: continuous_log requires 0 < low < high"
                )
        elif self.kind == INTEGER_RANGE:
            if self.low is None or self.high is None or int(self.low) > int(self.high):
                raise ValidationError(f"{self.name}: bad integer range")
        elif self.kind == CATEGORICAL:
            if not self.categories:
                raise ValidationError(f"{self.name}: empty category list")
            if len(set(self.categories)) != len(self.categories):
                raise ValidationError(f"{self.name}: duplicate categories")
        else:
            raise ValidationError(f"{self.name}: unknown kind {self.kind!r}")

    # -- sampling / validation ------------------------------------------------

    def sample(self, rng: np.random.Generator):
        """Draw one value; consumes exactly one rng variate."""
        if self.kind == CONTINUOUS_LOG:
            u = rng.uniform(math.log10(self.low), math.log10(self.high))
            return float(10.0**u)
        if self.kind == INTEGER_RANGE:
            return int(rng.integers(int(self.low), int(self.high) + 1))
        return self.categories[int(rng.integers(0, len(self.categories)))]

    def contains(self, value) -> bool:
        if self.kind == CONTINUOUS_LOG:
            return isinstance(value, (int, float)) and self.low <= value <= self.high
        if self.kind == INTEGER_RANGE:
            return (
                isinstance(value, (int, np.integer))
                and int(self.low) <= value <= int(self.high)
            )
        return value in self.categories

    # -- numeric encoding ------------------------------------------------------

    def encode(self, value) -> float:
        if not self.contains(value):
            raise ConfigurationError(f"{self.name}: value {value!r} outside domain")
        if self.kind == CONTINUOUS_LOG:
            return math.log10(value)
        if self.kind == INTEGER_RANGE:
            return float(value)
        return float(self.categories.index(value))

    def decode(self, encoded: float):
        if self.kind == CONTINUOUS_LOG:
            return float(10.0**encoded)
        if self.kind == INTEGER_RANGE:
            return int(round(encoded))
        return self.categories[int(round(encoded))]

    def encoded_bounds(self) -> Tuple[float, float]:
        """Encoded-space interval carrying this dimension's uniform measure.

        Integer ranges get half-open cells around each integer so interval
        arithmetic on split thresholds counts grid points consistently.
        """
        if self.kind == CONTINUOUS_LOG:
            return (math.log10(self.low), math.log10(self.high))
        if self.kind == INTEGER_RANGE:
            return (int(self.low) - 0.5, int(self.high) + 0.5)
        return (-0.5, len(self.categories) - 0.5)

    @property
    def num_categories(self) -> int:
        if self.kind != CATEGORICAL:
            raise ValidationError(f"{self.name} is not categorical")
        return len(self.categories)

    def fixing_grid(self) -> list:
        """Values a verification search may pin this dimension to.

        Categorical: every category. Integer: every integer. Continuous:
        FIXING_GRID_SIZE values spread uniformly in log10 space, endpoints
        included.
        """
        if self.kind == CATEGORICAL:
            return list(self.categories)
        if self.kind == INTEGER_RANGE:
            return list(range(int(self.low), int(self.high) + 1))
        lo, hi = math.log10(self.low), math.log10(self.high)
        return [float(10.0**u) for u in np.linspace(lo, hi, FIXING_GRID_SIZE)]

    # -- CSV text form ---------------------------------------------------------

    def value_to_str(self, value) -> str:
        if self.kind == CONTINUOUS_LOG:
            return fmt_float(value)
        if self.kind == INTEGER_RANGE:
            return str(int(value))
        if isinstance(value, bool):
            return "true" if value else "false"
        return str(value)

    def str_to_value(self, text: str):
        if self.kind == CONTINUOUS_LOG:
            return float(text)
        if self.kind == INTEGER_RANGE:
            return int(text)
        for cat in self.categories:
            if self.value_to_str(cat) == text:
                return cat
        raise ConfigurationError(f"{self.name}: unknown category text {text!r}")


class ConfigurationSpace:
    """An ordered collection of hyperparameter definitions."""

    def __init__(self, dims: Sequence[HyperparameterDef]):
        self.dims: Tuple[HyperparameterDef, ...] = tuple(dims)
        if len({d.name for d in self.dims}) != len(self.dims):
            raise ValidationError("duplicate hyperparameter names")
        self._index = {d.name: i for i, d in enumerate(self.dims)}

    @property
    def names(self) -> List[str]:
        return [d.name for d in self.dims]

    @property
    def num_dims(self) -> int:
        return len(self.dims)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ConfigurationError(f"unknown hyperparameter {name!r}") from None

    def dim(self, ref: Union[int, str]) -> HyperparameterDef:
        if isinstance(ref, str):
            return self.dims[self.index(ref)]
        return self.dims[ref]

    def sample(self, rng: np.random.Generator) -> Dict[str, Any]:
        """One uniform draw per dimension, in declaration order."""
        return {d.name: d.sample(rng) for d in self.dims}

    def sample_encoded(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Encoded sample matrix (count, num_dims), one vector draw per dimension."""
        cols = []
        for d in self.dims:
            if d.kind == CONTINUOUS_LOG:
                cols.append(rng.uniform(math.log10(d.low), math.log10(d.high), count))
            elif d.kind == INTEGER_RANGE:
                cols.append(
                    rng.integers(int(d.low), int(d.high) + 1, count).astype(float)
                )
            else:
                cols.append(rng.integers(0, len(d.categories), count).astype(float))
        return np.column_stack(cols)

    def validate(self, values: Mapping[str, Any]) -> None:
        for d in self.dims:
            if d.name not in values:
                raise ConfigurationError(f"missing hyperparameter {d.name!r}")
            if not d.contains(values[d.name]):
                raise ConfigurationError(
                    f"{d.name}: value {values[d.name]!r} outside domain"
                )

    def encode(self, values: Mapping[str, Any]) -> np.ndarray:
        return np.array([d.encode(values[d.name]) for d in self.dims], dtype=float)

    def decode(self, vec: Sequence[float]) -> Dict[str, Any]:
        return {d.name: d.decode(vec[i]) for i, d in enumerate(self.dims)}

    def fixing_grid(self, ref: Union[int, str]) -> list:
        return self.dim(ref).fixing_grid()

    def is_categorical(self, i: int) -> bool:
        return self.dims[i].kind == CATEGORICAL


def default_space() -> ConfigurationSpace:
    """The ten-dimensional space the quantum classifier campaign explores."""
    return ConfigurationSpace(
        [
            HyperparameterDef("learning_rate", CONTINUOUS_LOG, low=1e-4, high=0.5),
            HyperparameterDef("batchsize", CATEGORICAL, categories=(16, 32, 64)),
            HyperparameterDef("depth", INTEGER_RANGE, low=1, high=10),
            HyperparameterDef(
                "is_data_encoding_hardware_efficient",
                CATEGORICAL,
                categories=(True, False),
            ),
            HyperparameterDef("use_reuploading", CATEGORICAL, categories=(True, False)),
            HyperparameterDef(
                "have_less_rotations", CATEGORICAL, categories=(True, False)
            ),
            HyperparameterDef(
                "entangler_operation", CATEGORICAL, categories=("cz", "sqiswap")
            ),
            HyperparameterDef("map_type", CATEGORICAL, categories=("ring", "full", "pairs")),
            HyperparameterDef(
                "input_activation_function", CATEGORICAL, categories=("linear", "tanh")
            ),
            HyperparameterDef("output_circuit", CATEGORICAL, categories=("2Z", "mZ")),
        ]
    )


DEFAULT_SPACE = default_space()
HP_NAMES = DEFAULT_SPACE.names


@dataclass(frozen=True)
class Configuration:
    """One point in the ten-hyperparameter space."""

    learning_rate: float
    batchsize: int
    depth: int
    is_data_encoding_hardware_efficient: bool
    use_reuploading: bool
    have_less_rotations: bool
    entangler_operation: str
    map_type: str
    input_activation_function: str
    output_circuit: str

    def __post_init__(self):
        DEFAULT_SPACE.validate(self.as_dict())

    def as_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in dataclass_fields(self)}

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "Configuration":
        return cls(**{name: values[name] for name in HP_NAMES})


def sample_configuration(space: ConfigurationSpace, rng: np.random.Generator) -> Configuration:
    """Sample a full Configuration; the space must carry the standard dims."""
    return Configuration.from_dict(space.sample(rng))


def to_feature_vector(config: Configuration) -> np.ndarray:
    """Numeric encoding used by surrogate models, length 10."""
    return DEFAULT_SPACE.encode(config.as_dict())


def from_feature_vector(vec: Sequence[float]) -> Configuration:
    return Configuration.from_dict(DEFAULT_SPACE.decode(vec))


# ---------------------------------------------------------------------------
# run tables
# ---------------------------------------------------------------------------

RUNS_CSV_HEADER = HP_NAMES + ["y", "status", "run_id", "seed"]

STATUS_OK = "ok"
STATUS_FAILED = "failed"


@dataclass
class RunRow:
    """One (configuration, performance) record of a campaign."""

    run_id: int
    config: Configuration
    y: Optional[float]
    status: str
    seed: int

    def __post_init__(self):
        if self.status not in (STATUS_OK, STATUS_FAILED):
            raise ValidationError(f"unknown run status {self.status!r}")
        if self.status == STATUS_OK:
            if self.y is None or not 0.0 <= self.y <= 1.0:
                raise ValidationError(f"run {self.run_id}: y={self.y!r} outside [0, 1]")
        elif self.y is not None:
            raise ValidationError(f"failed run {self.run_id} must not carry y")


@dataclass
class RunTable:
    """All recorded runs of one dataset's campaign."""

    dataset: str
    rows: List[RunRow] = field(default_factory=list)

    def successful(self) -> List[RunRow]:
        return [r for r in self.rows if r.status == STATUS_OK]

    def encoded(self) -> Tuple[np.ndarray, np.ndarray]:
        """Feature matrix and target vector over successful rows."""
        ok = self.successful()
        X = np.array([to_feature_vector(r.config) for r in ok], dtype=float)
        y = np.array([r.y for r in ok], dtype=float)
        return X, y


def run_row_to_csv(row: RunRow) -> str:
    cells = [
        DEFAULT_SPACE.dims[i].value_to_str(getattr(row.config, name))
        for i, name in enumerate(HP_NAMES)
    ]
    cells.append("" if row.y is None else fmt_float(row.y))
    cells.append(row.status)
    cells.append(str(row.run_id))
    cells.append(str(row.seed))
    return ",".join(cells)


def run_row_from_csv(line: str) -> RunRow:
    cells = line.rstrip("\n").split(",")
    if len(cells) != len(RUNS_CSV_HEADER):
        raise ValidationError(f"run row has {len(cells)} cells, expected {len(RUNS_CSV_HEADER)}")
    values = {
        name: DEFAULT_SPACE.dims[i].str_to_value(cells[i])
        for i, name in enumerate(HP_NAMES)
    }
    y_text = cells[len(HP_NAMES)]
    return RunRow(
        run_id=int(cells[len(HP_NAMES) + 2]),
        config=Configuration.from_dict(values),
        y=None if y_text == "" else float(y_text),
        status=cells[len(HP_NAMES) + 1],
        seed=int(cells[len(HP_NAMES) + 3]),
    )
