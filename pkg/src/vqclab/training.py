"""Binary classifier training: circuit expectations, sigmoid head, Adam.

The model is the circuit's Z-product expectations fed through a single
affine neuron with a sigmoid. Circuit angle gradients use the exact shift
rule; head gradients are analytic. The loss is binary cross-entropy,
evaluated in logit form so it stays finite for any weight magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .circuits import (
    CircuitTemplate,
    CompiledCircuit,
    assemble_circuit,
    compile_template,
    forward_expectations,
    shift_rule_expectations,
    shift_rule_weighted,
)
from .errors import TrainingDiverged, ValidationError
from .space import Configuration
from .util import derive_seed

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-7

PROB_CLAMP = 1e-12


@dataclass
class ModelParameters:
    """Trainable values: circuit angles, head weights, head bias.

    Also used as the container for gradients, which share the shapes.
    """

    circuit_params: np.ndarray
    head_weights: np.ndarray
    head_bias: float

    def __post_init__(self):
        self.circuit_params = np.asarray(self.circuit_params, dtype=float)
        self.head_weights = np.asarray(self.head_weights, dtype=float)
        self.head_bias = float(self.head_bias)
        if not (
            np.all(np.isfinite(self.circuit_params))
            and np.all(np.isfinite(self.head_weights))
            and math.isfinite(self.head_bias)
        ):
            raise TrainingDiverged("non-finite model parameters")

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.circuit_params, self.head_weights, [self.head_bias]]
        )

    @classmethod
    def from_vector(cls, vec: np.ndarray, num_circuit: int, num_terms: int):
        return cls(
            circuit_params=vec[:num_circuit],
            head_weights=vec[num_circuit : num_circuit + num_terms],
            head_bias=float(vec[-1]),
        )


def init_model(template: CircuitTemplate, rng: np.random.Generator) -> ModelParameters:
    """Seeded initialization: angles uniform in [0, 2pi), head weights
    uniform in +-sqrt(6 / (fan_in + 1)), bias zero."""
    num_terms = template.observable.num_terms
    limit = math.sqrt(6.0 / (num_terms + 1))
    return ModelParameters(
        circuit_params=rng.uniform(0.0, 2.0 * math.pi, template.num_parameters),
        head_weights=rng.uniform(-limit, limit, num_terms),
        head_bias=0.0,
    )


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softplus(z):
    return np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)


def loss(p: float, y: int) -> float:
    """Binary cross-entropy on a predicted probability, clamped away from 0/1."""
    if y not in (0, 1):
        raise ValidationError(f"label must be 0 or 1, got {y!r}")
    p = min(max(float(p), PROB_CLAMP), 1.0 - PROB_CLAMP)
    return -(y * math.log(p) + (1 - y) * math.log(1.0 - p))


def forward(template: CircuitTemplate, model: ModelParameters, x) -> float:
    """Predicted probability of class 1 for one feature vector."""
    compiled = compile_template(template)
    exps = forward_expectations(compiled, np.asarray(x, float)[None, :], model.circuit_params)
    z = model.head_bias + float(exps[0] @ model.head_weights)
    return float(sigmoid(z))


def circuit_gradient(
    template: CircuitTemplate, model: ModelParameters, x, y: int
) -> ModelParameters:
    """Gradient of the single-sample loss over every model entry.

    Head entries are chained analytically (dL/dz = sigmoid(z) - y); each
    circuit angle uses the shift rule per observable term before chaining
    through the head.
    """
    if y not in (0, 1):
        raise ValidationError(f"label must be 0 or 1, got {y!r}")
    compiled = compile_template(template)
    exps, dexps = shift_rule_expectations(
        compiled, np.asarray(x, float)[None, :], model.circuit_params
    )
    z = model.head_bias + float(exps[0] @ model.head_weights)
    dz = float(sigmoid(z)) - y
    grad_theta = dz * (dexps[:, 0, :] @ model.head_weights)
    return ModelParameters(
        circuit_params=grad_theta,
        head_weights=dz * exps[0],
        head_bias=dz,
    )


def adam_update(
    theta: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step_count: int,
    lr: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One bias-corrected Adam step; step_count starts at 1."""
    if step_count < 1:
        raise ValidationError("step_count starts at 1")
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step_count)
    v_hat = v / (1.0 - beta2**step_count)
    theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta, m, v


@dataclass
class TrainingRecord:
    """Outcome of one fold's training run."""

    per_epoch_val_accuracy: List[float]
    best_val_accuracy: float
    epochs_run: int
    seed: int
    status: str = "ok"
    per_epoch_train_loss: List[float] = field(default_factory=list)
    diagnostic: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "per_epoch_val_accuracy": self.per_epoch_val_accuracy,
            "best_val_accuracy": self.best_val_accuracy,
            "epochs_run": self.epochs_run,
            "seed": self.seed,
            "status": self.status,
            "per_epoch_train_loss": self.per_epoch_train_loss,
            "diagnostic": self.diagnostic,
        }


def _check_labels(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    vals = set(np.unique(y).tolist())
    if not vals <= {0, 1}:
        raise ValidationError(f"labels must be binary 0/1, got values {sorted(vals)}")
    return y.astype(float)


def predict_proba(
    compiled: CompiledCircuit, model: ModelParameters, X: np.ndarray
) -> np.ndarray:
    exps = forward_expectations(compiled, X, model.circuit_params)
    return sigmoid(model.head_bias + exps @ model.head_weights)


def _val_accuracy(
    compiled: CompiledCircuit, model: ModelParameters, X: np.ndarray, y: np.ndarray
) -> float:
    exps = forward_expectations(compiled, X, model.circuit_params)
    z = model.head_bias + exps @ model.head_weights
    return float(np.mean((z >= 0.0).astype(float) == y))


def train_fold(
    config: Configuration,
    train: Tuple[np.ndarray, np.ndarray],
    validation: Tuple[np.ndarray, np.ndarray],
    epochs: int = 100,
    seed: int = 0,
    initial_model: Optional[ModelParameters] = None,
) -> TrainingRecord:
    """Train on one fold with mini-batch Adam and record validation accuracy.

    Every epoch reshuffles the training rows from a stream derived from the
    run seed, walks them in batches of config.batchsize (final partial batch
    kept), and ends with a full validation pass at threshold 0.5. A
    non-finite loss or parameter aborts the run; the record comes back with
    status "failed" and a diagnostic instead of raising.
    """
    X_train, y_train = train
    X_val, y_val = validation
    X_train = np.asarray(X_train, dtype=float)
    X_val = np.asarray(X_val, dtype=float)
    y_train = _check_labels(y_train)
    y_val = _check_labels(y_val)

    template = assemble_circuit(config, X_train.shape[1])
    compiled = compile_template(template)
    rng = np.random.default_rng(seed)
    model = initial_model if initial_model is not None else init_model(template, rng)

    theta = model.to_vector()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    step = 0
    P = template.num_parameters
    T = template.observable.num_terms
    n_train = X_train.shape[0]
    bs = config.batchsize

    val_accs: List[float] = []
    train_losses: List[float] = []
    try:
        for epoch in range(epochs):
            perm = np.random.default_rng(
                derive_seed(seed, "epoch", epoch)
            ).permutation(n_train)
            loss_sum = 0.0
            for start in range(0, n_train, bs):
                idx = perm[start : start + bs]
                Xb = X_train[idx]
                yb = y_train[idx]
                w = theta[P : P + T]
                b = theta[-1]
                exps, dexps_w = shift_rule_weighted(compiled, Xb, theta[:P], w)
                z = b + exps @ w
                dz = (sigmoid(z) - yb) / idx.size
                grad = np.concatenate(
                    [
                        dexps_w @ dz,
                        exps.T @ dz,
                        [dz.sum()],
                    ]
                )
                loss_sum += float(np.sum(_softplus(z) - yb * z))
                if not np.isfinite(loss_sum) or not np.all(np.isfinite(grad)):
                    raise TrainingDiverged(
                        f"non-finite loss or gradient at epoch {epoch}"
                    )
                step += 1
                theta, m, v = adam_update(theta, grad, m, v, step, config.learning_rate)
                if not np.all(np.isfinite(theta)):
                    raise TrainingDiverged(
                        f"non-finite parameters at epoch {epoch}"
                    )
            train_losses.append(loss_sum / n_train)
            model = ModelParameters.from_vector(theta, P, T)
            val_accs.append(_val_accuracy(compiled, model, X_val, y_val))
    except TrainingDiverged as exc:
        return TrainingRecord(
            per_epoch_val_accuracy=val_accs,
            best_val_accuracy=max(val_accs) if val_accs else 0.0,
            epochs_run=len(val_accs),
            seed=seed,
            status="failed",
            per_epoch_train_loss=train_losses,
            diagnostic=str(exc),
        )

    return TrainingRecord(
        per_epoch_val_accuracy=val_accs,
        best_val_accuracy=max(val_accs) if val_accs else 0.0,
        epochs_run=len(val_accs),
        seed=seed,
        status="ok",
        per_epoch_train_loss=train_losses,
    )
