"""Circuit templates: assembly from a configuration, execution, gradients.

A template is an ordered program of gate slots. Fixed gates carry their
unitary; input slots consume one data feature as an RX angle; parameter
slots consume one trainable angle; an IQP slot consumes the whole feature
vector as a diagonal phase layer. Templates are immutable after assembly
and execution is batched: a whole set of input rows flows through every
gate in one numpy call.

Gradients use the angle shift rule: the derivative of a Z-product
expectation with respect to a rotation angle equals half the difference of
the expectations with that one angle shifted by +pi/2 and -pi/2. The
executor evaluates the shifted-circuit expectations without rerunning full
circuits: commuting rotation layers are fused into one unitary, a shifted
run then equals a fixed +-pi/2 rotation applied to the cached layer-exit
state, and the remaining suffix of the circuit is folded into the
observable (Heisenberg picture) once per layer instead of once per
parameter. Every value produced is exactly the shifted-circuit expectation
up to float roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, ValidationError
from .space import Configuration
from .statevector import (
    GateSpec,
    ObservableSpec,
    StateVector,
    apply_2q,
    gate_matrix,
    observable_for,
    observable_signs,
    rotation_matrix,
    z_eigenvalues,
)

HALF_PI = math.pi / 2.0

MAP_TYPES = ("ring", "full", "pairs")
ACTIVATIONS = ("linear", "tanh")

AXIS_CODES = {"RX": 0, "RY": 1, "RZ": 2}
AXIS_NAMES = {v: k for k, v in AXIS_CODES.items()}

# fixed +-pi/2 rotations per axis, used to realize shifted angles
_SHIFT_PLUS = tuple(rotation_matrix(a, HALF_PI) for a in ("RX", "RY", "RZ"))
_SHIFT_MINUS = tuple(rotation_matrix(a, -HALF_PI) for a in ("RX", "RY", "RZ"))

_I2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class EntanglingMap:
    """Ordered qubit pairs receiving two-qubit gates."""

    map_type: str
    pairs: tuple


def build_entangling_map(map_type: str, n: int) -> EntanglingMap:
    """Pair list for a connectivity type over n qubits.

    ring: (i, i+1 mod n) in index order, collapsing to the single pair (0, 1)
    on two qubits. full: every (i, j) with i < j, lexicographic. pairs: even
    starts (0,1), (2,3), ... then odd starts (1,2), (3,4), ...; no wraparound.
    """
    if n < 2:
        raise ValidationError(f"entangling map needs at least 2 qubits, got {n}")
    if map_type == "ring":
        if n == 2:
            pairs = ((0, 1),)
        else:
            pairs = tuple((i, (i + 1) % n) for i in range(n))
    elif map_type == "full":
        pairs = tuple((i, j) for i in range(n) for j in range(i + 1, n))
    elif map_type == "pairs":
        even = tuple((i, i + 1) for i in range(0, n - 1, 2))
        odd = tuple((i, i + 1) for i in range(1, n - 1, 2))
        pairs = even + odd
    else:
        raise ConfigurationError(f"unknown map_type {map_type!r}")
    return EntanglingMap(map_type=map_type, pairs=pairs)


# --- template ops -----------------------------------------------------------


@dataclass(frozen=True)
class FixedGate:
    gate: GateSpec


@dataclass(frozen=True)
class InputSlot:
    """RX rotation whose angle is (activated) feature ``feature_index``."""

    feature_index: int
    qubit: int
    activation: str


@dataclass(frozen=True)
class ParamSlot:
    """Single-qubit rotation whose angle is trainable parameter ``param_index``."""

    param_index: int
    axis: str
    qubit: int


@dataclass(frozen=True)
class IqpSlot:
    """Diagonal phase layer encoding the full feature vector.

    Realized as the basis-diagonal unitary with phase
    exp(-i*pi*[sum_i a_i z_i + sum_{i<j} a_i a_j z_i z_j]) per basis state,
    where z_i is the Z eigenvalue (+1/-1) of bit i and a = activation(x).
    """

    activation: str


TemplateOp = Union[FixedGate, InputSlot, ParamSlot, IqpSlot]


@dataclass(frozen=True)
class CircuitTemplate:
    num_qubits: int
    ops: tuple
    num_parameters: int
    observable: ObservableSpec

    def __post_init__(self):
        seen = sorted(op.param_index for op in self.ops if isinstance(op, ParamSlot))
        if seen != list(range(self.num_parameters)):
            raise ValidationError("parameter indices must be 0..P-1, each used once")


def _activate(x: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(x)
    if activation == "linear":
        return x
    raise ConfigurationError(f"unknown activation {activation!r}")


def build_encoding_block(config: Configuration, n: int) -> tuple:
    """The data-encoding ops for one block.

    Hardware-efficient mode: one RX input slot per qubit, feature i on
    qubit i. IQP mode: H on every qubit followed by one diagonal phase slot
    over the whole register.
    """
    act = config.input_activation_function
    if act not in ACTIVATIONS:
        raise ConfigurationError(f"unknown activation {act!r}")
    if config.is_data_encoding_hardware_efficient:
        return tuple(InputSlot(i, i, act) for i in range(n))
    hadamards = tuple(FixedGate(GateSpec("H", (q,))) for q in range(n))
    return hadamards + (IqpSlot(act),)


def assemble_circuit(config: Configuration, n: int) -> CircuitTemplate:
    """Deterministically build the full template for a configuration.

    Layout: one encoding block up front (or one per layer under
    reuploading), then per layer the entangling gates over the configured
    map followed by per-axis rotation layers (RX layer only when
    have_less_rotations is false, then RY, then RZ; qubit order within each
    axis layer).
    """
    if n < 2:
        raise ValidationError(f"circuits need at least 2 qubits, got {n}")
    encoding = build_encoding_block(config, n)
    emap = build_entangling_map(config.map_type, n)
    if config.entangler_operation == "cz":
        ent_kind = "CZ"
    elif config.entangler_operation == "sqiswap":
        ent_kind = "SQISWAP"
    else:
        raise ConfigurationError(
            f"unknown entangler_operation {config.entangler_operation!r}"
        )
    axes = ("RY", "RZ") if config.have_less_rotations else ("RX", "RY", "RZ")

    ops: List[TemplateOp] = []
    if not config.use_reuploading:
        ops.extend(encoding)
    p = 0
    for _ in range(config.depth):
        if config.use_reuploading:
            ops.extend(encoding)
        for i, j in emap.pairs:
            ops.append(FixedGate(GateSpec(ent_kind, (i, j))))
        for axis in axes:
            for q in range(n):
                ops.append(ParamSlot(p, axis, q))
                p += 1

    if config.output_circuit == "2Z":
        observable = observable_for("PAIRS_ZZ", n)
    elif config.output_circuit == "mZ":
        observable = observable_for("ALL_Z", n)
    else:
        raise ConfigurationError(f"unknown output_circuit {config.output_circuit!r}")
    return CircuitTemplate(
        num_qubits=n, ops=tuple(ops), num_parameters=p, observable=observable
    )


def template_to_dict(template: CircuitTemplate) -> dict:
    """JSON-ready debug dump of the op list with slot annotations."""
    ops = []
    for op in template.ops:
        if isinstance(op, FixedGate):
            ops.append(
                {"type": "gate", "kind": op.gate.kind, "targets": list(op.gate.targets)}
            )
        elif isinstance(op, InputSlot):
            ops.append(
                {
                    "type": "input",
                    "feature": op.feature_index,
                    "qubit": op.qubit,
                    "activation": op.activation,
                }
            )
        elif isinstance(op, ParamSlot):
            ops.append(
                {
                    "type": "parameter",
                    "index": op.param_index,
                    "axis": op.axis,
                    "qubit": op.qubit,
                }
            )
        else:
            ops.append({"type": "iqp_encoding", "activation": op.activation})
    return {
        "num_qubits": template.num_qubits,
        "num_parameters": template.num_parameters,
        "observable": {
            "mode": template.observable.mode,
            "terms": [list(t) for t in template.observable.terms],
        },
        "ops": ops,
    }


# --- compilation ------------------------------------------------------------
#
# The executor works on "macro" steps. Runs of fixed gates fuse into one
# constant unitary (kept as a plain diagonal while possible, CZ layers never
# leave diagonal form). Runs of parameter slots with one axis and fresh
# qubits form a rotation layer whose fused matrix is rebuilt from the
# current angles at run time; any fixed gates directly before the layer fold
# into it for free.


@dataclass
class _SharedMat:
    mat: np.ndarray  # (dim, dim)


@dataclass
class _ConstDiag:
    diag: np.ndarray  # (dim,)


@dataclass
class _SampleDiag:
    pass  # IQP phases, built per batch


@dataclass
class _SampleRxBlock:
    """A run of per-sample RX input rotations on distinct qubits."""

    qubits: tuple
    features: tuple


@dataclass
class _ParamLayer:
    index: int  # layer number, for run-time caches
    axis_code: int
    params: np.ndarray  # (k,)
    qubits: np.ndarray  # (k,)
    pre_diag: Optional[np.ndarray] = None  # folded constant before the rotations
    pre_mat: Optional[np.ndarray] = None


@dataclass
class CompiledCircuit:
    """Fused gate program plus cached observable sign matrix."""

    num_qubits: int
    dim: int
    macros: list
    num_parameters: int
    num_layers: int
    param_axes: np.ndarray  # (P,) axis codes
    signs: np.ndarray  # (dim, num_terms)
    activation: Optional[str]
    enc_features: tuple
    has_iqp: bool


def _expand_1q(mat: np.ndarray, q: int, n: int) -> np.ndarray:
    return np.kron(
        np.eye(1 << q, dtype=complex),
        np.kron(mat, np.eye(1 << (n - 1 - q), dtype=complex)),
    )


def _expand_2q(mat4: np.ndarray, q1: int, q2: int, n: int) -> np.ndarray:
    # rows of the identity are basis states; the kernel acts on the last axis
    return apply_2q(np.eye(1 << n, dtype=complex), mat4, q1, q2, n).T


def _cz_diag_vec(q1: int, q2: int, n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    b1 = (idx >> (n - 1 - q1)) & 1
    b2 = (idx >> (n - 1 - q2)) & 1
    return np.where((b1 & b2) == 1, -1.0 + 0j, 1.0 + 0j)


def compile_template(template: CircuitTemplate) -> CompiledCircuit:
    n = template.num_qubits
    dim = 1 << n
    macros: list = []
    param_axes = np.zeros(template.num_parameters, dtype=np.int64)
    activation = None
    enc_features: List[int] = []
    has_iqp = False

    pending_diag: Optional[np.ndarray] = None
    pending_mat: Optional[np.ndarray] = None

    def fold_fixed(new_diag=None, new_mat=None):
        nonlocal pending_diag, pending_mat
        if new_diag is not None:
            if pending_mat is not None:
                pending_mat = new_diag[:, None] * pending_mat
            elif pending_diag is not None:
                pending_diag = pending_diag * new_diag
            else:
                pending_diag = new_diag
        else:
            if pending_mat is not None:
                pending_mat = new_mat @ pending_mat
            elif pending_diag is not None:
                pending_mat = new_mat * pending_diag[None, :]
                pending_diag = None
            else:
                pending_mat = new_mat

    def flush_fixed():
        nonlocal pending_diag, pending_mat
        if pending_mat is not None:
            macros.append(_SharedMat(pending_mat))
        elif pending_diag is not None:
            macros.append(_ConstDiag(pending_diag))
        pending_diag = None
        pending_mat = None

    layer_count = 0
    i = 0
    ops = template.ops
    while i < len(ops):
        op = ops[i]
        if isinstance(op, FixedGate):
            kind = op.gate.kind
            if kind == "CZ":
                fold_fixed(new_diag=_cz_diag_vec(*op.gate.targets, n))
            elif kind == "SQISWAP":
                fold_fixed(new_mat=_expand_2q(gate_matrix("SQISWAP"), *op.gate.targets, n))
            else:
                fold_fixed(new_mat=_expand_1q(op.gate.matrix(), op.gate.targets[0], n))
            i += 1
        elif isinstance(op, InputSlot):
            flush_fixed()
            activation = op.activation
            qubits: List[int] = []
            feats: List[int] = []
            while (
                i < len(ops)
                and isinstance(ops[i], InputSlot)
                and ops[i].qubit not in qubits
            ):
                qubits.append(ops[i].qubit)
                feats.append(ops[i].feature_index)
                if ops[i].feature_index not in enc_features:
                    enc_features.append(ops[i].feature_index)
                i += 1
            macros.append(_SampleRxBlock(tuple(qubits), tuple(feats)))
        elif isinstance(op, IqpSlot):
            flush_fixed()
            activation = op.activation
            has_iqp = True
            macros.append(_SampleDiag())
            i += 1
        else:
            # maximal run of slots sharing one axis on fresh qubits; these
            # commute, which the shifted-state evaluation relies on
            axis = op.axis
            params: List[int] = []
            qubits: List[int] = []
            while (
                i < len(ops)
                and isinstance(ops[i], ParamSlot)
                and ops[i].axis == axis
                and ops[i].qubit not in qubits
            ):
                params.append(ops[i].param_index)
                qubits.append(ops[i].qubit)
                param_axes[ops[i].param_index] = AXIS_CODES[axis]
                i += 1
            macros.append(
                _ParamLayer(
                    index=layer_count,
                    axis_code=AXIS_CODES[axis],
                    params=np.array(params, dtype=np.int64),
                    qubits=np.array(qubits, dtype=np.int64),
                    pre_diag=pending_diag,
                    pre_mat=pending_mat,
                )
            )
            pending_diag = None
            pending_mat = None
            layer_count += 1
    flush_fixed()

    return CompiledCircuit(
        num_qubits=n,
        dim=dim,
        macros=macros,
        num_parameters=template.num_parameters,
        num_layers=layer_count,
        param_axes=param_axes,
        signs=observable_signs(n, template.observable),
        activation=activation,
        enc_features=tuple(enc_features),
        has_iqp=has_iqp,
    )


def rotation_matrices(axis_codes: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Stack of 2x2 rotation unitaries, shape (len(angles), 2, 2)."""
    half = np.asarray(angles, dtype=float) / 2.0
    c = np.cos(half)
    s = np.sin(half)
    out = np.zeros(half.shape + (2, 2), dtype=complex)
    rx = axis_codes == 0
    ry = axis_codes == 1
    rz = axis_codes == 2
    out[rx, 0, 0] = c[rx]
    out[rx, 1, 1] = c[rx]
    out[rx, 0, 1] = -1j * s[rx]
    out[rx, 1, 0] = -1j * s[rx]
    out[ry, 0, 0] = c[ry]
    out[ry, 1, 1] = c[ry]
    out[ry, 0, 1] = -s[ry]
    out[ry, 1, 0] = s[ry]
    out[rz, 0, 0] = c[rz] - 1j * s[rz]
    out[rz, 1, 1] = c[rz] + 1j * s[rz]
    return out


def iqp_phases(X: np.ndarray, activation: str, n: int) -> np.ndarray:
    """Per-sample diagonal phases for the IQP encoding, shape (B, 2**n)."""
    A = _activate(np.asarray(X, dtype=float), activation)
    Z = z_eigenvalues(n)  # (dim, n)
    lin = A @ Z.T  # (B, dim)
    quad = (lin * lin - (A * A).sum(axis=1)[:, None]) / 2.0
    return np.exp(-1j * math.pi * (lin + quad))


class _RunContext:
    """Per-(batch, params) artifacts shared by forward and gradient passes."""

    def __init__(self, compiled: CompiledCircuit, X: np.ndarray, params: np.ndarray):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != compiled.num_qubits:
            raise ValidationError(
                f"feature width {X.shape[1]} does not match "
                f"{compiled.num_qubits} qubits"
            )
        params = np.asarray(params, dtype=float)
        if params.shape != (compiled.num_parameters,):
            raise ValidationError(
                f"parameter vector length {params.shape} does not match "
                f"{compiled.num_parameters}"
            )
        self.X = X
        self.B = X.shape[0]
        self.params = params
        self.rot = rotation_matrices(compiled.param_axes, params)
        self.enc: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        if compiled.enc_features:
            for feat in compiled.enc_features:
                half = _activate(X[:, feat], compiled.activation) / 2.0
                self.enc[feat] = (np.cos(half), np.sin(half))
        self.iqp = (
            iqp_phases(X, compiled.activation, compiled.num_qubits)
            if compiled.has_iqp
            else None
        )
        self._block_mats: Dict[tuple, Tuple[np.ndarray, np.ndarray]] = {}

    def block_matrices(self, macro: "_SampleRxBlock", n: int):
        """Per-sample full unitary of an input block and its adjoint."""
        key = (macro.qubits, macro.features)
        cached = self._block_mats.get(key)
        if cached is not None:
            return cached
        by_qubit = dict(zip(macro.qubits, macro.features))
        M = np.ones((self.B, 1, 1), dtype=complex)
        for q in range(n):
            if q in by_qubit:
                c, s = self.enc[by_qubit[q]]
                m = np.empty((self.B, 2, 2), dtype=complex)
                m[:, 0, 0] = c
                m[:, 1, 1] = c
                m[:, 0, 1] = -1j * s
                m[:, 1, 0] = -1j * s
            else:
                m = np.broadcast_to(_I2, (self.B, 2, 2))
            d = M.shape[1]
            M = (M[:, :, None, :, None] * m[:, None, :, None, :]).reshape(
                self.B, d * 2, d * 2
            )
        pair = (M, np.conj(M.transpose(0, 2, 1)))
        self._block_mats[key] = pair
        return pair


def _apply_rx_sample(state, cos_half, sin_half, q, n):
    """Per-sample RX on one qubit via broadcast arithmetic.

    state: (..., B, dim); cos_half/sin_half: (B,).
    """
    dim = state.shape[-1]
    pre = 1 << q
    post = dim >> (q + 1)
    r = state.reshape(state.shape[:-1] + (pre, 2, post))
    c = cos_half[:, None, None]
    s = sin_half[:, None, None]
    v0 = r[..., 0, :]
    v1 = r[..., 1, :]
    out = np.empty_like(r)
    out[..., 0, :] = c * v0 - 1j * (s * v1)
    out[..., 1, :] = -1j * (s * v0) + c * v1
    return out.reshape(state.shape)


def _kron_chain(factors) -> np.ndarray:
    """Kronecker product of 2x2 factors, first factor most significant."""
    M = factors[0]
    for m in factors[1:]:
        d = M.shape[0]
        M = (M[:, None, :, None] * m[None, :, None, :]).reshape(2 * d, 2 * d)
    return M


def _layer_matrix(compiled: CompiledCircuit, macro: _ParamLayer, rot: np.ndarray):
    """Fused unitary of one rotation layer including folded fixed gates."""
    by_qubit = {int(q): int(p) for q, p in zip(macro.qubits, macro.params)}
    M = _kron_chain(
        [
            rot[by_qubit[q]] if q in by_qubit else _I2
            for q in range(compiled.num_qubits)
        ]
    )
    if macro.pre_diag is not None:
        M = M * macro.pre_diag[None, :]
    if macro.pre_mat is not None:
        M = M @ macro.pre_mat
    return M


def _forward(compiled: CompiledCircuit, ctx: _RunContext, keep_layers: bool):
    """State sweep; optionally cache layer matrices and layer-exit states."""
    n = compiled.num_qubits
    state = np.zeros((ctx.B, compiled.dim), dtype=complex)
    state[:, 0] = 1.0
    layer_mats: List[Optional[np.ndarray]] = [None] * compiled.num_layers
    layer_states: List[Optional[np.ndarray]] = [None] * compiled.num_layers
    for macro in compiled.macros:
        if isinstance(macro, _ParamLayer):
            F = _layer_matrix(compiled, macro, ctx.rot)
            state = state @ F.T
            if keep_layers:
                layer_mats[macro.index] = F
                layer_states[macro.index] = state
        elif isinstance(macro, _ConstDiag):
            state = state * macro.diag
        elif isinstance(macro, _SampleDiag):
            state = state * ctx.iqp
        elif isinstance(macro, _SampleRxBlock):
            for q, feat in zip(macro.qubits, macro.features):
                c, s = ctx.enc[feat]
                state = _apply_rx_sample(state, c, s, q, n)
        else:
            state = state @ macro.mat.T
    return state, layer_mats, layer_states


def run_batch(compiled: CompiledCircuit, X, params) -> np.ndarray:
    """Execute the program on a batch of feature rows; returns (B, dim) amplitudes."""
    ctx = _RunContext(compiled, X, params)
    state, _, _ = _forward(compiled, ctx, keep_layers=False)
    return state


def expectations_from_amplitudes(amps: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Z-product expectations for every state: (..., dim) -> (..., num_terms)."""
    probs = amps.real * amps.real + amps.imag * amps.imag
    return probs @ signs


def forward_expectations(compiled: CompiledCircuit, X, params) -> np.ndarray:
    """Observable expectations per input row, shape (B, num_terms)."""
    return expectations_from_amplitudes(run_batch(compiled, X, params), compiled.signs)


# --- suffix-folded observable ------------------------------------------------
#
# The backward sweep keeps A = V_dagger O V for the remaining circuit suffix
# V, in the cheapest faithful representation: a stack of diagonals while the
# suffix is diagonal, one shared matrix stack after mixing gates, and a
# per-sample stack only once a data-dependent gate enters the suffix.

_A_DIAG = 0
_A_SHARED = 1
_A_SAMPLE = 2


def _diag_to_shared(A: np.ndarray, dim: int) -> np.ndarray:
    """Embed a (T, dim) diagonal stack as full (T, dim, dim) matrices."""
    return A[:, :, None].astype(complex) * np.eye(dim)


def _conjugate_shared(A, M):
    """M_dagger A M for one shared matrix M; A is a (..., dim, dim) stack."""
    dim = M.shape[0]
    G = np.matmul(A.reshape(-1, dim), M).reshape(A.shape)
    return np.matmul(np.conj(M.T), G)


def _quad_form(kind, A, chi: np.ndarray) -> np.ndarray:
    """<chi| A |chi> per state; chi (..., B, dim) -> (..., B, T) real."""
    if kind == _A_DIAG:
        probs = chi.real * chi.real + chi.imag * chi.imag
        return probs @ A.T
    if kind == _A_SHARED:
        # Y[..., b, t, i] = sum_j A[t, i, j] chi[..., b, j]
        Y = np.tensordot(chi, A, axes=([chi.ndim - 1], [2]))
        return (np.conj(chi)[..., None, :] * Y).sum(axis=-1).real
    # per-sample: A (B, T, dim, dim)
    Y = np.matmul(A, chi[..., None, :, None])[..., 0]  # (..., B, T, dim)
    return (np.conj(chi)[..., None, :] * Y).sum(axis=-1).real


def shift_rule_expectations(
    compiled: CompiledCircuit, X, params
) -> Tuple[np.ndarray, np.ndarray]:
    """Expectations and their angle gradients via the +-pi/2 shift rule.

    Returns (exps, dexps) with shapes (B, T) and (P, B, T). dexps[p] equals
    (exps at params[p] + pi/2 minus exps at params[p] - pi/2) / 2, each side
    being the expectation of the circuit with only that angle shifted.
    """
    return _shift_rule(compiled, X, params, compiled.signs)


def shift_rule_weighted(
    compiled: CompiledCircuit, X, params, weights: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Like shift_rule_expectations but gradients of sum_t w_t <O_t>.

    Returns (exps (B, T), dexps_w (P, B)); the weighted observable is one
    diagonal, which keeps the suffix stack small during training.
    """
    weighted = compiled.signs @ np.asarray(weights, dtype=float)
    exps, dexps = _shift_rule(compiled, X, params, weighted[:, None], full_exps=True)
    return exps, dexps[:, :, 0]


def _shift_rule(compiled, X, params, sign_matrix, full_exps: bool = False):
    ctx = _RunContext(compiled, X, params)
    n = compiled.num_qubits
    dim = compiled.dim
    B = ctx.B
    T = sign_matrix.shape[1]
    P = compiled.num_parameters

    state, layer_mats, layer_states = _forward(compiled, ctx, keep_layers=True)
    exps = expectations_from_amplitudes(
        state, compiled.signs if full_exps else sign_matrix
    )
    dexps = np.zeros((P, B, T))
    if P == 0:
        return exps, dexps

    kind = _A_DIAG
    A = np.ascontiguousarray(sign_matrix.T, dtype=float)  # (T, dim)

    for macro in reversed(compiled.macros):
        if isinstance(macro, _ParamLayer):
            F = layer_mats[macro.index]
            phi = layer_states[macro.index]
            plus = _SHIFT_PLUS[macro.axis_code]
            minus = _SHIFT_MINUS[macro.axis_code]
            chis = np.empty((len(macro.qubits), 2, B, dim), dtype=complex)
            for j, q in enumerate(macro.qubits):
                chis[j, 0] = _apply_const_1q(phi, plus, q, dim)
                chis[j, 1] = _apply_const_1q(phi, minus, q, dim)
            vals = _quad_form(kind, A, chis)  # (k, 2, B, T)
            dexps[macro.params] = (vals[:, 0] - vals[:, 1]) / 2.0
            # fold the layer into the suffix observable
            if kind == _A_DIAG:
                A = _diag_to_shared(A, dim)
                kind = _A_SHARED
            A = _conjugate_shared(A, F)
        elif isinstance(macro, _ConstDiag):
            if kind != _A_DIAG:
                d = macro.diag
                A = np.conj(d)[:, None] * A * d[None, :]
        elif isinstance(macro, _SampleDiag):
            if kind != _A_DIAG:
                ph = ctx.iqp  # (B, dim)
                if kind == _A_SHARED:
                    A = A[None, :, :, :]
                A = np.conj(ph)[:, None, :, None] * A * ph[:, None, None, :]
                kind = _A_SAMPLE
        elif isinstance(macro, _SampleRxBlock):
            if kind == _A_DIAG:
                A = _diag_to_shared(A, dim)
                kind = _A_SHARED
            E, Edag = ctx.block_matrices(macro, n)
            if kind == _A_SHARED:
                A = A[None, :, :, :]
            A = np.matmul(Edag[:, None], np.matmul(A, E[:, None]))
            kind = _A_SAMPLE
        else:
            if kind != _A_DIAG:
                A = _conjugate_shared(A, macro.mat)
    return exps, dexps


def _apply_const_1q(state: np.ndarray, mat: np.ndarray, q: int, dim: int) -> np.ndarray:
    """Shared 2x2 on one qubit of (..., dim) states."""
    pre = 1 << q
    post = dim >> (q + 1)
    if post > 1:
        r = state.reshape(state.shape[:-1] + (pre, 2, post))
        out = np.matmul(mat, r)
    else:
        r = state.reshape(state.shape[:-1] + (pre, 2))
        out = np.matmul(r, mat.T)
    return out.reshape(state.shape)


# --- single-state realization -----------------------------------------------


def realize_circuit(
    template: CircuitTemplate, x: Sequence[float], params: Sequence[float]
) -> StateVector:
    """Execute the template for one feature vector; returns the final state."""
    x = np.asarray(x, dtype=float)
    if x.shape != (template.num_qubits,):
        raise ValidationError(
            f"feature vector length {x.shape} does not match "
            f"{template.num_qubits} qubits"
        )
    compiled = compile_template(template)
    amps = run_batch(compiled, x[None, :], np.asarray(params, dtype=float))
    return StateVector(template.num_qubits, amps[0])
