"""Dense statevector simulation of small qubit registers.

States live in a 2**n dimensional complex vector. Basis convention: qubit 0
is the most significant bit of the basis index, so for two qubits the basis
order is |00>, |01>, |10>, |11> and |10> = (0, 0, 1, 0).

All kernels accept amplitude arrays with arbitrary leading axes so that a
whole batch of states moves through a gate in one call; the public
single-state operations wrap the same kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import CapacityError, ValidationError

MAX_QUBITS = 24

SQRT1_2 = 1.0 / math.sqrt(2.0)

_H = np.array([[SQRT1_2, SQRT1_2], [SQRT1_2, -SQRT1_2]], dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)

# sqrt(iSWAP): identity on |00>/|11>, a 45-degree iSWAP mix on the middle block.
_SQISWAP = np.array(
    [
        [1, 0, 0, 0],
        [0, SQRT1_2, 1j * SQRT1_2, 0],
        [0, 1j * SQRT1_2, SQRT1_2, 0],
        [0, 0, 0, 1],
    ],
    dtype=complex,
)

ROTATION_KINDS = ("RX", "RY", "RZ")
FIXED_1Q_KINDS = ("H", "X", "Y", "Z")
TWO_QUBIT_KINDS = ("CZ", "SQISWAP")
GATE_KINDS = FIXED_1Q_KINDS + ROTATION_KINDS + TWO_QUBIT_KINDS + ("DIAGONAL_PHASE",)


def rotation_matrix(axis: str, angle: float) -> np.ndarray:
    """2x2 matrix exp(-i*angle/2 * P) for P in {X, Y, Z}."""
    c = math.cos(angle / 2.0)
    s = math.sin(angle / 2.0)
    if axis == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if axis == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if axis == "RZ":
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]], dtype=complex)
    raise ValidationError(f"unknown rotation axis {axis!r}")


def gate_matrix(kind: str, angle: Optional[float] = None) -> np.ndarray:
    """Unitary matrix for a non-diagonal-phase gate kind."""
    if kind in ROTATION_KINDS:
        if angle is None:
            raise ValidationError(f"{kind} requires an angle")
        return rotation_matrix(kind, angle)
    if angle is not None:
        raise ValidationError(f"{kind} takes no angle")
    if kind == "H":
        return _H.copy()
    if kind == "X":
        return _X.copy()
    if kind == "Y":
        return _Y.copy()
    if kind == "Z":
        return _Z.copy()
    if kind == "CZ":
        return np.diag([1, 1, 1, -1]).astype(complex)
    if kind == "SQISWAP":
        return _SQISWAP.copy()
    raise ValidationError(f"unknown gate kind {kind!r}")


@dataclass
class GateSpec:
    """One gate instruction: kind, target qubit(s), optional angle or phases.

    ``phases`` is only valid for kind DIAGONAL_PHASE and must hold one
    unit-modulus complex number per basis state of the register it is
    applied to.
    """

    kind: str
    targets: tuple = ()
    angle: Optional[float] = None
    phases: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValidationError(f"unknown gate kind {self.kind!r}")
        self.targets = tuple(int(t) for t in self.targets)
        if len(set(self.targets)) != len(self.targets):
            raise ValidationError(f"duplicate targets {self.targets}")
        if self.kind in FIXED_1Q_KINDS + ROTATION_KINDS and len(self.targets) != 1:
            raise ValidationError(f"{self.kind} needs exactly one target")
        if self.kind in TWO_QUBIT_KINDS and len(self.targets) != 2:
            raise ValidationError(f"{self.kind} needs exactly two targets")
        if self.kind in ROTATION_KINDS and self.angle is None:
            raise ValidationError(f"{self.kind} requires an angle")
        if self.kind not in ROTATION_KINDS and self.angle is not None:
            raise ValidationError(f"{self.kind} takes no angle")
        if self.kind == "DIAGONAL_PHASE":
            if self.phases is None:
                raise ValidationError("DIAGONAL_PHASE requires phases")
            self.phases = np.asarray(self.phases, dtype=complex)
        elif self.phases is not None:
            raise ValidationError(f"{self.kind} takes no phases")

    def matrix(self) -> np.ndarray:
        if self.kind == "DIAGONAL_PHASE":
            return np.diag(self.phases)
        return gate_matrix(self.kind, self.angle)


@dataclass
class ObservableSpec:
    """A list of Pauli-Z product terms, each a subset of qubit indices."""

    mode: str
    terms: tuple

    def __post_init__(self):
        if self.mode not in ("PAIRS_ZZ", "ALL_Z"):
            raise ValidationError(f"unknown observable mode {self.mode!r}")
        self.terms = tuple(tuple(int(q) for q in term) for term in self.terms)

    @property
    def num_terms(self) -> int:
        return len(self.terms)


def observable_for(mode: str, n: int) -> ObservableSpec:
    """Build the observable terms for a register of n qubits.

    PAIRS_ZZ yields every Z(i)Z(j) with i < j; ALL_Z yields the single
    Z product over all n qubits.
    """
    if mode == "PAIRS_ZZ":
        terms = tuple((i, j) for i in range(n) for j in range(i + 1, n))
    elif mode == "ALL_Z":
        terms = (tuple(range(n)),)
    else:
        raise ValidationError(f"unknown observable mode {mode!r}")
    return ObservableSpec(mode=mode, terms=terms)


@dataclass
class StateVector:
    """An n-qubit pure state as a dense array of 2**n complex amplitudes."""

    num_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (1 << self.num_qubits,):
            raise ValidationError(
                f"amplitude length {self.amplitudes.shape} does not match "
                f"2**{self.num_qubits}"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.num_qubits, self.amplitudes.copy())


def init_state(n: int) -> StateVector:
    """The all-zeros basis state |0...0> on n qubits."""
    if not 1 <= n <= MAX_QUBITS:
        raise CapacityError(f"qubit count {n} outside [1, {MAX_QUBITS}]")
    amps = np.zeros(1 << n, dtype=complex)
    amps[0] = 1.0
    return StateVector(n, amps)


# ---------------------------------------------------------------------------
# batched kernels
#
# amps arrays have shape (..., 2**n). Per-sample matrices align with the axis
# directly before the state axis: amps (..., B, dim) with mat (B, 2, 2).
# ---------------------------------------------------------------------------


def _check_target(q: int, n: int) -> None:
    if not 0 <= q < n:
        raise IndexError(f"target qubit {q} out of range for {n} qubits")


def apply_1q(amps: np.ndarray, mat: np.ndarray, q: int, n: int) -> np.ndarray:
    """Apply a 2x2 matrix to qubit q of every state in ``amps``.

    ``mat`` is either one shared (2, 2) matrix or a (B, 2, 2) stack of
    per-sample matrices aligned with the axis before the state axis.
    """
    _check_target(q, n)
    pre = 1 << q
    post = 1 << (n - 1 - q)
    lead = amps.shape[:-1]
    if post > 1:
        r = amps.reshape(lead + (pre, 2, post))
        if mat.ndim == 3:
            mat = mat[:, None]  # broadcast over the pre axis
        out = np.matmul(mat, r)
    else:
        r = amps.reshape(lead + (pre, 2))
        if mat.ndim == 3:
            out = np.matmul(r, mat.transpose(0, 2, 1))
        else:
            out = np.matmul(r, mat.T)
    return out.reshape(amps.shape)


def apply_2q(amps: np.ndarray, mat4: np.ndarray, q1: int, q2: int, n: int) -> np.ndarray:
    """Apply a 4x4 matrix to qubits (q1, q2) of every state in ``amps``."""
    _check_target(q1, n)
    _check_target(q2, n)
    if q1 == q2:
        raise ValidationError("two-qubit gate targets must differ")
    if q1 > q2:
        # reorder so q1 < q2, permuting the matrix accordingly
        perm = [0, 2, 1, 3]
        mat4 = mat4[np.ix_(perm, perm)]
        q1, q2 = q2, q1
    pre = 1 << q1
    mid = 1 << (q2 - q1 - 1)
    post = 1 << (n - 1 - q2)
    lead = amps.shape[:-1]
    r = amps.reshape(lead + (pre, 2, mid, 2, post))
    # bring the two qubit axes together, fuse to length 4, one matmul
    r = np.moveaxis(r, -4, -3).reshape(lead + (pre, mid, 4, post))
    if post > 1:
        out = np.matmul(mat4, r)
    else:
        out = np.matmul(r.reshape(lead + (pre, mid, 4)), mat4.T)
    out = out.reshape(lead + (pre, mid, 2, 2, post))
    out = np.moveaxis(out, -3, -4)
    return out.reshape(amps.shape)


def apply_diag(amps: np.ndarray, diag: np.ndarray) -> np.ndarray:
    """Multiply every state elementwise by a diagonal; broadcasts over batches."""
    return amps * diag


@lru_cache(maxsize=None)
def cz_diag(n: int, q1: int, q2: int) -> np.ndarray:
    """Diagonal of CZ on qubits (q1, q2) as a length-2**n sign vector."""
    _check_target(q1, n)
    _check_target(q2, n)
    idx = np.arange(1 << n)
    b1 = (idx >> (n - 1 - q1)) & 1
    b2 = (idx >> (n - 1 - q2)) & 1
    return np.where((b1 & b2) == 1, -1.0, 1.0).astype(complex)


@lru_cache(maxsize=None)
def z_eigenvalues(n: int) -> np.ndarray:
    """Matrix (2**n, n) of Z eigenvalues (+1/-1) per basis state and qubit."""
    idx = np.arange(1 << n)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    return 1.0 - 2.0 * bits


def z_sign_vector(n: int, qubits: Sequence[int]) -> np.ndarray:
    """Per-basis-state sign of the Z product over ``qubits``."""
    z = z_eigenvalues(n)
    out = np.ones(1 << n)
    for q in qubits:
        _check_target(q, n)
        out = out * z[:, q]
    return out


def observable_signs(n: int, observable: ObservableSpec) -> np.ndarray:
    """Stack of sign vectors, shape (2**n, num_terms)."""
    cols = [z_sign_vector(n, term) for term in observable.terms]
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# single-state operations
# ---------------------------------------------------------------------------


def apply_gate(state: StateVector, gate: GateSpec) -> StateVector:
    """Apply one gate and return the resulting state (input left untouched)."""
    n = state.num_qubits
    if gate.kind == "DIAGONAL_PHASE":
        return apply_diagonal_phase(state, gate.phases)
    mat = gate.matrix()
    if gate.kind in TWO_QUBIT_KINDS:
        amps = apply_2q(state.amplitudes, mat, gate.targets[0], gate.targets[1], n)
    else:
        amps = apply_1q(state.amplitudes, mat, gate.targets[0], n)
    return StateVector(n, amps)


def apply_diagonal_phase(state: StateVector, phases) -> StateVector:
    """Multiply amplitude b by phases[b]; phases must be unit modulus."""
    phases = np.asarray(phases, dtype=complex)
    dim = 1 << state.num_qubits
    if phases.shape != (dim,):
        raise ValidationError(
            f"phase vector length {phases.shape} does not match register size {dim}"
        )
    if np.max(np.abs(np.abs(phases) - 1.0)) > 1e-12:
        raise ValidationError("diagonal phase entries must have unit modulus")
    return StateVector(state.num_qubits, state.amplitudes * phases)


def expectation_z_product(state: StateVector, qubits: Iterable[int]) -> float:
    """Expectation of the Z product over a non-empty qubit subset.

    Equals sum_b |amp_b|^2 * prod_{i in subset} (-1)**bit_i(b); exact, no
    sampling noise, always a real number in [-1, 1].
    """
    subset = tuple(qubits)
    if len(subset) == 0:
        raise ValidationError("observable qubit subset must be non-empty")
    if len(set(subset)) != len(subset):
        raise ValidationError(f"duplicate qubits in subset {subset}")
    signs = z_sign_vector(state.num_qubits, subset)
    probs = np.abs(state.amplitudes) ** 2
    return float(probs @ signs)
