"""Dense statevector simulation of Pauli-string rotations.

Conventions, fixed for checkpoint portability:

* qubit 0 is the most significant bit of the amplitude index, so the basis
  state ``|b0 b1 ... b_{n-1}>`` lives at index ``int("b0b1...", 2)``;
* every rotation uses the half-angle convention ``exp(-i * angle * P / 2)``,
  i.e. ``cos(angle/2) * I - i * sin(angle/2) * P``.

The gate kernel never materializes a matrix: a weight-k Pauli string is a
strided pair update (or a diagonal phase when the string is all-Z) on the
amplitude array.  All kernel functions accept arrays of shape ``(..., 2**n)``
and act on the last axis, so a batch of statevectors can be advanced through
the same circuit in one call per gate.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

MAX_QUBITS = 20

_PAULI_CHARS = frozenset("XYZ")

# i**k for k = 0..3, used for the i**(#Y) prefactor of a Pauli string.
_I_POW = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)


@dataclass
class StateVector:
    """Dense complex amplitudes over ``2**n_qubits`` basis states."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.n_qubits = int(self.n_qubits)
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {self.n_qubits}")
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ValueError(
                f"expected {1 << self.n_qubits} amplitudes, got shape {self.amplitudes.shape}"
            )

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


@dataclass(frozen=True)
class PauliRotation:
    """A rotation ``exp(-i * angle * P / 2)`` for a tensor-product Pauli P.

    ``support`` lists the qubits P acts on, ``paulis`` the matching letters
    from {X, Y, Z}; qubits outside the support see the identity.
    """

    support: tuple[int, ...]
    paulis: str
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(int(q) for q in self.support))
        if len(self.support) != len(self.paulis):
            raise ValueError("support and paulis must have the same length")
        if not self.paulis or not set(self.paulis) <= _PAULI_CHARS:
            raise ValueError(f"paulis must be a nonempty string over XYZ, got {self.paulis!r}")
        if len(set(self.support)) != len(self.support):
            raise ValueError(f"support indices must be distinct, got {self.support}")
        if min(self.support) < 0:
            raise ValueError(f"negative qubit index in {self.support}")


@dataclass(frozen=True)
class ClassRegister:
    """The readout qubits; their bits, most significant first in listed
    order, encode the predicted class index."""

    qubit_indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "qubit_indices", tuple(int(q) for q in self.qubit_indices))
        if len(set(self.qubit_indices)) != len(self.qubit_indices):
            raise ValueError("register qubits must be distinct")
        if not self.qubit_indices:
            raise ValueError("register must contain at least one qubit")


def new_basis_state(n_qubits: int, bits: str) -> StateVector:
    """Computational basis state for a bitstring, first bit most significant."""
    if len(bits) != n_qubits:
        raise ValueError(f"bitstring length {len(bits)} != n_qubits {n_qubits}")
    if set(bits) - {"0", "1"}:
        raise ValueError(f"bitstring must be over 0/1, got {bits!r}")
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[int(bits, 2)] = 1.0
    return StateVector(n_qubits, amps)


def _string_masks(n_qubits: int, support: tuple[int, ...], paulis: str):
    """Bit masks of a Pauli string: (flip mask for X/Y, parity mask for Y/Z,
    number of Y factors)."""
    flip = 0
    parity = 0
    n_y = 0
    for q, p in zip(support, paulis):
        if q >= n_qubits:
            raise ValueError(f"qubit {q} out of range for {n_qubits} qubits")
        bit = 1 << (n_qubits - 1 - q)
        if p == "X":
            flip |= bit
        elif p == "Y":
            flip |= bit
            parity |= bit
            n_y += 1
        else:
            parity |= bit
    return flip, parity, n_y


@lru_cache(maxsize=128)
def _half_indices(n_qubits: int, pivot: int) -> np.ndarray:
    """All amplitude indices whose bit ``pivot`` is 0, in ascending order.

    Flipping the string's mask maps this set one-to-one onto its complement,
    so it enumerates each update pair exactly once.
    """
    lo = np.arange(1 << (n_qubits - 1), dtype=np.int64)
    low_mask = (1 << pivot) - 1
    return ((lo >> pivot) << (pivot + 1)) | (lo & low_mask)


@lru_cache(maxsize=4096)
def _gate_plan(n_qubits: int, support: tuple[int, ...], paulis: str):
    """Precomputed index/phase data for one Pauli string on n qubits.

    For basis state x, ``P|x> = p(x) |x ^ flip>`` with
    ``p(x) = i**n_y * (-1)**popcount(x & parity_mask)``.
    """
    flip, parity_mask, n_y = _string_masks(n_qubits, support, paulis)
    i_pow = _I_POW[n_y % 4]
    if flip == 0:
        signs = 1.0 - 2.0 * (
            np.bitwise_count(np.arange(1 << n_qubits, dtype=np.int64) & parity_mask) & 1
        ).astype(np.float64)
        return ("diag", signs)
    pivot = flip.bit_length() - 1
    idx_u = _half_indices(n_qubits, pivot)
    idx_v = idx_u ^ flip
    # p(u) as a complex array; p(v) differs by the fixed factor (-1)**popcount(flip & parity).
    sign_u = 1.0 - 2.0 * (np.bitwise_count(idx_u & parity_mask) & 1).astype(np.float64)
    p_u = i_pow * sign_u
    flip_parity = 1.0 - 2.0 * ((flip & parity_mask).bit_count() & 1)
    return ("pair", idx_u, idx_v, p_u, flip_parity)


def rotate(amps: np.ndarray, n_qubits: int, support: tuple[int, ...], paulis: str,
           angle: float) -> None:
    """Apply ``exp(-i*angle*P/2)`` in place to the last axis of ``amps``.

    ``amps`` may carry leading batch axes; each row is an independent state.
    """
    plan = _gate_plan(int(n_qubits), tuple(int(q) for q in support), paulis)
    c = math.cos(0.5 * angle)
    s = math.sin(0.5 * angle)
    if plan[0] == "diag":
        # a[x] *= c - i*s*sign(x)
        signs = plan[1]
        amps *= c - 1j * s * signs
        return
    _, idx_u, idx_v, p_u, flip_parity = plan
    a_u = amps[..., idx_u]
    a_v = amps[..., idx_v]
    p_v = p_u * flip_parity
    amps[..., idx_u] = c * a_u - 1j * s * (p_v * a_v)
    amps[..., idx_v] = c * a_v - 1j * s * (p_u * a_u)


def apply_pauli_rotation(state: StateVector, gate: PauliRotation) -> StateVector:
    """Apply the rotation to the state in place and return it."""
    if max(gate.support) >= state.n_qubits:
        raise ValueError(
            f"gate support {gate.support} out of range for {state.n_qubits} qubits"
        )
    rotate(state.amplitudes, state.n_qubits, gate.support, gate.paulis, gate.angle)
    return state


@lru_cache(maxsize=256)
def _register_values(n_qubits: int, qubit_indices: tuple[int, ...]) -> np.ndarray:
    """Register value encoded by each amplitude index (listed order, MSB first)."""
    x = np.arange(1 << n_qubits, dtype=np.int64)
    m = len(qubit_indices)
    vals = np.zeros_like(x)
    for t, q in enumerate(qubit_indices):
        vals |= ((x >> (n_qubits - 1 - q)) & 1) << (m - 1 - t)
    return vals


def class_distribution(state: StateVector, register: ClassRegister) -> np.ndarray:
    """Marginal probability of each register value."""
    if max(register.qubit_indices) >= state.n_qubits:
        raise ValueError(
            f"register {register.qubit_indices} out of range for {state.n_qubits} qubits"
        )
    vals = _register_values(state.n_qubits, register.qubit_indices)
    probs = np.bincount(
        vals, weights=np.abs(state.amplitudes) ** 2, minlength=1 << len(register.qubit_indices)
    )
    return probs


def sample_register(dist: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial shot counts from a probability vector; deterministic per rng."""
    dist = np.asarray(dist, dtype=np.float64)
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    total = dist.sum()
    if abs(total - 1.0) > 1e-9 or np.any(dist < -1e-12):
        raise ValueError(f"distribution must sum to 1 within 1e-9, got sum {total}")
    pvals = np.clip(dist, 0.0, None)
    pvals /= pvals.sum()
    return rng.multinomial(shots, pvals)
