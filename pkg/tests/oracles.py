"""Independent reference implementations the tests check the library against.

Everything here goes through dense linear algebra (kron products, expm,
explicit enumeration) and never through the library's strided kernel or the
closed-form update rule, so agreement is meaningful.
"""

import numpy as np
from scipy.linalg import expm

from bitbit import trainer

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_matrix(n_qubits: int, support, paulis: str) -> np.ndarray:
    """Dense tensor-product Pauli; qubit 0 is the leftmost kron factor."""
    letters = ["I"] * n_qubits
    for q, p in zip(support, paulis):
        letters[q] = p
    out = np.array([[1.0]], dtype=complex)
    for letter in letters:
        out = np.kron(out, PAULI[letter])
    return out


def rotation_matrix(n_qubits: int, support, paulis: str, angle: float) -> np.ndarray:
    return expm(-0.5j * angle * pauli_matrix(n_qubits, support, paulis))


def rotation_matrix_closed(n_qubits: int, support, paulis: str,
                           angle: float) -> np.ndarray:
    """Dense gate via cos(t/2) I - i sin(t/2) P, the defining identity for
    the exponential of an involution (checked against expm elsewhere)."""
    dim = 1 << n_qubits
    P = pauli_matrix(n_qubits, support, paulis)
    return np.cos(0.5 * angle) * np.eye(dim) - 1j * np.sin(0.5 * angle) * P


def net_unitary(topology, params) -> np.ndarray:
    """Dense circuit unitary built gate by gate from expm factors."""
    dim = 1 << topology.n_qubits
    U = np.eye(dim, dtype=complex)
    for (paulis, support), angle in zip(topology.param_layout, params):
        U = rotation_matrix(topology.n_qubits, support, paulis, float(angle)) @ U
    return U


def register_distribution(state_amps: np.ndarray, n_qubits: int, register) -> np.ndarray:
    """Marginal over a qubit register by explicit bitstring enumeration."""
    m = len(register)
    probs = np.zeros(1 << m)
    for idx, amp in enumerate(state_amps):
        bits = format(idx, f"0{n_qubits}b")
        value = int("".join(bits[q] for q in register), 2)
        probs[value] += abs(amp) ** 2
    return probs


def loss_by_enumeration(topology, params, batch, class_table) -> float:
    """Eq.-style loss via the dense unitary and explicit marginal sums."""
    U = net_unitary(topology, params)
    n = topology.n_qubits
    register = list(range(topology.n_y))
    loss = 1.0
    for z, w in batch:
        vec = np.zeros(1 << n, dtype=complex)
        vec[int(z, 2)] = 1.0
        out = U @ vec
        probs = register_distribution(out, n, register)
        loss -= w * probs[class_table[z]]
    return loss


class CoordinateLossScanner:
    """Evaluates the batch loss as a function of one coordinate.

    The circuit prefix (gates before j) is simulated once per input, the
    measurement operator is conjugated once through the suffix, and each
    probe angle then costs one rotation by definition
    ``R(t) = cos(t/2) I - i sin(t/2) P`` plus a quadratic form.  No use of
    the sinusoid law or the update formula.
    """

    def __init__(self, topology, params, j, batch, class_table):
        n = topology.n_qubits
        dim = 1 << n
        paulis_j, support_j = topology.param_layout[j]
        self.P = pauli_matrix(n, support_j, paulis_j)

        prefix = np.eye(dim, dtype=complex)
        for (paulis, support), angle in zip(topology.param_layout[:j], params[:j]):
            prefix = rotation_matrix_closed(n, support, paulis, float(angle)) @ prefix
        suffix = np.eye(dim, dtype=complex)
        for (paulis, support), angle in zip(topology.param_layout[j + 1:],
                                            params[j + 1:]):
            suffix = rotation_matrix_closed(n, support, paulis, float(angle)) @ suffix

        shift = n - topology.n_y
        self.terms = []
        for z, w in batch:
            vec = np.zeros(dim, dtype=complex)
            vec[int(z, 2)] = 1.0
            phi = prefix @ vec
            mask = (np.arange(dim) >> shift) == class_table[z]
            M = suffix.conj().T @ np.diag(mask.astype(complex)) @ suffix
            self.terms.append((w, phi, M))

    def loss(self, theta: float) -> float:
        return float(self.losses(np.array([theta]))[0])

    def losses(self, thetas: np.ndarray) -> np.ndarray:
        """Loss at each probe angle; per angle this builds the rotated state
        from the gate definition and sums the measured probabilities."""
        c = np.cos(0.5 * thetas)
        s = np.sin(0.5 * thetas)
        total = np.ones_like(thetas)
        for w, phi, M in self.terms:
            V = np.outer(c, phi) - 1j * np.outer(s, self.P @ phi)
            total -= w * np.real(np.einsum("gi,ij,gj->g", V.conj(), M, V))
        return total

    def grid_min(self, n_points: int = 10_000) -> float:
        grid = np.linspace(-np.pi, np.pi, n_points, endpoint=False)
        return float(self.losses(grid).min())


def random_instance(rng, n_x_range=(2, 4), n_y_range=(1, 2), n_distinct=None):
    """Random topology, params, weighted batch and class table for tests."""
    from bitbit import ansatz

    n_x = int(rng.integers(n_x_range[0], n_x_range[1] + 1))
    n_y = int(rng.integers(n_y_range[0], n_y_range[1] + 1))
    topology = ansatz.build_topology(n_x, n_y)
    params = rng.uniform(-np.pi, np.pi, topology.n_params)
    max_distinct = 1 << n_x
    if n_distinct is None:
        n_distinct = int(rng.integers(2, min(6, max_distinct) + 1))
    codes = rng.choice(max_distinct, size=min(n_distinct, max_distinct), replace=False)
    zs = [format(code, f"0{n_x}b") for code in codes]
    weights = rng.dirichlet(np.ones(len(zs)))
    table = {z: int(rng.integers(0, 1 << n_y)) for z in zs}
    batch = list(zip(zs, weights))
    return topology, params, batch, table


def ascend_to_saddle(topology, params, batch, class_table, max_sweeps=400,
                     grad_tol=1e-11):
    """Drive every coordinate to its conditional maximum (theta* + pi) by
    exact coordinate ascent; the result has zero parameter-shift gradient in
    every direction while exact updates can still descend."""
    params = params.copy()
    p = topology.n_params

    def shift_grad(j):
        probe = params.copy()
        probe[j] += 0.5 * np.pi
        plus = trainer.batch_loss(topology, probe, batch, class_table)
        probe[j] = params[j] - 0.5 * np.pi
        minus = trainer.batch_loss(topology, probe, batch, class_table)
        return 0.5 * (plus - minus)

    for _ in range(max_sweeps):
        for j in range(p):
            work = params.copy()
            res = trainer.coordinate_update(topology, work, j, batch, class_table)
            if res.moved:
                params[j] = res.theta_star + np.pi
        if max(abs(shift_grad(j)) for j in range(p)) <= grad_tol:
            break
    return params
