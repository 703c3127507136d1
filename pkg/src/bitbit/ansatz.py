"""The cascading all-to-all entanglement net and its parameter layout.

A net on ``n_x`` data qubits plus ``n_y`` class qubits is a sequence of
layers; layer ``l+1`` keeps the ``2**(ceil(log2 s_l) - 1)`` lowest-indexed
qubits of layer ``l`` and the cascade stops once the class register
(qubits ``0..n_y-1``) is all that fits: at size 2 for ``n_y <= 2``,
otherwise at the first power of two >= ``n_y``.  Every unordered pair of a
layer's qubits carries one 9-parameter node (two X-Z-X Euler triples, then
the commuting XX/YY/ZZ couplings), and each class qubit gets a final Euler
triple before readout.  Parameter j is exactly one Pauli rotation, so the
layout doubles as the gate sequence.
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import sim


@dataclass(frozen=True)
class Node:
    layer: int
    qubit_a: int
    qubit_b: int


@dataclass(frozen=True)
class NetTopology:
    n_x: int
    n_y: int
    layer_sizes: tuple[int, ...]
    nodes: tuple[Node, ...]
    final_euler_qubits: tuple[int, ...]
    param_layout: tuple[tuple[str, tuple[int, ...]], ...]

    @property
    def n_qubits(self) -> int:
        return self.n_x + self.n_y

    @property
    def n_params(self) -> int:
        return len(self.param_layout)


def node_parameters(node: Node) -> list[tuple[str, tuple[int, ...]]]:
    """The node's 9 rotation slots in application order."""
    a, b = node.qubit_a, node.qubit_b
    return [
        ("X", (a,)), ("Z", (a,)), ("X", (a,)),
        ("X", (b,)), ("Z", (b,)), ("X", (b,)),
        ("XX", (a, b)), ("YY", (a, b)), ("ZZ", (a, b)),
    ]


def _cascade_sizes(n_x: int, n_y: int) -> tuple[int, ...]:
    stop = 2 if n_y <= 2 else 1 << (n_y - 1).bit_length()
    sizes = [n_x + n_y]
    while sizes[-1] > stop:
        sizes.append(1 << ((sizes[-1] - 1).bit_length() - 1))
    return tuple(sizes)


def build_topology(n_x: int, n_y: int) -> NetTopology:
    """Deterministic net for ``n_x`` data qubits and ``n_y`` class qubits.

    Node order is layer-major, lexicographic over (qubit_a, qubit_b) within a
    layer; retention keeps the lowest indices, so the class register always
    survives to readout.
    """
    if n_x < 1 or n_y < 1:
        raise ValueError(f"need n_x >= 1 and n_y >= 1, got ({n_x}, {n_y})")
    sizes = _cascade_sizes(n_x, n_y)
    nodes = tuple(
        Node(layer, a, b)
        for layer, size in enumerate(sizes)
        for a, b in combinations(range(size), 2)
    )
    final_qubits = tuple(range(n_y))
    layout: list[tuple[str, tuple[int, ...]]] = []
    for node in nodes:
        layout.extend(node_parameters(node))
    for q in final_qubits:
        layout.extend([("X", (q,)), ("Z", (q,)), ("X", (q,))])
    return NetTopology(
        n_x=n_x,
        n_y=n_y,
        layer_sizes=sizes,
        nodes=nodes,
        final_euler_qubits=final_qubits,
        param_layout=tuple(layout),
    )


def parameter_count(topology: NetTopology) -> int:
    return 9 * len(topology.nodes) + 3 * topology.n_y


def init_params(topology: NetTopology, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. uniform draws on [0, 0.4*pi], one per parameter slot."""
    return rng.uniform(0.0, 0.4 * np.pi, size=topology.n_params)


def _check_params(topology: NetTopology, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (topology.n_params,):
        raise ValueError(
            f"expected {topology.n_params} parameters, got shape {params.shape}"
        )
    return params


def apply_net_raw(amps: np.ndarray, topology: NetTopology, params: np.ndarray) -> None:
    """Run the net in place over the last axis of a (batched) amplitude array."""
    params = _check_params(topology, params)
    n = topology.n_qubits
    for (paulis, support), angle in zip(topology.param_layout, params):
        sim.rotate(amps, n, support, paulis, angle)


def apply_net(state: sim.StateVector, topology: NetTopology,
              params: np.ndarray) -> sim.StateVector:
    """Apply every node rotation in topology order, then the final Euler
    triples on the class register."""
    if state.n_qubits != topology.n_qubits:
        raise ValueError(
            f"state has {state.n_qubits} qubits, topology needs {topology.n_qubits}"
        )
    apply_net_raw(state.amplitudes, topology, params)
    return state
