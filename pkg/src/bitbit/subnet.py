"""Growing a trained model into a larger one without losing its loss.

Because bit grants nest (old bits keep their string positions) and layer
retention keeps the lowest qubit indices, a smaller net embeds literally
into a larger one: old layer 0 maps into new layer 0, every later old layer
maps to the unique new layer of the same size, and all other nodes start as
the identity.  The grown circuit then acts on the class register exactly as
the old one did, so the loss at the moment of growth equals the old final
loss to machine precision.

One data-pipeline caveat, recorded per growth in :class:`GrowthReport`:
rebuilding the majority table at the larger encoding can move the loss by
itself whenever a refined cell flips its majority, which has nothing to do
with parameter transfer.  The guaranteed invariant is the loss against each
sample's carried (old-encoding) target; reports carry both numbers.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import ansatz, encoder, trainer
from .ansatz import NetTopology
from .encoder import BitAllocation
from .trainer import TrainConfig, TrainingData


@dataclass(frozen=True)
class SubnetMapping:
    qubit_map: tuple[int, ...]            # old qubit index -> new qubit index
    node_map: dict[int, int]              # old node index -> new node index
    param_map: np.ndarray                 # old param index -> new param index
    new_node_set: tuple[int, ...]         # new node indices absent from the image


def grow_allocation(old_alloc: BitAllocation, scores: np.ndarray,
                    new_B: int) -> BitAllocation:
    """Continue the grant sequence to ``new_B`` bits; old bits keep their
    positions, new bits append."""
    old_B = old_alloc.total_bits
    if new_B < old_B:
        raise ValueError(f"new_B = {new_B} must be >= old B = {old_B}")
    new_alloc = encoder.allocate_bits(scores, new_B)
    if new_alloc.grant_order[:old_B] != old_alloc.grant_order:
        raise ValueError(
            "scores are inconsistent with the old allocation's grant order"
        )
    return new_alloc


def map_subnet(old: NetTopology, new: NetTopology) -> SubnetMapping:
    """Embed the old net into the new one.

    Old layer 0 maps into new layer 0 (its qubit pairs are a subset); each
    later old layer has a power-of-two size that appears exactly once in the
    new cascade tail and maps there.  Final Euler slots map identically on
    the class register.
    """
    if old.n_y != new.n_y:
        raise ValueError(f"class register must match: {old.n_y} != {new.n_y}")
    if old.n_qubits > new.n_qubits:
        raise ValueError("old net does not fit: more qubits than the new net")

    layer_image = {0: 0}
    for l_old, size in enumerate(old.layer_sizes[1:], start=1):
        candidates = [l for l, s in enumerate(new.layer_sizes) if s == size and l >= 1]
        if not candidates:
            raise ValueError(f"no new layer of size {size} to host old layer {l_old}")
        layer_image[l_old] = candidates[0]

    new_index = {(n.layer, n.qubit_a, n.qubit_b): i for i, n in enumerate(new.nodes)}
    node_map: dict[int, int] = {}
    for i, node in enumerate(old.nodes):
        key = (layer_image[node.layer], node.qubit_a, node.qubit_b)
        if key not in new_index:
            raise ValueError(f"old node {node} has no image {key} in the new net")
        node_map[i] = new_index[key]

    p_old = old.n_params
    param_map = np.empty(p_old, dtype=np.int64)
    for i_old, i_new in node_map.items():
        param_map[9 * i_old: 9 * i_old + 9] = np.arange(9 * i_new, 9 * i_new + 9)
    old_base = 9 * len(old.nodes)
    new_base = 9 * len(new.nodes)
    param_map[old_base:] = np.arange(new_base, new_base + 3 * old.n_y)

    image = set(node_map.values())
    new_node_set = tuple(i for i in range(len(new.nodes)) if i not in image)
    return SubnetMapping(
        qubit_map=tuple(range(old.n_qubits)),
        node_map=node_map,
        param_map=param_map,
        new_node_set=new_node_set,
    )


def grow_params(old_params: np.ndarray, mapping: SubnetMapping, new: NetTopology,
                rng: np.random.Generator | None = None,
                fill_mode: str = "identity") -> np.ndarray:
    """Transfer old parameters into a fresh vector for the new net.

    All remaining slots are zero (identity).  ``fill_mode="random"`` instead
    draws uniform [0, 0.4*pi] values for nodes whose *both* qubits are new;
    those act before the new qubits are discarded and never touch the class
    register, so the loss at growth is preserved either way.
    """
    old_params = np.asarray(old_params, dtype=np.float64)
    if old_params.shape != (len(mapping.param_map),):
        raise ValueError(
            f"expected {len(mapping.param_map)} old parameters, got {old_params.shape}"
        )
    new_params = np.zeros(new.n_params)
    new_params[mapping.param_map] = old_params
    if fill_mode == "random":
        if rng is None:
            raise ValueError("random fill needs an rng")
        n_old_qubits = len(mapping.qubit_map)
        for i in mapping.new_node_set:
            node = new.nodes[i]
            if node.qubit_a >= n_old_qubits and node.qubit_b >= n_old_qubits:
                new_params[9 * i: 9 * i + 9] = rng.uniform(0.0, 0.4 * np.pi, 9)
    elif fill_mode != "identity":
        raise ValueError(f"unknown fill_mode {fill_mode!r}")
    return new_params


def new_node_param_indices(mapping: SubnetMapping) -> list[int]:
    """Parameter slots of the nodes absent from the sub-net image, in
    topology order (the growth warm-up sweep updates these first)."""
    out: list[int] = []
    for i in sorted(mapping.new_node_set):
        out.extend(range(9 * i, 9 * i + 9))
    return out


def carried_target_table(new_freq_keys, old_bits: int,
                         old_table: dict[str, int]) -> dict[str, int]:
    """Targets for extended bitstrings taken from their old-encoding prefix."""
    return {z: old_table[z[:old_bits]] for z in new_freq_keys}


@dataclass
class GrowthReport:
    old_n_qubits: int
    new_n_qubits: int
    old_final_test_loss: float
    new_initial_test_loss: float           # against the rebuilt majority table
    new_initial_test_loss_carried: float   # against carried old-encoding targets

    @property
    def carried_gap(self) -> float:
        return abs(self.new_initial_test_loss_carried - self.old_final_test_loss)


def grow_and_train_chain(dataset, size_ladder: list[int], config: TrainConfig,
                         n_bins: int | None = None, D: int | None = None,
                         start_params: np.ndarray | None = None):
    """Train a ladder of model sizes, each initialized from the previous.

    ``dataset`` is a :class:`bitbit.datasets.SplitDataset`; ``size_ladder``
    lists total qubit counts, ascending.  The smallest size trains from a
    random initialization; every later size is sub-net initialized, warm-up
    swept over its new nodes, then fully swept per the config.  Returns
    (checkpoints, growth reports), one checkpoint per size.

    ``start_params`` seeds the first ladder size from an already trained
    model (it is evaluated but not retrained).
    """
    if sorted(size_ladder) != list(size_ladder) or len(set(size_ladder)) != len(size_ladder):
        raise ValueError(f"size ladder must be strictly ascending, got {size_ladder}")
    n_classes = len(dataset.train.class_labels)
    n_y = max(1, math.ceil(math.log2(n_classes)))
    bit_ladder = [size - n_y for size in size_ladder]
    if bit_ladder[0] < 1:
        raise ValueError(
            f"smallest size {size_ladder[0]} leaves no data qubits beside n_y = {n_y}"
        )

    X_train, y_train = dataset.train.images, dataset.train.labels
    X_test = dataset.test.images
    N, d = X_train.shape
    if D is None:
        D = min(d, 2 * bit_ladder[-1], N)
    if n_bins is None:
        n_bins = encoder.default_mi_bins(N)
    pca = encoder.fit_pca(X_train, D)
    Xp_train = encoder.project_unit(pca, X_train)
    Xp_test = encoder.project_unit(pca, X_test)
    scores = encoder.mutual_information_scores(Xp_train, y_train, n_bins)

    size_seeds = np.random.SeedSequence(config.seed).generate_state(len(size_ladder))

    def stage_data(B: int, alloc: BitAllocation) -> TrainingData:
        z_train = encoder.encode_samples(Xp_train, alloc)
        z_test = encoder.encode_samples(Xp_test, alloc)
        train_ds = encoder.dataset_from_samples(
            list(zip(z_train, (int(y) for y in y_train))), n_classes=n_classes)
        test_ds = encoder.dataset_from_samples(
            list(zip(z_test, (int(y) for y in dataset.test.labels))), n_classes=n_classes)
        return TrainingData(
            train=train_ds, test=test_ds, pca=pca, allocation=alloc, scores=scores,
            class_labels=dataset.train.class_labels,
            train_pca1=Xp_train[:, 0], test_pca1=Xp_test[:, 0],
        )

    checkpoints_out = []
    reports: list[GrowthReport] = []
    prev: dict = {}
    for stage, (size, B) in enumerate(zip(size_ladder, bit_ladder)):
        alloc = encoder.allocate_bits(scores, B)
        if stage > 0:
            alloc = grow_allocation(prev["alloc"], scores, B)
        data = stage_data(B, alloc)
        topology = ansatz.build_topology(n_x=B, n_y=n_y)
        stage_config = replace(config, seed=int(size_seeds[stage]))

        warmup = None
        initial = None
        if stage == 0 and start_params is not None:
            if np.shape(start_params) != (topology.n_params,):
                raise ValueError(
                    f"start_params has shape {np.shape(start_params)}, first "
                    f"ladder size needs {topology.n_params} parameters"
                )
            initial = np.asarray(start_params, dtype=np.float64)
            stage_config = replace(stage_config, sweeps_per_size=0)
        if stage > 0:
            mapping = map_subnet(prev["topology"], topology)
            rng_fill = np.random.default_rng(int(size_seeds[stage]) ^ 0x5F5F5F5F)
            initial = grow_params(prev["params"], mapping, topology,
                                  rng=rng_fill, fill_mode=config.fill_mode)
            if config.warmup_new_nodes:
                warmup = new_node_param_indices(mapping)
            carried = carried_target_table(data.test.freq.keys(),
                                           prev["alloc"].total_bits,
                                           prev["test_table"])
            carried_loss = trainer.batch_loss(
                topology, initial,
                [(z, f) for z, f in sorted(data.test.freq.items())], carried)
            fresh_loss, _ = trainer.evaluate(topology, initial, data.test)
            reports.append(GrowthReport(
                old_n_qubits=prev["topology"].n_qubits,
                new_n_qubits=topology.n_qubits,
                old_final_test_loss=prev["final_test_loss"],
                new_initial_test_loss=fresh_loss,
                new_initial_test_loss_carried=carried_loss,
            ))

        ckpt = trainer.train_model(data, topology, stage_config,
                                   initial_params=initial, warmup_order=warmup)
        checkpoints_out.append(ckpt)
        final_test_loss, _ = trainer.evaluate(topology, ckpt.params, data.test)
        prev = {
            "alloc": alloc,
            "topology": topology,
            "params": ckpt.params,
            "final_test_loss": final_test_loss,
            "test_table": data.test.class_table,
        }
    return checkpoints_out, reports
