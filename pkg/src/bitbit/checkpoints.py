"""Checkpoint persistence with a byte-stable canonical text format.

The on-disk form is JSON with a fixed field order and every real rendered at
17 significant digits, which round-trips doubles exactly; saving a loaded
checkpoint therefore reproduces the original bytes.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import ansatz
from .ansatz import NetTopology
from .encoder import BitAllocation, PcaModel
from .trainer import HistoryRow, TrainConfig, TrainerState, TrainingData

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    format_version: int
    n_y: int
    class_labels: tuple[int, ...]
    pca: PcaModel | None
    allocation: BitAllocation | None
    scores: np.ndarray | None
    topology: NetTopology
    params: np.ndarray
    history: list[HistoryRow]
    config: dict
    seeds: dict


def from_training(data: TrainingData, topology: NetTopology, state: TrainerState,
                  config: TrainConfig) -> Checkpoint:
    config_snapshot = {
        "batch_size": config.batch_size,
        "ks_threshold": config.ks_threshold,
        "initial_shots": config.initial_shots,
        "shots_increment": config.shots_increment,
        "sweeps_per_size": config.sweeps_per_size,
        "mode": config.mode,
        "seed": config.seed,
        "eval_every": config.eval_every,
        "max_shots": config.max_shots,
        "shot_budget": config.shot_budget,
        "shuffle_coordinates": config.shuffle_coordinates,
        "warmup_new_nodes": config.warmup_new_nodes,
        "fill_mode": config.fill_mode,
    }
    return Checkpoint(
        format_version=FORMAT_VERSION,
        n_y=topology.n_y,
        class_labels=tuple(int(c) for c in data.class_labels),
        pca=data.pca,
        allocation=data.allocation,
        scores=None if data.scores is None else np.asarray(data.scores),
        topology=topology,
        params=np.asarray(state.params, dtype=np.float64),
        history=list(state.history),
        config=config_snapshot,
        seeds={"master": config.seed},
    )


def _render(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise CheckpointError(f"cannot serialize non-finite value {x}")
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = obj.tolist() if isinstance(obj, np.ndarray) else obj
        return "[" + ",".join(_render(v) for v in items) + "]"
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_render(v)}"
                              for k, v in obj.items()) + "}"
    raise CheckpointError(f"cannot serialize {type(obj).__name__}")


def to_text(ckpt: Checkpoint) -> str:
    doc = {
        "format_version": ckpt.format_version,
        "n_y": ckpt.n_y,
        "class_labels": list(ckpt.class_labels),
        "encoder": None if ckpt.pca is None else {
            "mean": ckpt.pca.mean,
            "components": ckpt.pca.components,
            "explained_variance": ckpt.pca.explained_variance,
            "proj_min": ckpt.pca.proj_min,
            "proj_max": ckpt.pca.proj_max,
            "scores": ckpt.scores,
            "bits": list(ckpt.allocation.bits),
            "grant_order": list(ckpt.allocation.grant_order),
        },
        "topology": {
            "n_x": ckpt.topology.n_x,
            "n_y": ckpt.topology.n_y,
            "layer_sizes": list(ckpt.topology.layer_sizes),
            "nodes": [[n.layer, n.qubit_a, n.qubit_b] for n in ckpt.topology.nodes],
        },
        "params": ckpt.params,
        "history": [[r.update_index, r.n_qubits, r.batch_loss, r.test_loss,
                     r.test_accuracy, r.shots, r.batch_size] for r in ckpt.history],
        "config": ckpt.config,
        "seeds": ckpt.seeds,
    }
    return _render(doc) + "\n"


_TOP_KEYS = ["format_version", "n_y", "class_labels", "encoder", "topology",
             "params", "history", "config", "seeds"]


def from_text(text: str) -> Checkpoint:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"not valid checkpoint text: {exc}") from exc
    if not isinstance(doc, dict) or list(doc.keys()) != _TOP_KEYS:
        raise CheckpointError(
            f"unexpected checkpoint schema; want keys {_TOP_KEYS}"
        )
    if doc["format_version"] != FORMAT_VERSION:
        raise CheckpointError(
            f"format version {doc['format_version']} unsupported "
            f"(this build reads {FORMAT_VERSION})"
        )
    topo_doc = doc["topology"]
    topology = ansatz.build_topology(topo_doc["n_x"], topo_doc["n_y"])
    if list(topology.layer_sizes) != topo_doc["layer_sizes"] or \
            [[n.layer, n.qubit_a, n.qubit_b] for n in topology.nodes] != topo_doc["nodes"]:
        raise CheckpointError("stored topology disagrees with its (n_x, n_y) rebuild")
    params = np.asarray(doc["params"], dtype=np.float64)
    if params.shape != (topology.n_params,):
        raise CheckpointError(
            f"parameter count {params.shape} does not match topology "
            f"(p = {topology.n_params})"
        )
    enc = doc["encoder"]
    pca = None
    allocation = None
    scores = None
    if enc is not None:
        pca = PcaModel(
            mean=np.asarray(enc["mean"], dtype=np.float64),
            components=np.asarray(enc["components"], dtype=np.float64),
            explained_variance=np.asarray(enc["explained_variance"], dtype=np.float64),
            proj_min=np.asarray(enc["proj_min"], dtype=np.float64),
            proj_max=np.asarray(enc["proj_max"], dtype=np.float64),
        )
        allocation = BitAllocation(bits=tuple(enc["bits"]),
                                   grant_order=tuple(enc["grant_order"]))
        scores = None if enc["scores"] is None else np.asarray(enc["scores"],
                                                               dtype=np.float64)
        if sum(allocation.bits) != allocation.total_bits:
            raise CheckpointError("bit allocation does not sum to its grant count")
        if allocation.total_bits != topology.n_x:
            raise CheckpointError(
                f"allocation carries {allocation.total_bits} bits but the net "
                f"has n_x = {topology.n_x}"
            )
    history = [HistoryRow(update_index=int(r[0]), n_qubits=int(r[1]),
                          batch_loss=float(r[2]), test_loss=float(r[3]),
                          test_accuracy=float(r[4]), shots=int(r[5]),
                          batch_size=int(r[6]))
               for r in doc["history"]]
    return Checkpoint(
        format_version=int(doc["format_version"]),
        n_y=int(doc["n_y"]),
        class_labels=tuple(int(c) for c in doc["class_labels"]),
        pca=pca,
        allocation=allocation,
        scores=scores,
        topology=topology,
        params=params,
        history=history,
        config=doc["config"],
        seeds=doc["seeds"],
    )


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_text(ckpt))


def load_checkpoint(path) -> Checkpoint:
    with open(path, encoding="utf-8") as fh:
        return from_text(fh.read())
