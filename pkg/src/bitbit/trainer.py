"""Loss evaluation and optimizer-free training via exact coordinate updates.

The loss as a function of a single rotation angle, all others frozen, is an
exact sinusoid ``L(t) = 1 - a - g*cos(t) - s*sin(t)``, so three evaluations
at ``t``, ``t + pi/2`` and ``t + pi`` pin down its minimizer in closed form:

    t* = t - atan2(2*L(t + pi/2) - L(t + pi) - L(t),  L(t + pi) - L(t))

The atan2 quadrant handling is what lets the update walk straight off the
``t* + pi`` saddles where gradient methods stall.  A sweep applies this
update coordinate by coordinate; in exact mode on a fixed batch the loss is
non-increasing at every single step, with no optimizer or learning rate
anywhere.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import ansatz
from .encoder import BitAllocation, EncodedDataset, PcaModel

EXACT_K_TOL = 1e-12
SAMPLED_K_SIGMAS = 3.0


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 150
    ks_threshold: float = 0.1
    initial_shots: int | str = "auto"
    shots_increment: int = 1000
    sweeps_per_size: int = 3
    mode: str = "sampled"             # "exact" | "sampled"
    seed: int = 0
    eval_every: int = 1
    max_shots: int = 1_000_000
    shot_budget: str = "per_z"        # "per_z" | "total"
    shuffle_coordinates: bool = False
    warmup_new_nodes: bool = True
    fill_mode: str = "identity"       # subnet growth: "identity" | "random"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.mode not in ("exact", "sampled"):
            raise ValueError(f"mode must be 'exact' or 'sampled', got {self.mode!r}")
        if self.mode == "sampled" and isinstance(self.initial_shots, int) \
                and self.initial_shots < 1:
            raise ValueError("sampled mode needs initial_shots >= 1 or 'auto'")
        if self.shot_budget not in ("per_z", "total"):
            raise ValueError(f"shot_budget must be 'per_z' or 'total', got {self.shot_budget!r}")
        if self.fill_mode not in ("identity", "random"):
            raise ValueError(f"fill_mode must be 'identity' or 'random', got {self.fill_mode!r}")


@dataclass
class HistoryRow:
    update_index: int
    n_qubits: int
    batch_loss: float
    test_loss: float
    test_accuracy: float
    shots: int
    batch_size: int


METRICS_COLUMNS = (
    "update_index", "n_qubits", "batch_loss", "test_loss",
    "test_accuracy", "shots", "batch_size",
)


def metrics_table(history: list[HistoryRow]) -> str:
    """Render history as tab-separated text, one row per update."""
    lines = ["\t".join(METRICS_COLUMNS)]
    for r in history:
        lines.append(
            f"{r.update_index}\t{r.n_qubits}\t{r.batch_loss:.12g}\t"
            f"{r.test_loss:.12g}\t{r.test_accuracy:.12g}\t{r.shots}\t{r.batch_size}"
        )
    return "\n".join(lines) + "\n"


@dataclass
class TrainerState:
    params: np.ndarray
    sweep_index: int = 0
    coordinate_cursor: int = 0
    shots_current: int = 0
    update_count: int = 0
    history: list[HistoryRow] = field(default_factory=list)


@dataclass
class TrainingData:
    """Everything one model size trains against: encoded train/test splits
    plus the encoder state that produced them (kept for checkpoints and for
    the batch/shot heuristics, which look along the first PCA direction)."""

    train: EncodedDataset
    test: EncodedDataset
    pca: PcaModel | None = None
    allocation: BitAllocation | None = None
    scores: np.ndarray | None = None
    class_labels: tuple[int, ...] = ()
    train_pca1: np.ndarray | None = None
    test_pca1: np.ndarray | None = None

    def __post_init__(self):
        samples = self.train.samples
        zs = sorted({z for z, _ in samples})
        self._z_strings = zs
        z_index = {z: i for i, z in enumerate(zs)}
        self._z_codes = np.fromiter((z_index[z] for z, _ in samples), dtype=np.int64,
                                    count=len(samples))
        self._targets = np.fromiter((self.train.class_table[z] for z in zs),
                                    dtype=np.int64, count=len(zs))

    def random_batch(self, size: int, rng: np.random.Generator
                     ) -> tuple[list[str], np.ndarray, np.ndarray]:
        """Distinct bitstrings, empirical weights and targets of a random
        batch drawn without replacement from the training samples."""
        n = len(self.train.samples)
        size = min(size, n)
        idx = rng.choice(n, size=size, replace=False)
        counts = np.bincount(self._z_codes[idx], minlength=len(self._z_strings))
        present = np.nonzero(counts)[0]
        zs = [self._z_strings[i] for i in present]
        weights = counts[present] / size
        return zs, weights, self._targets[present]

    def full_batch(self) -> tuple[list[str], np.ndarray, np.ndarray]:
        zs = self._z_strings
        weights = np.array([self.train.freq[z] for z in zs])
        return list(zs), weights, self._targets.copy()


def register_probs(topology: ansatz.NetTopology, params: np.ndarray,
                   zs: list[str]) -> np.ndarray:
    """Class-register distribution for each input bitstring, as one batched
    simulation: row i is the marginal over the 2**n_y register values for
    the input state |0...0>|z_i>."""
    n = topology.n_qubits
    n_y = topology.n_y
    if any(len(z) != topology.n_x for z in zs):
        raise ValueError(f"bitstrings must have length n_x = {topology.n_x}")
    amps = np.zeros((len(zs), 1 << n), dtype=np.complex128)
    rows = np.arange(len(zs))
    cols = np.fromiter((int(z, 2) for z in zs), dtype=np.int64, count=len(zs))
    amps[rows, cols] = 1.0
    ansatz.apply_net_raw(amps, topology, params)
    probs = np.abs(amps) ** 2
    return probs.reshape(len(zs), 1 << n_y, 1 << topology.n_x).sum(axis=2)


def _shot_estimate(probs: np.ndarray, weights: np.ndarray, shots: int,
                   shot_budget: str, rng: np.random.Generator) -> np.ndarray:
    """Finite-shot frequency estimates of the register distributions.

    Shots are drawn as shared uniforms classified by inverse CDF, so two
    evaluations seeded identically reuse the same underlying randomness
    (common random numbers): identical distributions give identical counts,
    and the differences entering the coordinate update see only the shot
    noise of the probability mass that actually moved.
    """
    pvals = probs / probs.sum(axis=1, keepdims=True)
    est = np.empty_like(pvals)
    k = pvals.shape[1]
    for i, w in enumerate(weights):
        n_i = shots if shot_budget == "per_z" else max(1, int(round(shots * w)))
        u = rng.random(n_i)
        outcomes = np.searchsorted(np.cumsum(pvals[i]), u, side="right")
        est[i] = np.bincount(np.minimum(outcomes, k - 1), minlength=k) / n_i
    return est


def _loss_eval(topology, params, zs, weights, targets, mode, shots, rng,
               shot_budget="per_z"):
    """One loss evaluation; returns (loss, per-z target-probability estimates)."""
    probs = register_probs(topology, params, zs)
    if mode == "exact":
        p = probs[np.arange(len(zs)), targets]
        return 1.0 - float(weights @ p), p
    if shots is None or shots < 1:
        raise ValueError("sampled mode needs shots >= 1")
    if rng is None:
        raise ValueError("sampled mode needs an rng")
    est = _shot_estimate(probs, weights, shots, shot_budget, rng)
    p = est[np.arange(len(zs)), targets]
    return 1.0 - float(weights @ p), p


def _collapse_batch(batch, class_table):
    agg: dict[str, float] = {}
    for z, w in batch:
        if z not in class_table:
            raise KeyError(f"bitstring {z!r} missing from the class table")
        agg[z] = agg.get(z, 0.0) + float(w)
    zs = sorted(agg)
    weights = np.array([agg[z] for z in zs])
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f"batch weights must sum to 1, got {weights.sum()}")
    targets = np.array([class_table[z] for z in zs], dtype=np.int64)
    return zs, weights, targets


def batch_loss(topology: ansatz.NetTopology, params: np.ndarray,
               batch: list[tuple[str, float]], class_table: dict[str, int],
               mode: str = "exact", shots: int | None = None,
               rng: np.random.Generator | None = None,
               shot_budget: str = "per_z") -> float:
    """Probability-of-wrong-answer loss of a weighted batch:
    ``1 - sum_z w(z) * P[class_register = C(z)]``."""
    zs, weights, targets = _collapse_batch(batch, class_table)
    loss, _ = _loss_eval(topology, params, zs, weights, targets, mode, shots, rng,
                         shot_budget)
    return loss


@dataclass
class UpdateResult:
    theta_star: float
    losses: tuple[float, float, float]   # L(t), L(t + pi/2), L(t + pi)
    k: float
    moved: bool
    new_loss: float


def coordinate_update(topology: ansatz.NetTopology, params: np.ndarray, j: int,
                      batch: list[tuple[str, float]], class_table: dict[str, int],
                      mode: str = "exact", shots: int | None = None,
                      rng: np.random.Generator | None = None,
                      shot_budget: str = "per_z") -> UpdateResult:
    """Exact single-coordinate update from three loss evaluations.

    Evaluates the batch loss at angle shifts 0, pi/2 and pi of coordinate j
    (same batch for all three; in sampled mode also the same shot seed),
    solves for the sinusoid minimizer and writes it into ``params[j]``.
    Coordinates whose sinusoid amplitude k is below tolerance (1e-12 exact,
    3 standard errors sampled) are left untouched.
    """
    if not 0 <= j < topology.n_params:
        raise IndexError(f"coordinate {j} out of range for p = {topology.n_params}")
    zs, weights, targets = _collapse_batch(batch, class_table)
    theta = float(params[j])

    shot_seed = None
    if mode == "sampled":
        source = rng if rng is not None else np.random.default_rng(0)
        shot_seed = int(source.integers(0, 2**63))

    def eval_at(offset: float):
        params[j] = theta + offset
        eval_rng = np.random.default_rng(shot_seed) if shot_seed is not None else None
        try:
            return _loss_eval(topology, params, zs, weights, targets, mode, shots,
                              eval_rng, shot_budget)
        finally:
            params[j] = theta

    l0, p0 = eval_at(0.0)
    l1, p1 = eval_at(0.5 * math.pi)
    l2, p2 = eval_at(math.pi)

    num = 2.0 * l1 - l2 - l0
    den = l2 - l0
    k = 0.5 * math.hypot(den, num)
    if mode == "exact":
        tol = EXACT_K_TOL
    else:
        # Common random numbers make the error of k a function of how much
        # probability mass actually moved between the three evaluations, with
        # a one-count floor; the plain per-evaluation standard error would
        # veto every coordinate whose amplitude is below the shot noise of
        # the absolute loss level, stalling warm-started models.
        floor = 1.0 / shots
        var_den = float(np.sum(weights**2 * np.maximum(np.abs(p2 - p0), floor))) / shots
        var_num = float(np.sum(
            weights**2 * np.maximum(np.abs(p1 - p0) + np.abs(p1 - p2), floor))) / shots
        tol = SAMPLED_K_SIGMAS * 0.5 * math.sqrt(var_den + var_num)
    if k < tol:
        return UpdateResult(theta, (l0, l1, l2), k, False, l0)
    theta_star = theta - math.atan2(num, den)
    params[j] = theta_star
    return UpdateResult(theta_star, (l0, l1, l2), k, True, 0.5 * (l0 + l2) - k)


def ks_batch_size(train_pca1: np.ndarray, test_pca1: np.ndarray,
                  threshold: float = 0.1, max_batch: int | None = None,
                  rng: np.random.Generator | None = None) -> int:
    """Smallest random-batch size whose first-PCA-direction empirical CDF is
    within ``threshold`` of the test CDF (two-sample KS statistic), grown
    geometrically and then refined by bisection.  Deterministic per rng."""
    train_pca1 = np.asarray(train_pca1, dtype=np.float64)
    test_pca1 = np.asarray(test_pca1, dtype=np.float64)
    if train_pca1.size == 0 or test_pca1.size == 0:
        raise ValueError("need nonempty train and test values")
    rng = rng if rng is not None else np.random.default_rng(0)
    cap = len(train_pca1) if max_batch is None else min(max_batch, len(train_pca1))

    def passes(size: int) -> bool:
        batch = rng.choice(train_pca1, size=size, replace=False)
        return stats.ks_2samp(batch, test_pca1).statistic <= threshold

    size = 1
    while size < cap and not passes(size):
        size *= 2
    if size >= cap:
        return cap
    if size == 1:
        return 1
    lo, hi = size // 2, size           # lo failed, hi passed
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if passes(mid):
            hi = mid
        else:
            lo = mid
    return hi


def wasserstein_shot_budget(class_pca1: list[np.ndarray],
                            max_shots: int = 1_000_000) -> int:
    """Starting shot count: inverse squared minimum pairwise Wasserstein-1
    distance along the first PCA direction, rounded up to a multiple of 100
    and capped when classes (nearly) coincide."""
    if len(class_pca1) < 2:
        raise ValueError("need at least 2 classes")
    w_min = math.inf
    for i in range(len(class_pca1)):
        for j in range(i + 1, len(class_pca1)):
            w = stats.wasserstein_distance(class_pca1[i], class_pca1[j])
            w_min = min(w_min, w)
    if w_min <= 0 or not math.isfinite(w_min):
        return max_shots
    shots = 100 * math.ceil(w_min ** -2 / 100.0)
    return min(shots, max_shots)


def evaluate(topology: ansatz.NetTopology, params: np.ndarray,
             dataset: EncodedDataset) -> tuple[float, float]:
    """Exact loss and accuracy over an encoded dataset.

    Loss weighs each distinct bitstring by its frequency against the
    dataset's majority table; the prediction for a sample is the argmax of
    the register distribution restricted to valid class indices (ties to the
    lowest class)."""
    zs = sorted(dataset.freq)
    probs = register_probs(topology, params, zs)
    weights = np.array([dataset.freq[z] for z in zs])
    targets = np.array([dataset.class_table[z] for z in zs], dtype=np.int64)
    loss = 1.0 - float(weights @ probs[np.arange(len(zs)), targets])
    preds = np.argmax(probs[:, : dataset.n_classes], axis=1)
    pred_by_z = dict(zip(zs, preds))
    hits = sum(1 for z, y in dataset.samples if pred_by_z[z] == y)
    return loss, hits / len(dataset.samples)


def _record(state: TrainerState, topology, data: TrainingData, new_loss: float,
            shots: int, batch_size: int, eval_every: int) -> None:
    due = state.update_count % max(1, eval_every) == 0 or not state.history
    if due:
        test_loss, test_acc = evaluate(topology, state.params, data.test)
    else:
        test_loss, test_acc = state.history[-1].test_loss, state.history[-1].test_accuracy
    state.history.append(HistoryRow(
        update_index=state.update_count,
        n_qubits=topology.n_qubits,
        batch_loss=new_loss,
        test_loss=test_loss,
        test_accuracy=test_acc,
        shots=shots,
        batch_size=batch_size,
    ))


def sweep(topology: ansatz.NetTopology, state: TrainerState, data: TrainingData,
          config: TrainConfig, order: list[int],
          rng: np.random.Generator) -> TrainerState:
    """One pass of exact coordinate updates over ``order``, a fresh random
    batch per update, recording batch/test metrics as it goes."""
    shots = state.shots_current if config.mode == "sampled" else None
    used_batch = min(config.batch_size, len(data.train.samples))
    for j in order:
        zs, weights, _ = data.random_batch(config.batch_size, rng)
        batch = list(zip(zs, weights))
        res = coordinate_update(topology, state.params, j, batch,
                                data.train.class_table, mode=config.mode,
                                shots=shots, rng=rng,
                                shot_budget=config.shot_budget)
        state.update_count += 1
        state.coordinate_cursor = j
        _record(state, topology, data, res.new_loss, shots or 0, used_batch,
                config.eval_every)
    state.sweep_index += 1
    return state


def resolve_shots(data: TrainingData, config: TrainConfig) -> int:
    """Initial shot count; 'auto' applies the Wasserstein heuristic."""
    if config.mode == "exact":
        return 0
    if isinstance(config.initial_shots, int):
        return config.initial_shots
    if data.train_pca1 is None:
        raise ValueError("initial_shots='auto' needs first-PCA-direction values")
    labels = np.fromiter((y for _, y in data.train.samples), dtype=np.int64,
                         count=len(data.train.samples))
    per_class = [data.train_pca1[labels == c] for c in np.unique(labels)]
    return wasserstein_shot_budget(per_class, max_shots=config.max_shots)


def train_model(data: TrainingData, topology: ansatz.NetTopology,
                config: TrainConfig, initial_params: np.ndarray | None = None,
                warmup_order: list[int] | None = None):
    """Full training run: ``sweeps_per_size`` sequential sweeps with the
    shot schedule ``initial_shots + sweep_index * shots_increment``.

    Returns a Checkpoint carrying parameters, encoder state, topology,
    config snapshot and the complete metrics history.  ``warmup_order``
    (used by sub-net growth) runs one extra sweep over the given coordinates
    before the full sweeps.
    """
    from . import checkpoints

    seq_init, seq_batch = np.random.SeedSequence(config.seed).spawn(2)
    rng_batch = np.random.default_rng(seq_batch)
    if initial_params is None:
        initial_params = ansatz.init_params(topology, np.random.default_rng(seq_init))
    state = TrainerState(params=np.array(initial_params, dtype=np.float64))
    shots0 = resolve_shots(data, config)
    state.shots_current = shots0

    # Pre-training snapshot so loss curves and growth boundaries have a start point.
    train_loss, _ = evaluate(topology, state.params, data.train)
    _record(state, topology, data, train_loss, shots0, 0, config.eval_every)

    if warmup_order:
        sweep(topology, state, data, config, list(warmup_order), rng_batch)
    for r in range(config.sweeps_per_size):
        if config.mode == "sampled":
            state.shots_current = shots0 + r * config.shots_increment
        order = list(range(topology.n_params))
        if config.shuffle_coordinates:
            order = list(rng_batch.permutation(topology.n_params))
        sweep(topology, state, data, config, order, rng_batch)
    return checkpoints.from_training(data, topology, state, config)
