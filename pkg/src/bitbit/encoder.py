"""Binary encoding pipeline: PCA compression, mutual-information scoring,
divisor-method bit apportionment, and per-sample truncation to bitstrings.

Bits are awarded one at a time by the Sainte-Lague rule (highest
``score / (2*bits + 1)`` quotient, ties to the lowest dimension index).
One-at-a-time grants make every smaller encoding a literal prefix of every
larger one, which is what lets a trained small model grow without
re-encoding the data it has already seen.  The grant order doubles as the
bit-to-position map: the k-th granted bit occupies string position k and
always carries the same binary digit of its dimension, no matter how far
the encoding later grows.
"""

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

MAX_MI_BINS = 64


@dataclass
class PcaModel:
    """Projection basis plus the training-range normalization to [0, 1]."""

    mean: np.ndarray              # (d,)
    components: np.ndarray        # (D, d), orthonormal rows, variance-ordered
    explained_variance: np.ndarray  # (D,)
    proj_min: np.ndarray          # (D,)
    proj_max: np.ndarray          # (D,)

    @property
    def n_dims(self) -> int:
        return self.components.shape[0]


@dataclass(frozen=True)
class BitAllocation:
    """Per-dimension bit counts and the order single bits were granted."""

    bits: tuple[int, ...]
    grant_order: tuple[int, ...]

    @property
    def total_bits(self) -> int:
        return len(self.grant_order)


@dataclass
class EncodedDataset:
    """Bitstring samples with labels, empirical frequencies, and the
    majority-class table."""

    samples: list[tuple[str, int]]
    freq: dict[str, float]
    class_table: dict[str, int]
    n_bits: int
    n_classes: int


def fit_pca(X: np.ndarray, D: int) -> PcaModel:
    """Mean-centered PCA basis with a deterministic sign convention.

    Rows are ordered by descending explained variance; each row is flipped so
    its largest-magnitude entry is positive.  Raises on degenerate data and
    on retained dimensions with no spread (those would break the min < max
    normalization invariant).
    """
    X = np.asarray(X, dtype=np.float64)
    N, d = X.shape
    if N < 2:
        raise ValueError(f"need at least 2 samples, got {N}")
    if not 1 <= D <= min(N, d):
        raise ValueError(f"D must be in [1, min(N, d)] = [1, {min(N, d)}], got {D}")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, svals, vt = np.linalg.svd(Xc, full_matrices=False)
    if not np.any(svals > 1e-12 * max(1.0, svals[0] if svals.size else 0.0)):
        raise ValueError("degenerate data: zero variance in all directions")
    components = vt[:D].copy()
    for row in components:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    explained = (svals[:D] ** 2) / (N - 1)
    proj = Xc @ components.T
    proj_min = proj.min(axis=0)
    proj_max = proj.max(axis=0)
    if np.any(proj_max <= proj_min):
        bad = int(np.argmax(proj_max <= proj_min))
        raise ValueError(f"retained dimension {bad} has zero spread; lower D")
    return PcaModel(mean, components, explained, proj_min, proj_max)


def project_unit(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Project onto the basis and min-max normalize into [0, 1], clipping
    points that fall outside the training range."""
    x = np.asarray(x, dtype=np.float64)
    proj = (x - model.mean) @ model.components.T
    unit = (proj - model.proj_min) / (model.proj_max - model.proj_min)
    return np.clip(unit, 0.0, 1.0)


def _equal_frequency_bins(values: np.ndarray, n_bins: int) -> np.ndarray:
    edges = np.quantile(values, np.arange(1, n_bins) / n_bins)
    return np.searchsorted(edges, values, side="right")


def mutual_information_scores(Xp: np.ndarray, Y: np.ndarray, n_bins: int) -> np.ndarray:
    """Per-dimension discrete mutual information I(bin; label) in bits,
    using equal-frequency binning."""
    Xp = np.asarray(Xp, dtype=np.float64)
    Y = np.asarray(Y)
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    _, y_idx = np.unique(Y, return_inverse=True)
    n_classes = int(y_idx.max()) + 1
    if n_classes < 2:
        raise ValueError("need at least 2 classes to score mutual information")
    N, D = Xp.shape
    p_y = np.bincount(y_idx, minlength=n_classes) / N
    scores = np.empty(D)
    for i in range(D):
        b = _equal_frequency_bins(Xp[:, i], n_bins)
        joint = np.bincount(b * n_classes + y_idx, minlength=n_bins * n_classes)
        joint = joint.reshape(n_bins, n_classes) / N
        p_b = joint.sum(axis=1)
        outer = np.outer(p_b, p_y)
        mask = joint > 0
        scores[i] = float(np.sum(joint[mask] * np.log2(joint[mask] / outer[mask])))
    return np.maximum(scores, 0.0)


def default_mi_bins(n_samples: int) -> int:
    return max(2, min(MAX_MI_BINS, math.isqrt(n_samples - 1) + 1))


def allocate_bits(scores: np.ndarray, B: int) -> BitAllocation:
    """Sainte-Lague apportionment of B bits over the score vector.

    Awards one bit at a time to the dimension with the highest
    ``score / (2*bits_so_far + 1)``, ties to the lowest index, so
    allocations nest across B by construction.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if B < 1:
        raise ValueError(f"B must be >= 1, got {B}")
    if np.any(scores < 0):
        raise ValueError("scores must be nonnegative")
    if not np.any(scores > 0):
        raise ValueError("at least one score must be positive")
    bits = np.zeros(len(scores), dtype=np.int64)
    grants = []
    for _ in range(B):
        winner = int(np.argmax(scores / (2 * bits + 1)))
        bits[winner] += 1
        grants.append(winner)
    return BitAllocation(bits=tuple(int(b) for b in bits), grant_order=tuple(grants))


def _grant_positions(alloc: BitAllocation) -> dict[int, list[int]]:
    """String positions owned by each dimension, in digit order."""
    positions: dict[int, list[int]] = {}
    for pos, dim in enumerate(alloc.grant_order):
        positions.setdefault(dim, []).append(pos)
    return positions


def binarize(xp: np.ndarray, alloc: BitAllocation) -> str:
    """Truncate a unit-interval vector to its allocated bits.

    Dimension i contributes ``min(floor(x_i * 2**b_i), 2**b_i - 1)`` written
    most-significant-first into the positions its bits were granted at.
    """
    return encode_samples(np.asarray(xp, dtype=np.float64)[None, :], alloc)[0]


def encode_samples(Xp: np.ndarray, alloc: BitAllocation) -> list[str]:
    """Vectorized :func:`binarize` over the rows of ``Xp``."""
    Xp = np.asarray(Xp, dtype=np.float64)
    N = Xp.shape[0]
    B = alloc.total_bits
    out = np.zeros((N, B), dtype=np.uint8)
    for dim, positions in _grant_positions(alloc).items():
        b = len(positions)
        v = np.minimum(np.floor(Xp[:, dim] * (1 << b)).astype(np.int64), (1 << b) - 1)
        for k, pos in enumerate(positions):
            out[:, pos] = (v >> (b - 1 - k)) & 1
    digits = out + ord("0")
    return [bytes(row).decode("ascii") for row in digits]


def build_class_table(samples: list[tuple[str, int]]) -> dict[str, int]:
    """Majority label per distinct bitstring, ties to the lowest label."""
    if not samples:
        raise ValueError("cannot build a class table from no samples")
    counts: dict[str, Counter] = {}
    for z, y in samples:
        counts.setdefault(z, Counter())[int(y)] += 1
    table = {}
    for z, ctr in counts.items():
        best = max(ctr.items(), key=lambda item: (item[1], -item[0]))
        table[z] = best[0]
    return table


def dataset_from_samples(samples: list[tuple[str, int]], n_classes: int | None = None,
                         class_table: dict[str, int] | None = None) -> EncodedDataset:
    """Assemble an EncodedDataset (frequencies + majority table) from samples."""
    if not samples:
        raise ValueError("empty sample list")
    n_bits = len(samples[0][0])
    if any(len(z) != n_bits for z, _ in samples):
        raise ValueError("all bitstrings must share one length")
    freq_counts = Counter(z for z, _ in samples)
    total = len(samples)
    freq = {z: c / total for z, c in freq_counts.items()}
    if class_table is None:
        class_table = build_class_table(samples)
    if n_classes is None:
        n_classes = max(y for _, y in samples) + 1
    return EncodedDataset(
        samples=list(samples),
        freq=freq,
        class_table=class_table,
        n_bits=n_bits,
        n_classes=n_classes,
    )


def encode_dataset(X: np.ndarray, Y: np.ndarray, B: int, D: int | None = None,
                   n_bins: int | None = None
                   ) -> tuple[PcaModel, BitAllocation, EncodedDataset]:
    """Full pipeline on a training matrix: fit PCA, score dimensions, allocate
    bits, and binarize every sample."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y)
    N, d = X.shape
    if D is None:
        D = min(d, 2 * B, N)
    if n_bins is None:
        n_bins = default_mi_bins(N)
    model = fit_pca(X, D)
    Xp = project_unit(model, X)
    scores = mutual_information_scores(Xp, Y, n_bins)
    alloc = allocate_bits(scores, B)
    zs = encode_samples(Xp, alloc)
    samples = list(zip(zs, (int(y) for y in Y)))
    n_classes = int(np.max(Y)) + 1
    return model, alloc, dataset_from_samples(samples, n_classes=n_classes)
