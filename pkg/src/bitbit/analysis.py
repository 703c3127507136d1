"""Landscape instrumentation: per-coordinate sinusoid constants, amplitude
statistics over sampled coordinates, parameter-shift gradients, and a plain
gradient-descent baseline for comparison curves.

The per-coordinate amplitude ``k = sqrt(gamma**2 + sigma**2)`` doubles as the
coordinate-wise smoothness constant; watching its distribution widen during
training is what shows gradient methods would need a shrinking learning rate
while the exact update never slows down.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import ansatz, trainer
from .encoder import EncodedDataset


@dataclass
class CoordinateProfile:
    j: int
    alpha: float
    gamma: float
    sigma: float
    k: float
    theta_star: float

    def loss_at(self, theta: float) -> float:
        return 1.0 - self.alpha - self.gamma * math.cos(theta) \
            - self.sigma * math.sin(theta)


def _full_batch(dataset: EncodedDataset) -> list[tuple[str, float]]:
    return sorted(dataset.freq.items())


def _loss_with(topology, params, j, offset, batch, table) -> float:
    probe = params.copy()
    probe[j] += offset
    return trainer.batch_loss(topology, probe, batch, table)


def coordinate_profile(topology: ansatz.NetTopology, params: np.ndarray, j: int,
                       dataset: EncodedDataset) -> CoordinateProfile:
    """Exact sinusoid constants of coordinate j from three loss evaluations
    on the full dataset."""
    batch = _full_batch(dataset)
    table = dataset.class_table
    theta = float(params[j])
    l0 = _loss_with(topology, params, j, 0.0, batch, table)
    l1 = _loss_with(topology, params, j, 0.5 * math.pi, batch, table)
    l2 = _loss_with(topology, params, j, math.pi, batch, table)
    cos_part = 0.5 * (l2 - l0)            # k * cos(theta - theta*)
    sin_part = 0.5 * (2.0 * l1 - l0 - l2)  # k * sin(theta - theta*)
    k = math.hypot(cos_part, sin_part)
    theta_star = theta - math.atan2(sin_part, cos_part)
    alpha = 1.0 - 0.5 * (l0 + l2)
    return CoordinateProfile(
        j=j,
        alpha=alpha,
        gamma=k * math.cos(theta_star),
        sigma=k * math.sin(theta_star),
        k=k,
        theta_star=theta_star,
    )


@dataclass
class KjStatistics:
    mean: float
    max: float
    histogram: np.ndarray
    bin_edges: np.ndarray
    k_values: np.ndarray
    coordinates: np.ndarray


def kj_statistics(topology: ansatz.NetTopology, params: np.ndarray,
                  dataset: EncodedDataset, n_coords: int = 50,
                  rng: np.random.Generator | None = None) -> KjStatistics:
    """Amplitude statistics over ``n_coords`` distinct coordinates sampled
    uniformly; 30 uniform histogram bins over [0, max k]."""
    p = topology.n_params
    if n_coords > p:
        raise ValueError(f"n_coords = {n_coords} exceeds parameter count {p}")
    rng = rng if rng is not None else np.random.default_rng(0)
    coords = rng.choice(p, size=n_coords, replace=False)
    ks = np.array([coordinate_profile(topology, params, int(j), dataset).k
                   for j in coords])
    k_max = float(ks.max())
    hist, edges = np.histogram(ks, bins=30, range=(0.0, k_max if k_max > 0 else 1.0))
    return KjStatistics(
        mean=float(ks.mean()), max=k_max, histogram=hist, bin_edges=edges,
        k_values=ks, coordinates=coords,
    )


def parameter_shift_gradient(topology: ansatz.NetTopology, params: np.ndarray,
                             j: int, dataset: EncodedDataset) -> float:
    """dL/dtheta_j = [L(theta + pi/2) - L(theta - pi/2)] / 2, exact for the
    single-coordinate sinusoid."""
    batch = _full_batch(dataset)
    table = dataset.class_table
    plus = _loss_with(topology, params, j, 0.5 * math.pi, batch, table)
    minus = _loss_with(topology, params, j, -0.5 * math.pi, batch, table)
    return 0.5 * (plus - minus)


@dataclass
class GdRecord:
    step: int
    n_evals: int
    loss: float
    grad_norm: float
    diverged: bool


def gradient_descent_baseline(topology: ansatz.NetTopology,
                              init_params: np.ndarray, dataset: EncodedDataset,
                              learning_rate: float, steps: int,
                              divergence_tol: float = 1e-9) -> list[GdRecord]:
    """Full-gradient descent with parameter-shift gradients, recording loss
    per cumulative evaluation count.  Loss increases beyond tolerance are
    flagged on the record, never hidden."""
    params = np.array(init_params, dtype=np.float64)
    batch = _full_batch(dataset)
    table = dataset.class_table
    p = topology.n_params
    history = [GdRecord(step=0, n_evals=0,
                        loss=trainer.batch_loss(topology, params, batch, table),
                        grad_norm=math.nan, diverged=False)]
    evals = 0
    for step in range(1, steps + 1):
        grad = np.array([parameter_shift_gradient(topology, params, j, dataset)
                         for j in range(p)])
        evals += 2 * p
        params -= learning_rate * grad
        loss = trainer.batch_loss(topology, params, batch, table)
        diverged = loss > history[-1].loss + divergence_tol
        history.append(GdRecord(step=step, n_evals=evals, loss=loss,
                                grad_norm=float(np.linalg.norm(grad)),
                                diverged=diverged))
    return history


def statistics_table(rows: list[tuple]) -> str:
    """Render (label, mean, max) statistics rows as tab-separated text."""
    lines = ["label\tmean_k\tmax_k"]
    for label, mean, kmax in rows:
        lines.append(f"{label}\t{mean:.12g}\t{kmax:.12g}")
    return "\n".join(lines) + "\n"
