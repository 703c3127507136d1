"""Binary-encoded variational quantum classifiers on a dense statevector
simulator: mutual-information bit encoding, optimizer-free exact coordinate
training, and sub-net initialization for growing trained models.
"""

from . import analysis, ansatz, checkpoints, cli, datasets, encoder, sim, subnet, trainer
from .ansatz import NetTopology, build_topology, init_params, parameter_count
from .checkpoints import Checkpoint, load_checkpoint, save_checkpoint
from .encoder import (
    BitAllocation,
    EncodedDataset,
    PcaModel,
    allocate_bits,
    binarize,
    build_class_table,
    encode_dataset,
    fit_pca,
    mutual_information_scores,
    project_unit,
)
from .sim import (
    ClassRegister,
    PauliRotation,
    StateVector,
    apply_pauli_rotation,
    class_distribution,
    new_basis_state,
    sample_register,
)
from .subnet import SubnetMapping, grow_allocation, grow_and_train_chain, grow_params, map_subnet
from .trainer import (
    TrainConfig,
    TrainingData,
    TrainerState,
    batch_loss,
    coordinate_update,
    evaluate,
    ks_batch_size,
    sweep,
    train_model,
    wasserstein_shot_budget,
)

__version__ = "0.1.0"
