"""Channel-aware discrete semantic coding over QAM links."""

__version__ = "0.1.0"

from .capacity import CapacityResult, blahut_arimoto, entropy, mutual_information
from .channel import AwgnChannel, analytic_ser, dmc_analytic, dmc_monte_carlo, mc_ser, transmit
from .constellation import Constellation, make_qam, map_indices, nearest_index
from .pipeline import Metrics, Model, TrainConfig, evaluate_sweep, forward_eval, forward_train, train
from .quantizer import (
    Codebook,
    assign_nearest,
    init_codebook,
    perplexity,
    quantize_gumbel,
    quantize_ste,
    usage_distribution,
    vq_losses,
)
from .transport import SinkhornResult, grad_wrt_source, qam_ground_cost, sinkhorn, wasserstein_exact

__all__ = [
    "AwgnChannel",
    "CapacityResult",
    "Codebook",
    "Constellation",
    "Metrics",
    "Model",
    "SinkhornResult",
    "TrainConfig",
    "analytic_ser",
    "assign_nearest",
    "blahut_arimoto",
    "dmc_analytic",
    "dmc_monte_carlo",
    "entropy",
    "evaluate_sweep",
    "forward_eval",
    "forward_train",
    "grad_wrt_source",
    "init_codebook",
    "make_qam",
    "map_indices",
    "mc_ser",
    "mutual_information",
    "nearest_index",
    "perplexity",
    "qam_ground_cost",
    "quantize_gumbel",
    "quantize_ste",
    "sinkhorn",
    "train",
    "transmit",
    "usage_distribution",
    "vq_losses",
    "wasserstein_exact",
]
