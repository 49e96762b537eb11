"""Channel capacity, capacity-achieving inputs and optimal tuning curves
for gamma inter-spike-interval neuron models."""

__version__ = "0.1.0"

from .capacity_solver import (  # noqa: E402
    CapacitySolution,
    Coding,
    DecoderPartition,
    InputEnsemble,
    KKTReport,
    capacity_bps,
    ensemble_mi,
    grid_capacity,
    hard_decoder,
    kkt_verify,
    marginal_info_density,
    monte_carlo_mi,
    particle_capacity,
)
from .neuron_channel import CountChannelConfig, GammaChannel  # noqa: E402

__all__ = [
    "CapacitySolution",
    "Coding",
    "CountChannelConfig",
    "DecoderPartition",
    "GammaChannel",
    "InputEnsemble",
    "KKTReport",
    "capacity_bps",
    "ensemble_mi",
    "grid_capacity",
    "hard_decoder",
    "kkt_verify",
    "marginal_info_density",
    "monte_carlo_mi",
    "particle_capacity",
]
