"""Online local training of two-compartment spiking networks with a sleep phase."""

from .config import RunConfig, parse_config
from .network import NetworkParams, forward_batch, init_network
from .neuron import NeuronHyper
from .train import Trainer, train_run

__all__ = ["NeuronHyper", "NetworkParams", "RunConfig", "Trainer", "forward_batch",
           "init_network", "parse_config", "train_run"]
__version__ = "0.1.0"
