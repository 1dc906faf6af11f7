"""Length-penalized Wasserstein approximation of measures by connected networks."""

from wh1.geometry import Network, network_length, project_to_network, find_cycles, is_connected

__all__ = [
    "Network",
    "network_length",
    "project_to_network",
    "find_cycles",
    "is_connected",
]
