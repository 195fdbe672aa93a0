"""Controller plane: topology view, rule synthesis, multicast and localization."""

from .core import CTRL, STRATEGIES, Controller, ControllerParams, ResourceStore, TopologyView, hop_table
from .localization import multilaterate, rssi_localize, rssi_to_distance
from .paths import NoRoute, greedy_chain, shortest_path
from .steiner import SteinerTree, fermat_point, mst_length, nearest_node, steiner_tree

__all__ = [
    "CTRL", "STRATEGIES", "Controller", "ControllerParams", "NoRoute", "ResourceStore", "SteinerTree",
    "TopologyView", "fermat_point", "greedy_chain", "hop_table", "mst_length", "multilaterate",
    "nearest_node", "rssi_localize", "rssi_to_distance", "shortest_path", "steiner_tree",
]
