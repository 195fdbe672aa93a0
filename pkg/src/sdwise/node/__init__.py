"""Node data plane: forwarding pipeline, topology discovery and network functions."""

from .functions import GEO_NEXT_HOP, REGISTRY, geo_next_hop
from .runtime import CTRL, Node, NodeParams

__all__ = ["CTRL", "GEO_NEXT_HOP", "Node", "NodeParams", "REGISTRY", "geo_next_hop"]
