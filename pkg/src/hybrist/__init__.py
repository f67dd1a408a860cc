"""Vehicular mobility generation and trace-driven ad-hoc network simulation."""

from hybrist.roadnet import (
    ModelKind,
    VehicleClass,
    TopologyParams,
    RoadNetwork,
    NoRouteError,
    build_topology,
    shortest_route,
    validate_network,
    save_network,
    load_network,
)

__all__ = [
    "ModelKind",
    "VehicleClass",
    "TopologyParams",
    "RoadNetwork",
    "NoRouteError",
    "build_topology",
    "shortest_route",
    "validate_network",
    "save_network",
    "load_network",
]
