"""Road topologies: restricted-corridor hybrid, urban grid, and highway.

Networks are directed edge graphs with per-edge lane counts, speed limits
and vehicle-class restrictions. Three builders produce the comparison
topologies; routing is free-flow travel-time Dijkstra.
"""

import heapq
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional


class ModelKind(Enum):
    HMM = "HMM"
    UMM = "UMM"
    HWM = "HWM"


class VehicleClass(Enum):
    METROBUS = "Metrobus"
    CAR = "Car"


METROBUS_ONLY = frozenset((VehicleClass.METROBUS,))
CAR_ONLY = frozenset((VehicleClass.CAR,))
BOTH = frozenset((VehicleClass.METROBUS, VehicleClass.CAR))

LANE_WIDTH = 3.5
# U-turn loops joining the two directions of a corridor road. Kept longer
# than one step of travel at any legal speed so a vehicle cannot jump a
# whole edge in a single update.
CONNECTOR_LENGTH = 50.0
CONNECTOR_SPEED = 13.89
METROBUS_DWELL = (20.0, 40.0)
ROADSIDE_DWELL = (5.0, 15.0)
TL_GREEN = 30.0


class NoRouteError(Exception):
    """Destination unreachable for the requested vehicle class."""


@dataclass(frozen=True)
class TopologyParams:
    corridor_length: float = 6380.0
    corridor_width: float = 1934.0
    metrobus_lanes_per_direction: int = 1
    metrobus_speed: float = 33.33
    main_road_lanes_per_direction: int = 3
    main_road_speed: float = 13.89
    hwm_lanes: int = 4
    hwm_speed: float = 33.3
    umm_lanes: int = 4
    umm_speed: float = 13.89
    metrobus_stations: int = 5
    main_road_stops: int = 13
    hwm_stops: int = 3
    umm_stops: int = 15
    umm_grid_rows: int = 4
    umm_grid_cols: int = 10
    metrobus_bidirectional: bool = True

    def validate(self) -> None:
        lanes = (self.metrobus_lanes_per_direction, self.main_road_lanes_per_direction,
                 self.hwm_lanes, self.umm_lanes)
        if any(n < 1 for n in lanes):
            raise ValueError("lane counts must be >= 1")
        speeds = (self.metrobus_speed, self.main_road_speed, self.hwm_speed, self.umm_speed)
        if any(v <= 0 for v in speeds):
            raise ValueError("speeds must be > 0")
        stations = (self.metrobus_stations, self.main_road_stops, self.hwm_stops, self.umm_stops)
        if any(n < 0 for n in stations):
            raise ValueError("station counts must be >= 0")
        if self.corridor_length <= 0 or self.corridor_width <= 0:
            raise ValueError("corridor dimensions must be > 0")


@dataclass(frozen=True)
class Edge:
    id: str
    from_node: str
    to_node: str
    length: float
    lane_count: int
    speed_limit: float
    priority: int
    allowed_class: frozenset


@dataclass(frozen=True)
class StopSign:
    pass


@dataclass(frozen=True)
class ProbabilisticSign:
    p: float
    w: float


@dataclass(frozen=True)
class Phase:
    duration: float
    green_edges: tuple


@dataclass(frozen=True)
class TrafficLight:
    phases: tuple  # of Phase

    @property
    def cycle(self) -> float:
        return sum(p.duration for p in self.phases)


@dataclass(frozen=True)
class Intersection:
    node_id: str
    control: object  # None | StopSign | ProbabilisticSign | TrafficLight
    approaches: tuple  # incoming edge ids, sorted


@dataclass(frozen=True)
class StopStation:
    edge_id: str
    offset: float
    dwell_min: float
    dwell_max: float
    serves_class: VehicleClass


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    detail: str


class RoadNetwork:
    """Immutable directed road graph plus stations and intersection controls."""

    def __init__(self, kind: ModelKind, nodes: dict, edges: dict,
                 intersections: dict, stations: tuple):
        self.kind = kind
        self.nodes = dict(nodes)            # node id -> (x, y)
        self.edges = dict(edges)            # edge id -> Edge
        self.intersections = dict(intersections)  # node id -> Intersection
        self.stations = tuple(stations)
        self._out = {}                      # node id -> [edge ids]
        for eid in sorted(self.edges):
            e = self.edges[eid]
            self._out.setdefault(e.from_node, []).append(eid)
        self._stations_by_edge = {}
        for st in sorted(self.stations, key=lambda s: (s.edge_id, s.offset)):
            self._stations_by_edge.setdefault(st.edge_id, []).append(st)

    def out_edges(self, node: str, klass: Optional[VehicleClass] = None):
        out = self._out.get(node, [])
        if klass is None:
            return list(out)
        return [eid for eid in out if klass in self.edges[eid].allowed_class]

    def stations_on(self, edge_id: str):
        return self._stations_by_edge.get(edge_id, [])

    def control_at(self, node: str):
        inter = self.intersections.get(node)
        return inter.control if inter is not None else None

    def class_nodes(self, klass: VehicleClass):
        """Nodes touching at least one edge the class may use."""
        seen = set()
        for e in self.edges.values():
            if klass in e.allowed_class:
                seen.add(e.from_node)
                seen.add(e.to_node)
        return sorted(seen)

    def position_on(self, edge_id: str, pos: float, lane: int = 0):
        """Project (edge, longitudinal pos, lane) to plane coordinates."""
        e = self.edges[edge_id]
        x0, y0 = self.nodes[e.from_node]
        x1, y1 = self.nodes[e.to_node]
        f = pos / e.length
        x = x0 + (x1 - x0) * f
        y = y0 + (y1 - y0) * f
        # lanes fan out symmetrically around the roadway centerline
        d = math.hypot(x1 - x0, y1 - y0)
        if d > 0 and e.lane_count > 1:
            ux, uy = (x1 - x0) / d, (y1 - y0) / d
            off = (lane - (e.lane_count - 1) / 2.0) * LANE_WIDTH
            x += uy * off
            y += -ux * off
        return (x, y)


def _spread_offsets(length: float, count: int):
    """count interior positions at uniform spacing length/(count+1)."""
    return [length * (k + 1) / (count + 1) for k in range(count)]


def _chain(prefix: str, nodes: list, coords: dict, length_total: float, blocks: int,
           lane_count: int, speed: float, allowed, priority: int, edges: dict):
    """Append a straight chain of `blocks` equal edges between listed nodes."""
    block_len = length_total / blocks
    for i in range(blocks):
        eid = f"{prefix}{i:02d}"
        edges[eid] = Edge(eid, nodes[i], nodes[i + 1], block_len, lane_count,
                          speed, priority, allowed)


def _corridor_direction(prefix: str, y: float, x_start: float, x_end: float, blocks: int,
                        lane_count: int, speed: float, allowed, priority: int,
                        nodes: dict, edges: dict):
    ids = []
    for i in range(blocks + 1):
        nid = f"{prefix}n{i:02d}"
        x = x_start + (x_end - x_start) * i / blocks
        nodes[nid] = (x, y)
        ids.append(nid)
    _chain(prefix, ids, nodes, abs(x_end - x_start), blocks, lane_count, speed,
           allowed, priority, edges)
    return ids


def _connect_ends(tag: str, end_a: str, start_b: str, end_b: str, start_a: str,
                  lane_count: int, allowed, nodes: dict, edges: dict):
    """Close two opposing chains into a loop with U-turn connector edges."""
    for eid, u, v in ((f"{tag}_turnE", end_a, start_b), (f"{tag}_turnW", end_b, start_a)):
        edges[eid] = Edge(eid, u, v, CONNECTOR_LENGTH, lane_count,
                          CONNECTOR_SPEED, 0, allowed)


def _build_hmm(p: TopologyParams):
    nodes, edges, inters = {}, {}, {}
    stations = []
    yc = p.corridor_width / 2.0
    L = p.corridor_length

    # restricted middle lanes, one full-length edge per direction
    nodes["mbE_a"], nodes["mbE_b"] = (0.0, yc - 2.0), (L, yc - 2.0)
    nodes["mbW_a"], nodes["mbW_b"] = (L, yc + 2.0), (0.0, yc + 2.0)
    edges["mbE"] = Edge("mbE", "mbE_a", "mbE_b", L, p.metrobus_lanes_per_direction,
                        p.metrobus_speed, 3, METROBUS_ONLY)
    directions = ["mbE"]
    if p.metrobus_bidirectional:
        edges["mbW"] = Edge("mbW", "mbW_a", "mbW_b", L, p.metrobus_lanes_per_direction,
                            p.metrobus_speed, 3, METROBUS_ONLY)
        directions.append("mbW")
        _connect_ends("mb", "mbE_b", "mbW_a", "mbW_b", "mbE_a", p.metrobus_lanes_per_direction,
                      METROBUS_ONLY, nodes, edges)
    for eid in directions:
        for off in _spread_offsets(L, p.metrobus_stations):
            stations.append(StopStation(eid, off, METROBUS_DWELL[0], METROBUS_DWELL[1],
                                        VehicleClass.METROBUS))

    # unrestricted one-way roads flanking the middle lanes, segmented one
    # edge per stop block with the stop at the block midpoint
    blocks = max(1, p.main_road_stops)
    _corridor_direction("mainE", yc - 14.0, 0.0, L, blocks, p.main_road_lanes_per_direction,
                        p.main_road_speed, CAR_ONLY, 2, nodes, edges)
    _corridor_direction("mainW", yc + 14.0, L, 0.0, blocks, p.main_road_lanes_per_direction,
                        p.main_road_speed, CAR_ONLY, 2, nodes, edges)
    _connect_ends("main", f"mainEn{blocks:02d}", "mainWn00", f"mainWn{blocks:02d}", "mainEn00",
                  p.main_road_lanes_per_direction, CAR_ONLY, nodes, edges)
    if p.main_road_stops > 0:
        for prefix in ("mainE", "mainW"):
            for k in range(blocks):
                stations.append(StopStation(f"{prefix}{k:02d}", (L / blocks) / 2.0,
                                            ROADSIDE_DWELL[0], ROADSIDE_DWELL[1],
                                            VehicleClass.CAR))

    return RoadNetwork(ModelKind.HMM, nodes, edges, inters, tuple(stations))


def _build_hwm(p: TopologyParams):
    nodes, edges = {}, {}
    stations = []
    yc = p.corridor_width / 2.0
    L = p.corridor_length
    blocks = max(1, p.hwm_stops)
    _corridor_direction("hwE", yc - 8.0, 0.0, L, blocks, p.hwm_lanes, p.hwm_speed,
                        CAR_ONLY, 1, nodes, edges)
    _corridor_direction("hwW", yc + 8.0, L, 0.0, blocks, p.hwm_lanes, p.hwm_speed,
                        CAR_ONLY, 1, nodes, edges)
    _connect_ends("hw", f"hwEn{blocks:02d}", "hwWn00", f"hwWn{blocks:02d}", "hwEn00",
                  p.hwm_lanes, CAR_ONLY, nodes, edges)
    if p.hwm_stops > 0:
        for prefix in ("hwE", "hwW"):
            for k in range(blocks):
                stations.append(StopStation(f"{prefix}{k:02d}", (L / blocks) / 2.0,
                                            ROADSIDE_DWELL[0], ROADSIDE_DWELL[1],
                                            VehicleClass.CAR))
    return RoadNetwork(ModelKind.HWM, nodes, edges, {}, tuple(stations))


def _build_umm(p: TopologyParams):
    rows, cols = p.umm_grid_rows, p.umm_grid_cols
    if rows < 2 or cols < 2:
        raise ValueError("UMM grid must be at least 2x2")
    nodes, edges, inters = {}, {}, {}
    dx = p.corridor_length / (cols - 1)
    dy = p.corridor_width / (rows - 1)

    def nid(r, c):
        return f"n{r}_{c}"

    for r in range(rows):
        for c in range(cols):
            nodes[nid(r, c)] = (c * dx, r * dy)

    def add_street(r0, c0, r1, c1, tag):
        length = math.hypot((c1 - c0) * dx, (r1 - r0) * dy)
        for u, v, d in ((nid(r0, c0), nid(r1, c1), "f"), (nid(r1, c1), nid(r0, c0), "b")):
            eid = f"g{tag}_{r0}_{c0}{d}"
            edges[eid] = Edge(eid, u, v, length, p.umm_lanes, p.umm_speed, 1, BOTH)

    for r in range(rows):
        for c in range(cols - 1):
            add_street(r, c, r, c + 1, "H")
    for r in range(rows - 1):
        for c in range(cols):
            add_street(r, c, r + 1, c, "V")

    # every non-boundary node is a controlled junction; signal type
    # alternates so both stop-sign and light behavior appear in one run
    for r in range(1, rows - 1):
        for c in range(1, cols - 1):
            node = nid(r, c)
            approaches = tuple(sorted(e.id for e in edges.values() if e.to_node == node))
            if (r + c) % 2 == 0:
                ns = tuple(sorted(e for e in approaches if "gV" in e))
                ew = tuple(sorted(e for e in approaches if "gH" in e))
                control = TrafficLight((Phase(TL_GREEN, ns), Phase(TL_GREEN, ew)))
            else:
                control = StopSign()
            inters[node] = Intersection(node, control, approaches)

    stations = []
    horiz = sorted(eid for eid in edges if eid.startswith("gH"))
    if p.umm_stops > 0 and horiz:
        for k in range(p.umm_stops):
            eid = horiz[(k * len(horiz)) // p.umm_stops]
            st_edge = edges[eid]
            stations.append(StopStation(eid, st_edge.length / 2.0, ROADSIDE_DWELL[0],
                                        ROADSIDE_DWELL[1], VehicleClass.CAR))
    return RoadNetwork(ModelKind.UMM, nodes, edges, inters, tuple(stations))


def build_topology(params: TopologyParams, kind: ModelKind) -> RoadNetwork:
    """Build one of the three comparison topologies from its parameters."""
    params.validate()
    if kind is ModelKind.HMM:
        return _build_hmm(params)
    if kind is ModelKind.UMM:
        return _build_umm(params)
    if kind is ModelKind.HWM:
        return _build_hwm(params)
    raise ValueError(f"unknown model kind: {kind}")


def shortest_route(net: RoadNetwork, origin: str, dest: str,
                   klass: VehicleClass) -> list:
    """Minimum free-flow-travel-time path as an edge-id list.

    Cost of an edge is length / speed_limit, restricted to edges whose
    allowed_class contains `klass`. Equal-cost paths resolve to the
    lexicographically smallest edge-id sequence.
    """
    if origin not in net.nodes:
        raise KeyError(f"unknown origin node: {origin}")
    if dest not in net.nodes:
        raise KeyError(f"unknown destination node: {dest}")
    if origin == dest:
        return []
    heap = [(0.0, (), origin)]
    settled = set()
    while heap:
        cost, path, node = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        if node == dest:
            return list(path)
        for eid in net.out_edges(node, klass):
            e = net.edges[eid]
            if e.to_node in settled:
                continue
            heapq.heappush(heap, (cost + e.length / e.speed_limit, path + (eid,), e.to_node))
    raise NoRouteError(f"no {klass.value} route from {origin} to {dest}")


def route_cost(net: RoadNetwork, route) -> float:
    return sum(net.edges[eid].length / net.edges[eid].speed_limit for eid in route)


def validate_network(net: RoadNetwork) -> list:
    """Check structural invariants; violations are returned, never raised."""
    out = []
    for eid, e in sorted(net.edges.items()):
        if e.length <= 0:
            out.append(Violation("BadEdgeField", eid, "length must be > 0"))
        if e.lane_count < 1:
            out.append(Violation("BadEdgeField", eid, "lane_count must be >= 1"))
        if e.speed_limit <= 0:
            out.append(Violation("BadEdgeField", eid, "speed_limit must be > 0"))
        if not e.allowed_class:
            out.append(Violation("BadEdgeField", eid, "allowed_class empty"))
        for endpoint in (e.from_node, e.to_node):
            if endpoint not in net.nodes:
                out.append(Violation("DanglingEndpoint", eid, f"undefined node {endpoint}"))
    for st in net.stations:
        e = net.edges.get(st.edge_id)
        if e is None:
            out.append(Violation("StationMissingEdge", st.edge_id, "station on unknown edge"))
            continue
        if not (0 <= st.offset < e.length):
            out.append(Violation("OffsetOutOfRange", st.edge_id,
                                 f"offset {st.offset} outside [0, {e.length})"))
        if not (0 <= st.dwell_min <= st.dwell_max):
            out.append(Violation("BadDwell", st.edge_id,
                                 f"dwell range ({st.dwell_min}, {st.dwell_max})"))
    for node, inter in sorted(net.intersections.items()):
        if node not in net.nodes:
            out.append(Violation("DanglingControlNode", node, "control on unknown node"))
        for eid in inter.approaches:
            if eid not in net.edges:
                out.append(Violation("BadControl", node, f"approach {eid} not an edge"))
        c = inter.control
        if isinstance(c, ProbabilisticSign):
            if not (0 <= c.p <= 1):
                out.append(Violation("BadControl", node, f"p={c.p} outside [0,1]"))
            if c.w <= 0:
                out.append(Violation("BadControl", node, f"w={c.w} must be > 0"))
        elif isinstance(c, TrafficLight):
            if c.cycle <= 0:
                out.append(Violation("BadControl", node, "cycle length must be > 0"))
            covered = set()
            for ph in c.phases:
                covered.update(ph.green_edges)
            if not covered >= set(inter.approaches):
                out.append(Violation("BadControl", node, "phase plan misses approaches"))
    for klass in VehicleClass:
        out.extend(_class_connectivity(net, klass))
    return out


def _class_connectivity(net: RoadNetwork, klass: VehicleClass):
    allowed = [e for e in net.edges.values() if klass in e.allowed_class]
    if not allowed:
        return []
    parent = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in allowed:
        ra, rb = find(e.from_node), find(e.to_node)
        if ra != rb:
            parent[ra] = rb
    roots = {find(e.from_node) for e in allowed}
    if len(roots) > 1:
        return [Violation("ClassUnreachable", klass.value,
                          f"{len(roots)} disconnected components")]
    return []


# ---------------------------------------------------------------------------
# line-oriented text serialization

def _f(v: float) -> str:
    return f"{v:.6f}"


def _class_name(allowed: frozenset) -> str:
    if allowed == BOTH:
        return "Both"
    if allowed == METROBUS_ONLY:
        return "Metrobus"
    return "Car"


def _class_set(name: str) -> frozenset:
    try:
        return {"Both": BOTH, "Metrobus": METROBUS_ONLY, "Car": CAR_ONLY}[name]
    except KeyError:
        raise ValueError(f"unknown vehicle class: {name}")


def save_network(net: RoadNetwork) -> str:
    lines = [f"NETWORK {net.kind.value}"]
    for nid in sorted(net.nodes):
        x, y = net.nodes[nid]
        lines.append(f"NODE {nid} {_f(x)} {_f(y)}")
    for eid in sorted(net.edges):
        e = net.edges[eid]
        lines.append(f"EDGE {e.id} {e.from_node} {e.to_node} {_f(e.length)} "
                     f"{e.lane_count} {_f(e.speed_limit)} {e.priority} {_class_name(e.allowed_class)}")
    for st in sorted(net.stations, key=lambda s: (s.edge_id, s.offset)):
        lines.append(f"STATION {st.edge_id} {_f(st.offset)} {_f(st.dwell_min)} "
                     f"{_f(st.dwell_max)} {st.serves_class.value}")
    for node in sorted(net.intersections):
        c = net.intersections[node].control
        if c is None:
            lines.append(f"CONTROL {node} None")
        elif isinstance(c, StopSign):
            lines.append(f"CONTROL {node} StopSign")
        elif isinstance(c, ProbabilisticSign):
            lines.append(f"CONTROL {node} ProbabilisticSign {_f(c.p)} {_f(c.w)}")
        elif isinstance(c, TrafficLight):
            parts = []
            for ph in c.phases:
                parts.append(_f(ph.duration))
                parts.append(",".join(ph.green_edges))
            lines.append(f"CONTROL {node} TrafficLight " + " ".join(parts))
        else:
            raise ValueError(f"unserializable control: {c!r}")
    return "\n".join(lines) + "\n"


def load_network(text: str) -> RoadNetwork:
    kind = None
    nodes, edges, controls = {}, {}, {}
    stations = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "NETWORK":
                kind = ModelKind(parts[1])
            elif tag == "NODE":
                nodes[parts[1]] = (float(parts[2]), float(parts[3]))
            elif tag == "EDGE":
                eid = parts[1]
                edges[eid] = Edge(eid, parts[2], parts[3], float(parts[4]), int(parts[5]),
                                  float(parts[6]), int(parts[7]), _class_set(parts[8]))
            elif tag == "STATION":
                stations.append(StopStation(parts[1], float(parts[2]), float(parts[3]),
                                            float(parts[4]), VehicleClass(parts[5])))
            elif tag == "CONTROL":
                node, ckind = parts[1], parts[2]
                if ckind == "None":
                    controls[node] = None
                elif ckind == "StopSign":
                    controls[node] = StopSign()
                elif ckind == "ProbabilisticSign":
                    controls[node] = ProbabilisticSign(float(parts[3]), float(parts[4]))
                elif ckind == "TrafficLight":
                    rest = parts[3:]
                    phases = []
                    for i in range(0, len(rest), 2):
                        phases.append(Phase(float(rest[i]), tuple(rest[i + 1].split(","))))
                    controls[node] = TrafficLight(tuple(phases))
                else:
                    raise ValueError(f"unknown control kind: {ckind}")
            else:
                raise ValueError(f"unknown record: {tag}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    if kind is None:
        raise ValueError("missing NETWORK header line")
    inters = {}
    for node, control in controls.items():
        approaches = tuple(sorted(e.id for e in edges.values() if e.to_node == node))
        inters[node] = Intersection(node, control, approaches)
    return RoadNetwork(kind, nodes, edges, inters, tuple(stations))
