"""Microscopic vehicle movement over a road network.

Fixed-step simulation: per-vehicle speed updates follow the Krauss
car-following rule (acceleration-bounded, safe-speed-capped, random
dawdling), with stop stations, stop signs, probabilistic signs and
traffic lights expressed as standing walls at the relevant positions.
A run is fully determined by (network, config); every random draw comes
from a per-vehicle stream derived from (seed, vehicle id).
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from hybrist.rng import split_stream
from hybrist.roadnet import (
    ModelKind,
    NoRouteError,
    ProbabilisticSign,
    RoadNetwork,
    StopSign,
    TrafficLight,
    VehicleClass,
    shortest_route,
)


class RouteExhausted(Exception):
    """Vehicle advanced past the end of its final route edge."""


class Mode(Enum):
    DRIVING = "driving"
    QUEUED = "queued"
    DWELLING = "dwelling"
    PAUSED = "paused"


class Turn(Enum):
    LEFT = "left"
    RIGHT = "right"
    STRAIGHT = "straight"


TURN_WEIGHTS = {Turn.LEFT: 0.25, Turn.RIGHT: 0.25, Turn.STRAIGHT: 0.5}


@dataclass(frozen=True)
class MobilityConfig:
    dt: float = 1.0
    accel: float = 2.6
    decel: float = 4.5
    tau: float = 1.0
    sigma: float = 0.5
    min_gap: float = 2.5
    rwp_pause: float = 10.0
    rwp_speed_min: float = 1.0
    rwp_speed_max: float = 13.89
    ssm_stop_time: float = 2.0
    duration: float = 1000.0
    vehicle_count: int = 160
    seed: int = 1
    metrobus_fraction: float = 0.1

    def validate(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.accel <= 0 or self.decel <= 0:
            raise ValueError("accel and decel must be > 0")
        if self.tau < self.dt:
            raise ValueError("tau must be >= dt")
        if not (0 <= self.sigma <= 1):
            raise ValueError("sigma must be in [0, 1]")
        if self.rwp_speed_min > self.rwp_speed_max:
            raise ValueError("rwp speed range inverted")
        if self.vehicle_count <= 0:
            raise ValueError("vehicle_count must be > 0")
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if self.min_gap <= 0:
            raise ValueError("min_gap must be > 0")
        if not (0 <= self.metrobus_fraction <= 1):
            raise ValueError("metrobus_fraction must be in [0, 1]")
        if self.ssm_stop_time < 0:
            raise ValueError("ssm_stop_time must be >= 0")


@dataclass
class VehicleState:
    id: int
    klass: VehicleClass
    edge: str
    lane: int
    pos: float
    speed: float
    route: list                      # remaining edge ids after the current one
    mode: Mode = Mode.DRIVING
    mode_until: float = 0.0          # resume time for DWELLING / PAUSED
    head_since: Optional[float] = None
    released: bool = False
    next_station_ix: int = 0
    dest: Optional[str] = None


@dataclass(frozen=True)
class TraceRecord:
    time: float
    vehicle: int
    x: float
    y: float
    speed: float
    # simulator-internal context, absent on traces parsed from text
    edge: Optional[str] = None
    lane: Optional[int] = None
    pos: Optional[float] = None


@dataclass(frozen=True)
class MobilityTrace:
    records: tuple
    config_echo: Optional[MobilityConfig]
    network_kind: Optional[ModelKind]

    def vehicles(self):
        return sorted({r.vehicle for r in self.records})

    def span(self):
        if not self.records:
            return (0.0, 0.0)
        return (self.records[0].time, max(r.time for r in self.records))


# ---------------------------------------------------------------------------
# car-following primitives

def safe_speed(leader_speed: float, gap: float, follower_speed: float,
               cfg: MobilityConfig) -> float:
    """Krauss safe speed: no collision if both vehicles brake at cfg.decel.

    gap is the usable clearance to the leader (separation minus minimum
    gap); the result may exceed any speed limit, callers clamp.
    """
    denom = cfg.tau + (follower_speed + leader_speed) / (2.0 * cfg.decel)
    v = leader_speed + (gap - leader_speed * cfg.tau) / denom
    return max(0.0, v)


def _stop_travel(speed: float, b: float, dt: float) -> float:
    """Distance covered braking at b per step until standstill, excluding
    the current step."""
    if speed <= 0:
        return 0.0
    n = int(speed / (b * dt))
    return dt * (n * speed - b * dt * n * (n + 1) / 2.0)


def _max_speed_for_travel(budget: float, b: float, dt: float) -> float:
    """Largest v with v*dt + _stop_travel(v) <= budget (exact inversion)."""
    if budget <= 0:
        return 0.0
    k = 0
    while True:
        v = (budget + b * dt * dt * k * (k + 1) / 2.0) / ((k + 1) * dt)
        if v <= (k + 1) * b * dt + 1e-12 or k > 20000:
            return max(0.0, v)
        k += 1


def _discrete_safe_speed(leader_speed: float, gap: float, cfg: MobilityConfig) -> float:
    """Exact discrete-time cap: the follower can always stop behind the
    leader's worst-case stopping point.

    The linearized safe_speed slightly overshoots under hard braking with
    a finite step, so step_vehicle applies both. Leaders may shed up to
    decel + sigma*accel of speed per step (braking plus dawdling)."""
    b_lead = cfg.decel + cfg.sigma * cfg.accel
    budget = gap + _stop_travel(leader_speed, b_lead, cfg.dt)
    return _max_speed_for_travel(budget, cfg.decel, cfg.dt)


def step_vehicle(v: VehicleState, leader, cfg: MobilityConfig,
                 net: RoadNetwork, rng) -> VehicleState:
    """Advance one vehicle by cfg.dt.

    leader, when present, is any object with .pos and .speed where pos is
    measured on v's edge axis (values past edge length describe a vehicle
    or wall beyond the downstream node). Raises RouteExhausted if the
    vehicle would run past the end of its final edge.
    """
    e = net.edges[v.edge]
    v_des = min(v.speed + cfg.accel * cfg.dt, e.speed_limit)
    if leader is not None:
        gap = leader.pos - v.pos - cfg.min_gap
        v_des = min(v_des, safe_speed(leader.speed, gap, v.speed, cfg),
                    _discrete_safe_speed(leader.speed, gap, cfg))
    if v.route:
        nxt = net.edges[v.route[0]]
        if nxt.speed_limit < v_des:
            # brake in advance so the landing clamp stays infinitesimal
            d = max(0.0, e.length - v.pos - v.speed * cfg.dt)
            v_des = min(v_des, math.sqrt(nxt.speed_limit ** 2 + 2.0 * cfg.decel * d))
    v_new = max(0.0, v_des - cfg.sigma * cfg.accel * cfg.dt * rng.random())
    new_pos = v.pos + v_new * cfg.dt
    if new_pos <= e.length:
        v.pos = new_pos
        v.speed = v_new
        return v
    if not v.route:
        raise RouteExhausted(f"vehicle {v.id} ran out of route on {v.edge}")
    rem = new_pos - e.length
    nxt = net.edges[v.route[0]]
    v.edge = v.route.pop(0)
    v.lane = min(v.lane, nxt.lane_count - 1)
    v.pos = min(rem, nxt.length)
    v.speed = min(v_new, nxt.speed_limit)
    v.next_station_ix = 0
    return v


# ---------------------------------------------------------------------------
# intersection / waypoint behavior

def ssm_decision(arrived_at_stop: bool, wait_elapsed: float, queue_ahead: int,
                 cfg: MobilityConfig) -> bool:
    """Stop-sign service: True means proceed. FIFO, one head at a time."""
    if not arrived_at_stop:
        return True
    if queue_ahead > 0:
        return False
    return wait_elapsed >= cfg.ssm_stop_time


def ptsm_decision(p: float, w: float, rng) -> float:
    """Probabilistic sign: wait uniform in [0, w] with probability p, else 0."""
    if not (0.0 <= p <= 1.0):
        raise ValueError("p must be in [0, 1]")
    if w <= 0:
        raise ValueError("w must be > 0")
    if rng.random() < p:
        return rng.uniform(0.0, w)
    return 0.0


def tlm_phase(t: float, plan: TrafficLight):
    """Active phase at time t; half-open intervals, wraps modulo the cycle."""
    cycle = plan.cycle
    if cycle <= 0:
        raise ValueError("phase plan cycle must be > 0")
    s = t % cycle
    acc = 0.0
    for ph in plan.phases:
        acc += ph.duration
        if s < acc:
            return ph
    return plan.phases[-1]


def manhattan_turn(rng, available=(Turn.LEFT, Turn.RIGHT, Turn.STRAIGHT)) -> Turn:
    """Grid turning draw: left 0.25, right 0.25, straight 0.5, renormalized
    proportionally over the available options."""
    opts = [t for t in (Turn.LEFT, Turn.RIGHT, Turn.STRAIGHT) if t in set(available)]
    if not opts:
        raise ValueError("no turn options available")
    total = sum(TURN_WEIGHTS[t] for t in opts)
    x = rng.random() * total
    acc = 0.0
    for t in opts:
        acc += TURN_WEIGHTS[t]
        if x < acc:
            return t
    return opts[-1]


def rwp_next(current, area, cfg: MobilityConfig, rng):
    """Random-waypoint draw: uniform waypoint in area, uniform speed,
    configured pause. area = (xmin, ymin, xmax, ymax)."""
    xmin, ymin, xmax, ymax = area
    if not (xmin <= current[0] <= xmax and ymin <= current[1] <= ymax):
        raise ValueError("current position outside area")
    wp = (rng.uniform(xmin, xmax), rng.uniform(ymin, ymax))
    speed = rng.uniform(cfg.rwp_speed_min, cfg.rwp_speed_max)
    return wp, speed, cfg.rwp_pause


# ---------------------------------------------------------------------------
# full-network run

_ARRIVE_DIST = 0.6    # m: close enough to a wall to count as arrived
_ARRIVE_SPEED = 1.0   # m/s


class _Wall:
    """Standing obstacle; pos is on the constrained vehicle's edge axis."""

    __slots__ = ("pos", "speed")

    def __init__(self, pos: float):
        self.pos = pos
        self.speed = 0.0


class _Projected:
    __slots__ = ("pos", "speed")

    def __init__(self, pos: float, speed: float):
        self.pos = pos
        self.speed = speed


class _Engine:
    def __init__(self, net: RoadNetwork, cfg: MobilityConfig):
        self.net = net
        self.cfg = cfg
        self.vmax = max(e.speed_limit for e in net.edges.values())
        self._preflight()
        self.class_nodes = {k: net.class_nodes(k) for k in VehicleClass}
        self.vehicles: list[VehicleState] = []
        self.by_id = {}
        self.rngs = {}
        self.node_queues = {}    # node -> [vehicle ids], SSM / PTSM FIFO
        self.queue_node = {}     # vehicle id -> node it queues at
        self.ptsm_until = {}     # vehicle id -> earliest release time
        self.records = []

    # --- setup -----------------------------------------------------------

    def _preflight(self):
        cfg, net = self.cfg, self.net
        step_reach = self.vmax * cfg.dt
        for e in net.edges.values():
            if e.length <= step_reach:
                raise ValueError(
                    f"edge {e.id} shorter than one step of travel "
                    f"({e.length:.1f} m <= {step_reach:.1f} m); reduce dt or lengthen edges")
            brake = e.speed_limit ** 2 / (2.0 * cfg.decel)
            if e.length <= brake:
                raise ValueError(
                    f"edge {e.id} shorter than its braking distance ({brake:.1f} m)")
        for st in net.stations:
            e = net.edges[st.edge_id]
            need = e.speed_limit ** 2 / (2.0 * cfg.decel)
            if 0 < st.offset < need:
                raise ValueError(
                    f"station on {st.edge_id} at {st.offset:.1f} m is inside the "
                    f"braking distance {need:.1f} m from the edge start")

    def _class_of(self, vid: int) -> VehicleClass:
        if self.net.kind is ModelKind.HMM:
            n_mb = round(self.cfg.metrobus_fraction * self.cfg.vehicle_count)
            if vid < n_mb:
                return VehicleClass.METROBUS
        return VehicleClass.CAR

    def _draw_trip(self, rng, klass, origin=None):
        nodes = self.class_nodes[klass]
        if not nodes:
            raise NoRouteError(f"network has no edges for {klass.value}")
        for _ in range(60):
            o = origin if origin is not None else rng.choice(nodes)
            d = rng.choice(nodes)
            if o == d:
                continue
            try:
                route = shortest_route(self.net, o, d, klass)
            except NoRouteError:
                continue
            if route:
                return o, d, route
        raise NoRouteError(f"no feasible origin/destination pair for {klass.value}")

    def _lane_clear(self, edge: str, lane: int, pos: float, behind_margin: float):
        """behind_margin: extra clearance required toward following traffic."""
        for w in self.vehicles:
            if w.edge != edge or w.lane != lane:
                continue
            if pos <= w.pos:
                if w.pos - pos < self.cfg.min_gap + 0.1:
                    return False
            elif pos - w.pos < self.cfg.min_gap + behind_margin + 0.1:
                return False
        return True

    def inject_all(self):
        for vid in range(self.cfg.vehicle_count):
            rng = split_stream(self.cfg.seed, "veh", vid)
            self.rngs[vid] = rng
            klass = self._class_of(vid)
            placed = False
            for _ in range(80):
                o, d, route = self._draw_trip(rng, klass)
                eid = route[0]
                e = self.net.edges[eid]
                lane = rng.randrange(e.lane_count)
                pos = rng.uniform(0.0, e.length * 0.9)
                if not self._lane_clear(eid, lane, pos, behind_margin=self.cfg.min_gap):
                    continue
                st = VehicleState(vid, klass, eid, lane, pos, 0.0, route[1:], dest=d)
                st.next_station_ix = self._first_station_ix(eid, pos)
                self.vehicles.append(st)
                self.by_id[vid] = st
                placed = True
                break
            if not placed:
                raise RuntimeError(f"could not place vehicle {vid}; density too high")

    def _first_station_ix(self, edge: str, pos: float) -> int:
        ix = 0
        for st in self.net.stations_on(edge):
            if st.offset < pos - _ARRIVE_DIST:
                ix += 1
        return ix

    # --- per-step machinery ------------------------------------------------

    def _green_edges(self, t: float):
        greens = {}
        for node, inter in self.net.intersections.items():
            if isinstance(inter.control, TrafficLight):
                greens[node] = set(tlm_phase(t, inter.control).green_edges)
        return greens

    def _station_wall(self, v: VehicleState):
        stations = self.net.stations_on(v.edge)
        while v.next_station_ix < len(stations):
            st = stations[v.next_station_ix]
            if st.offset < v.pos - _ARRIVE_DIST:
                v.next_station_ix += 1
                continue
            if st.serves_class is v.klass:
                return st
            v.next_station_ix += 1
        return None

    def _comfort_stop(self, v: VehicleState, dist: float) -> bool:
        """Can v stop at dist away braking at decel, reacting one step late?

        Uses the discrete stopping distance, matching the speed cap in
        step_vehicle; the continuous bound overestimates and would let
        every full-speed approach run a red light."""
        need = v.speed * self.cfg.dt + _stop_travel(v.speed, self.cfg.decel, self.cfg.dt)
        return dist >= need

    def _window(self, e) -> float:
        # far enough out that a vehicle entering it at the limit can still stop
        return e.speed_limit ** 2 / (2.0 * self.cfg.decel) + 2.0 * e.speed_limit * self.cfg.dt + 5.0

    def _turn_is_right(self, cur_edge: str, nxt_edge: str) -> bool:
        e0, e1 = self.net.edges[cur_edge], self.net.edges[nxt_edge]
        ax, ay = self.net.nodes[e0.from_node]
        bx, by = self.net.nodes[e0.to_node]
        cx, cy = self.net.nodes[e1.to_node]
        cross = (bx - ax) * (cy - by) - (by - ay) * (cx - bx)
        return cross < 0

    def _free_right_turn_clear(self, v: VehicleState, node: str, greens) -> bool:
        if not v.route or not self._turn_is_right(v.edge, v.route[0]):
            return False
        green_set = greens.get(node, set())
        for w in self.vehicles:
            if w.id == v.id or w.edge not in green_set:
                continue
            e = self.net.edges[w.edge]
            # dt-safe widening of the conflict gate: a green vehicle one
            # step away can reach the node within this update
            gate = 2.0 * self.cfg.min_gap + e.speed_limit * self.cfg.dt
            if e.length - w.pos <= gate:
                return False
        return True

    def _control_blocked(self, v: VehicleState, greens) -> bool:
        """True when an intersection control forbids crossing this step."""
        if v.mode is Mode.QUEUED:
            return not v.released
        e = self.net.edges[v.edge]
        control = self.net.control_at(e.to_node)
        if isinstance(control, (StopSign, ProbabilisticSign)):
            return not v.released
        if isinstance(control, TrafficLight) and not v.released:
            if v.edge in greens.get(e.to_node, set()):
                return False
            dist = e.length - v.pos
            if not self._comfort_stop(v, dist):
                return False  # cannot brake at decel anymore: runs the light
            return not self._free_right_turn_clear(v, e.to_node, greens)
        return False

    def _merge_grants(self, blocked):
        """Serialize node crossings that would land on the same target lane.

        Contenders inside their braking window plan against a wall at the
        stop line unless granted. Same-source vehicles are ordered by
        car-following anyway, so a grant covers the whole winning lane;
        a contender that can no longer stop comfortably always wins.
        """
        contenders = {}
        for v in self.vehicles:
            if v.mode in (Mode.DWELLING, Mode.PAUSED) or not v.route:
                continue
            if blocked.get(v.id):
                continue
            e = self.net.edges[v.edge]
            dist = e.length - v.pos
            if dist > self._window(e):
                continue
            nxt = self.net.edges[v.route[0]]
            key = (e.to_node, nxt.id, min(v.lane, nxt.lane_count - 1))
            committed = not self._comfort_stop(v, dist)
            contenders.setdefault(key, []).append(
                (not committed, dist, v.id, (v.edge, v.lane)))
        grants = set()
        for lst in contenders.values():
            sources = {c[3] for c in lst}
            if len(sources) == 1:
                grants.update(c[2] for c in lst)
                continue
            lst.sort()
            win_src = lst[0][3]
            grants.update(c[2] for c in lst if c[3] == win_src)
        return grants

    def _leader_for(self, v: VehicleState, lane_order):
        e = self.net.edges[v.edge]
        ahead = None
        for w in lane_order.get((v.edge, v.lane), ()):
            if w.pos > v.pos and (ahead is None or w.pos < ahead.pos):
                ahead = w
        if ahead is not None:
            return _Projected(ahead.pos, ahead.speed)
        if v.route:
            nxt = self.net.edges[v.route[0]]
            tl = min(v.lane, nxt.lane_count - 1)
            rear = None
            for w in lane_order.get((nxt.id, tl), ()):
                if rear is None or w.pos < rear.pos:
                    rear = w
            if rear is not None:
                return _Projected(e.length + rear.pos, rear.speed)
        return None

    def _control_wall(self, v: VehicleState, greens, grants, blocked) -> Optional[_Wall]:
        e = self.net.edges[v.edge]
        wall_pos = e.length + self.cfg.min_gap
        if blocked.get(v.id):
            return _Wall(wall_pos)
        if v.route and v.id not in grants:
            dist = e.length - v.pos
            if dist <= self._window(e) and self._comfort_stop(v, dist):
                return _Wall(wall_pos)
        return None

    def _service_queues(self, t: float):
        for node, queue in self.node_queues.items():
            if not queue:
                continue
            head = queue[0]
            v = self.by_id[head]
            if v.head_since is None:
                v.head_since = t
            control = self.net.control_at(node)
            if isinstance(control, StopSign):
                if ssm_decision(True, t - v.head_since, 0, self.cfg):
                    v.released = True
                    v.mode = Mode.DRIVING
            elif isinstance(control, ProbabilisticSign):
                if t >= self.ptsm_until.get(head, t):
                    v.released = True
                    v.mode = Mode.DRIVING

    def _post_move(self, v: VehicleState, t_next: float, prev_edge: str):
        cfg, net = self.cfg, self.net
        # crossing a node clears any queue membership
        if v.edge != prev_edge:
            node = self.queue_node.pop(v.id, None)
            if node is not None and self.node_queues.get(node):
                q = self.node_queues[node]
                if v.id in q:
                    q.remove(v.id)
            v.released = False
            v.head_since = None
            self.ptsm_until.pop(v.id, None)
            return
        if v.mode is not Mode.DRIVING:
            return
        # station arrival
        st = self._station_wall(v)
        if st is not None and st.offset - v.pos <= _ARRIVE_DIST and v.speed <= _ARRIVE_SPEED:
            v.pos = st.offset
            v.speed = 0.0
            v.mode = Mode.DWELLING
            v.mode_until = t_next + self.rngs[v.id].uniform(st.dwell_min, st.dwell_max)
            v.next_station_ix += 1
            return
        # stop line arrival for queued controls
        e = net.edges[v.edge]
        control = net.control_at(e.to_node)
        if isinstance(control, (StopSign, ProbabilisticSign)) and not v.released:
            if e.length - v.pos <= _ARRIVE_DIST and v.speed <= _ARRIVE_SPEED:
                v.pos = e.length
                v.speed = 0.0
                v.mode = Mode.QUEUED
                node = e.to_node
                q = self.node_queues.setdefault(node, [])
                if v.id not in q:
                    if isinstance(control, ProbabilisticSign):
                        if not q:
                            wait = ptsm_decision(control.p, control.w, self.rngs[v.id])
                            self.ptsm_until[v.id] = t_next + wait
                        else:
                            self.ptsm_until[v.id] = t_next
                    q.append(v.id)
                    self.queue_node[v.id] = node

    def _respawn(self, v: VehicleState, node: str):
        rng = self.rngs[v.id]
        try:
            o, d, route = self._draw_trip(rng, v.klass, origin=node)
        except NoRouteError:
            # dead-end network for this class: teleport to a fresh trip
            o, d, route = self._draw_trip(rng, v.klass)
            eid = route[0]
            e = self.net.edges[eid]
            margin = e.speed_limit ** 2 / (2.0 * self.cfg.decel) + e.speed_limit * self.cfg.dt
            for _ in range(200):
                lane = rng.randrange(e.lane_count)
                pos = rng.uniform(0.0, e.length * 0.9)
                if self._lane_clear(eid, lane, pos, behind_margin=margin):
                    break
            v.edge, v.lane, v.pos, v.speed = eid, lane, pos, 0.0
            v.route, v.dest = route[1:], d
            v.next_station_ix = self._first_station_ix(eid, pos)
            return
        v.route = route
        v.dest = d
        # continues seamlessly through the node onto the new trip

    def advance(self, t: float):
        cfg, net = self.cfg, self.net
        greens = self._green_edges(t)
        self._service_queues(t)
        blocked = {v.id: self._control_blocked(v, greens) for v in self.vehicles}
        grants = self._merge_grants(blocked)
        lane_order = {}
        for w in self.vehicles:
            lane_order.setdefault((w.edge, w.lane), []).append(w)
        t_next = t + cfg.dt
        for v in self.vehicles:
            if v.mode in (Mode.DWELLING, Mode.PAUSED):
                if t_next >= v.mode_until:
                    v.mode = Mode.DRIVING
                continue
            if v.mode is Mode.QUEUED and not v.released:
                continue
            prev_edge = v.edge
            obstacles = []
            leader = self._leader_for(v, lane_order)
            if leader is not None:
                obstacles.append(leader)
            st = None if v.released else self._station_wall(v)
            if st is not None:
                obstacles.append(_Wall(st.offset + cfg.min_gap))
            wall = self._control_wall(v, greens, grants, blocked)
            if wall is not None:
                obstacles.append(wall)
            nearest = min(obstacles, key=lambda o: o.pos) if obstacles else None
            rng = self.rngs[v.id]
            while True:
                try:
                    step_vehicle(v, nearest, cfg, net, rng)
                except RouteExhausted:
                    end_node = net.edges[v.edge].to_node
                    self._respawn(v, end_node)
                    continue
                break
            if v.edge != prev_edge:
                # entry backstop; planning walls make this a no-op in practice
                self._assert_entry(v, lane_order)
                lane_order.setdefault((v.edge, v.lane), []).append(v)
            self._post_move(v, t_next, prev_edge)

    def _assert_entry(self, v: VehicleState, lane_order):
        for w in lane_order.get((v.edge, v.lane), ()):
            if w is not v and abs(w.pos - v.pos) < 1e-9:
                v.pos = max(0.0, w.pos - self.cfg.min_gap)
                v.speed = 0.0

    def record(self, t: float):
        for v in self.vehicles:
            x, y = self.net.position_on(v.edge, v.pos, v.lane)
            self.records.append(TraceRecord(t, v.id, x, y, v.speed, v.edge, v.lane, v.pos))

    def run(self) -> MobilityTrace:
        steps = int(round(self.cfg.duration / self.cfg.dt))
        self.inject_all()
        for k in range(steps + 1):
            t = k * self.cfg.dt
            self.record(t)
            if k < steps:
                self.advance(t)
        self.records.sort(key=lambda r: (r.time, r.vehicle))
        return MobilityTrace(tuple(self.records), self.cfg, self.net.kind)


def run_mobility(net: RoadNetwork, cfg: MobilityConfig) -> MobilityTrace:
    """Simulate all vehicles for cfg.duration and return the position trace."""
    cfg.validate()
    return _Engine(net, cfg).run()
