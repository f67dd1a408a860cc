"""Trace-driven packet network simulation.

Nodes are the vehicles of a mobility trace. The channel is a disk model:
reception succeeds within tx_range unless another transmission overlaps
in time with a sender inside interference_range of the listener. Medium
access is slotted random backoff with carrier sense. Routing is
on-demand: route-request floods install reverse routes, route replies
install forward routes, broken links invalidate and propagate errors.
Every generated packet ends in exactly one disposition.
"""

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from hybrist.mobility import MobilityTrace
from hybrist.rng import split_stream

ROUTE_LIFETIME = 10.0     # s, route table entry validity
SEEN_TTL = 5.0            # s, duplicate-flood suppression window
DISC_TIMEOUT = 1.0        # s, wait per route-discovery attempt
DISC_ATTEMPTS = 3         # floods per discovery
RETRY_BUDGET = 2          # unicast retransmissions before link failure
DATA_TTL = 16             # hops
QUEUE_CAP = 64            # frames per node
MAX_BUFFER_ROUNDS = 3     # rediscoveries a single packet may trigger
RREQ_SIZE = 48            # bytes
RREP_SIZE = 44
RERR_SIZE = 36
MAX_DEFERS = 16           # carrier-sense deferrals before forcing the send


class UnknownTime(Exception):
    """Queried instant lies outside the trace span."""


class EmptyInput(Exception):
    """Metric computation over an empty record set."""


class Disposition(Enum):
    DELIVERED = "Delivered"
    NO_ROUTE = "DroppedNoRoute"
    COLLISION = "DroppedCollision"
    TTL = "DroppedTtl"
    QUEUE_OVERFLOW = "DroppedQueueOverflow"
    IN_FLIGHT = "InFlightAtEnd"


class Outcome(Enum):
    RECEIVED = "Received"
    COLLISION_LOSS = "CollisionLoss"
    OUT_OF_RANGE = "OutOfRange"


@dataclass(frozen=True)
class RadioParams:
    tx_range: float = 250.0
    interference_range: float = 450.0
    bitrate: float = 10e6
    per_hop_overhead: int = 40
    slot: float = 13e-6
    max_backoff_slots: int = 15

    def validate(self) -> None:
        if not (self.interference_range >= self.tx_range > 0):
            raise ValueError("need interference_range >= tx_range > 0")
        if self.bitrate <= 0:
            raise ValueError("bitrate must be > 0")
        if self.slot <= 0 or self.max_backoff_slots < 0:
            raise ValueError("bad MAC parameters")

    def airtime(self, payload_bytes: int) -> float:
        return (payload_bytes + self.per_hop_overhead) * 8.0 / self.bitrate


@dataclass(frozen=True)
class CbrFlowConfig:
    src: int
    dst: int
    packet_size: int = 512
    interval: float = 0.05
    start: float = 0.0
    stop: float = 1000.0

    def validate(self) -> None:
        if self.src == self.dst:
            raise ValueError("flow src and dst must differ")
        if self.packet_size <= 0 or self.interval <= 0:
            raise ValueError("packet_size and interval must be > 0")
        if not (self.start < self.stop):
            raise ValueError("need start < stop")


@dataclass
class PacketRecord:
    packet_id: tuple
    flow: int
    created: float
    delivered_at: Optional[float] = None
    hops: int = 0
    disposition: Optional[Disposition] = None
    path: tuple = ()


@dataclass
class MetricsReport:
    sent: int
    delivered: int
    dropped: int
    in_flight: int
    pdf: float
    mean_e2e_delay: float
    loss: int
    per_flow: dict
    packets: list
    route_hops: dict   # (node, dest) -> hop count of the final installed route
    sweep_key: Optional[tuple] = None   # (model, cbr_sources, tx_range, seed)


def cbr_generate(flow: CbrFlowConfig) -> list:
    """Send instants: start, start+interval, ... strictly below stop."""
    flow.validate()
    out = []
    k = 0
    while True:
        t = flow.start + k * flow.interval
        if t >= flow.stop:
            break
        out.append(t)
        k += 1
    return out


def in_range(a, b, rng: float) -> bool:
    """Inclusive disk membership."""
    return math.hypot(a[0] - b[0], a[1] - b[1]) <= rng


def compute_metrics(records) -> tuple:
    """(delivery fraction, mean end-to-end delay over delivered, drop count)."""
    records = list(records)
    if not records:
        raise EmptyInput("no packet records")
    sent = len(records)
    delivered = [r for r in records if r.disposition is Disposition.DELIVERED]
    dropped = [r for r in records if r.disposition is not None
               and r.disposition not in (Disposition.DELIVERED, Disposition.IN_FLIGHT)]
    pdf = len(delivered) / sent
    mean_delay = (sum(r.delivered_at - r.created for r in delivered) / len(delivered)
                  if delivered else 0.0)
    return pdf, mean_delay, len(dropped)


# ---------------------------------------------------------------------------
# positions

class PositionIndex:
    """Per-vehicle piecewise-linear position lookup over a trace."""

    def __init__(self, trace: MobilityTrace):
        per = {}
        for r in trace.records:
            per.setdefault(r.vehicle, []).append(r)
        self.vehicles = sorted(per)
        self.row = {v: i for i, v in enumerate(self.vehicles)}
        self._t = {}
        self._x = {}
        self._y = {}
        lo, hi = math.inf, -math.inf
        for v, recs in per.items():
            recs.sort(key=lambda r: r.time)
            self._t[v] = np.array([r.time for r in recs])
            self._x[v] = np.array([r.x for r in recs])
            self._y[v] = np.array([r.y for r in recs])
            lo = min(lo, recs[0].time)
            hi = max(hi, recs[-1].time)
        self.t0, self.t1 = lo, hi
        self._samples = np.unique(np.concatenate(list(self._t.values()))) if per else np.array([])
        self._snap_cache = {}
        self._dist_cache = {}
        # uniform sample grids (the usual case) index by arithmetic
        self._grid_dt = None
        if len(self._samples) > 1:
            diffs = np.diff(self._samples)
            if np.allclose(diffs, diffs[0], rtol=0.0, atol=1e-9):
                self._grid_dt = float(diffs[0])

    def at(self, t: float, vehicle: int):
        x = float(np.interp(t, self._t[vehicle], self._x[vehicle]))
        y = float(np.interp(t, self._t[vehicle], self._y[vehicle]))
        return (x, y)

    def snapshot(self, t: float):
        """(n, 2) positions at the nearest recorded sample time."""
        if self._grid_dt is not None:
            k = int((t - self.t0) / self._grid_dt + 0.5)
            if k < 0:
                k = 0
            elif k >= len(self._samples):
                k = len(self._samples) - 1
        else:
            k = int(np.searchsorted(self._samples, t))
            if k >= len(self._samples):
                k = len(self._samples) - 1
            elif k > 0 and abs(self._samples[k - 1] - t) <= abs(self._samples[k] - t):
                k -= 1
        snap = self._snap_cache.get(k)
        if snap is None:
            ts = float(self._samples[k])
            arr = np.empty((len(self.vehicles), 2))
            for i, v in enumerate(self.vehicles):
                arr[i, 0] = np.interp(ts, self._t[v], self._x[v])
                arr[i, 1] = np.interp(ts, self._t[v], self._y[v])
            self._snap_cache[k] = arr
            snap = arr
        return snap, k

    def distances_from(self, k: int, row: int):
        key = (k, row)
        d = self._dist_cache.get(key)
        if d is None:
            arr = self._snap_cache[k]
            d = np.hypot(arr[:, 0] - arr[row, 0], arr[:, 1] - arr[row, 1])
            self._dist_cache[key] = d
        return d


def positions_at(trace: MobilityTrace, t: float) -> dict:
    """vehicle -> (x, y), linearly interpolated between bracketing records."""
    idx = PositionIndex(trace)
    if not (idx.t0 <= t <= idx.t1):
        raise UnknownTime(f"t={t} outside trace span [{idx.t0}, {idx.t1}]")
    return {v: idx.at(t, v) for v in idx.vehicles}


# ---------------------------------------------------------------------------
# channel

def channel_deliver(tx, listeners, concurrent, radio: RadioParams, t: float) -> dict:
    """Outcome per listener for one transmission.

    tx and members of concurrent are (sender_pos, start, end) triples;
    listeners is {node_id: position}. A listener receives iff inside
    tx_range of the sender and no concurrent sender sits within
    interference_range of it during the overlap.
    """
    sender_pos, start, end = tx
    out = {}
    for lid, pos in listeners.items():
        if not in_range(sender_pos, pos, radio.tx_range):
            out[lid] = Outcome.OUT_OF_RANGE
            continue
        hit = False
        for (opos, ostart, oend) in concurrent:
            if ostart < end and oend > start and in_range(opos, pos, radio.interference_range):
                hit = True
                break
        out[lid] = Outcome.COLLISION_LOSS if hit else Outcome.RECEIVED
    return out


# ---------------------------------------------------------------------------
# routing state and message handling

@dataclass
class Route:
    next_hop: int
    hop_count: int
    dest_seq: int
    expiry: float


@dataclass
class AodvNodeState:
    node: int
    own_seq: int = 0
    rreq_id: int = 0
    routing_table: dict = field(default_factory=dict)   # dest -> Route
    seen_rreq: dict = field(default_factory=dict)       # (origin, rreq_id) -> (hops, expiry)
    pending: dict = field(default_factory=dict)         # dest -> [DataMsg]
    precursors: dict = field(default_factory=dict)      # dest -> set of upstream nodes

    def valid_route(self, dest: int, now: float) -> Optional[Route]:
        r = self.routing_table.get(dest)
        if r is not None and r.expiry > now:
            return r
        return None

    def install(self, dest: int, next_hop: int, hops: int, seq: int, now: float) -> bool:
        cur = self.routing_table.get(dest)
        if cur is not None:
            # sequence ordering survives expiry, else stale mutual routes
            # form forwarding loops
            if seq < cur.dest_seq:
                return False
            if cur.expiry > now and seq == cur.dest_seq and hops >= cur.hop_count:
                if hops == cur.hop_count and next_hop == cur.next_hop:
                    cur.expiry = max(cur.expiry, now + ROUTE_LIFETIME)
                return False
        self.routing_table[dest] = Route(next_hop, hops, seq, now + ROUTE_LIFETIME)
        return True

    def invalidate_via(self, broken_hop: int) -> list:
        gone = []
        for dest, r in self.routing_table.items():
            if r.next_hop == broken_hop and r.expiry > 0:
                r.expiry = 0.0
                gone.append((dest, r.dest_seq))
        return gone


@dataclass
class Rreq:
    origin: int
    rreq_id: int
    dest: int
    hop_count: int
    origin_seq: int
    dest_seq: int
    ttl: int


@dataclass
class Rrep:
    origin: int       # node the reply travels back to
    dest: int         # node the route leads to
    hop_count: int
    dest_seq: int


@dataclass
class Rerr:
    dests: tuple      # ((dest, seq), ...)


@dataclass
class DataMsg:
    packet: PacketRecord
    src: int
    dst: int
    ttl: int
    rounds: int = 0   # rediscoveries this packet has triggered


def aodv_handle(state: AodvNodeState, msg, sender: int, now: float) -> list:
    """Process one received routing-layer message; returns runner actions.

    Actions: ("broadcast", msg) | ("unicast", next_hop, msg)
           | ("deliver", packet) | ("drop", packet, Disposition)
           | ("buffer", dest, data_msg) | ("flush", dest)
    """
    if isinstance(msg, Rreq):
        return _handle_rreq(state, msg, sender, now)
    if isinstance(msg, Rrep):
        return _handle_rrep(state, msg, sender, now)
    if isinstance(msg, Rerr):
        return _handle_rerr(state, msg, sender, now)
    if isinstance(msg, DataMsg):
        return _handle_data(state, msg, sender, now)
    return []


def _handle_rreq(state: AodvNodeState, msg: Rreq, sender: int, now: float) -> list:
    me = state.node
    if msg.origin == me:
        return []
    rev_hops = msg.hop_count + 1
    key = (msg.origin, msg.rreq_id)
    best = state.seen_rreq.get(key)
    if best is not None and best[1] > now and rev_hops >= best[0]:
        return []  # duplicate, not an improvement
    state.seen_rreq[key] = (rev_hops, now + SEEN_TTL)
    state.install(msg.origin, sender, rev_hops, msg.origin_seq, now)
    if msg.dest == me:
        if best is None or best[1] <= now:
            state.own_seq = max(state.own_seq, msg.dest_seq) + 1
        return [("unicast", sender, Rrep(msg.origin, me, 0, state.own_seq))]
    route = state.valid_route(msg.dest, now)
    if route is not None and route.dest_seq >= msg.dest_seq:
        return [("unicast", sender, Rrep(msg.origin, msg.dest, route.hop_count, route.dest_seq))]
    if msg.ttl <= 1:
        return []
    return [("broadcast", Rreq(msg.origin, msg.rreq_id, msg.dest, rev_hops,
                               msg.origin_seq, msg.dest_seq, msg.ttl - 1))]


def _handle_rrep(state: AodvNodeState, msg: Rrep, sender: int, now: float) -> list:
    me = state.node
    fwd_hops = msg.hop_count + 1
    state.install(msg.dest, sender, fwd_hops, msg.dest_seq, now)
    if msg.origin == me:
        return [("flush", msg.dest)]
    back = state.valid_route(msg.origin, now)
    if back is None:
        return []
    state.precursors.setdefault(msg.dest, set()).add(back.next_hop)
    return [("unicast", back.next_hop, Rrep(msg.origin, msg.dest, fwd_hops, msg.dest_seq))]


def _handle_rerr(state: AodvNodeState, msg: Rerr, sender: int, now: float) -> list:
    affected = []
    for dest, seq in msg.dests:
        r = state.routing_table.get(dest)
        if r is not None and r.expiry > now and r.next_hop == sender:
            r.expiry = 0.0
            affected.append((dest, max(seq, r.dest_seq)))
    # propagate only toward nodes that routed through us
    if any(state.precursors.get(d) for d, _ in affected):
        return [("broadcast", Rerr(tuple(affected)))]
    return []


def _handle_data(state: AodvNodeState, msg: DataMsg, sender: int, now: float) -> list:
    me = state.node
    if msg.dst == me:
        return [("deliver", msg.packet)]
    if msg.ttl <= 0:
        return [("drop", msg.packet, Disposition.TTL)]
    route = state.valid_route(msg.dst, now)
    # a route pointing back where the packet came from is a forming loop
    usable = route is not None and not (sender != me and route.next_hop == sender)
    if not usable:
        if msg.src == me:
            # only the originator buffers and rediscovers
            return [("buffer", msg.dst, msg)]
        stale = state.routing_table.get(msg.dst)
        seq = stale.dest_seq if stale is not None else 0
        if stale is not None:
            stale.expiry = 0.0
        return [("drop", msg.packet, Disposition.NO_ROUTE),
                ("broadcast", Rerr(((msg.dst, seq),)))]
    if sender != me:
        state.precursors.setdefault(msg.dst, set()).add(sender)
    route.expiry = max(route.expiry, now + ROUTE_LIFETIME)  # active use refresh
    fwd = DataMsg(msg.packet, msg.src, msg.dst, msg.ttl - 1, msg.rounds)
    return [("unicast", route.next_hop, fwd)]


# ---------------------------------------------------------------------------
# event-driven runner

class _Frame:
    __slots__ = ("msg", "unicast_to", "size", "retries", "defers")

    def __init__(self, msg, unicast_to, size):
        self.msg = msg
        self.unicast_to = unicast_to   # None for broadcast
        self.size = size
        self.retries = 0
        self.defers = 0


class _Tx:
    __slots__ = ("sender", "start", "end", "frame", "snap_k", "snap_row", "pos")

    def __init__(self, sender, start, end, frame):
        self.sender = sender
        self.start = start
        self.end = end
        self.frame = frame
        self.pos = (0.0, 0.0)


class _Sim:
    def __init__(self, trace, flows, radio, seed):
        radio.validate()
        for f in flows:
            f.validate()
        self.idx = PositionIndex(trace)
        missing = [f for f in flows if f.src not in self.idx.row or f.dst not in self.idx.row]
        if missing:
            raise ValueError(f"flow endpoints missing from trace: {missing[0]}")
        self.flows = list(flows)
        self.radio = radio
        self.rng = split_stream(seed, "netsim")
        self.t_end = self.idx.t1
        self.heap = []
        self.seq = 0
        self.states = {v: AodvNodeState(v) for v in self.idx.vehicles}
        self.queues = {v: deque() for v in self.idx.vehicles}
        self.busy = {v: False for v in self.idx.vehicles}
        self.attempt_token = {v: 0 for v in self.idx.vehicles}
        self.discovering = {}          # (node, dest) -> (token, attempt)
        self.disc_token = 0
        self.active = []               # transmissions currently on air
        self._ended = deque()          # recently finished, for overlap checks
        self.packets = []
        self.data_size = {i: f.packet_size for i, f in enumerate(self.flows)}

    # -- plumbing ----------------------------------------------------------

    def _push(self, t, kind, payload):
        heapq.heappush(self.heap, (t, self.seq, kind, payload))
        self.seq += 1

    def _backoff(self) -> float:
        n = self.radio.max_backoff_slots + 1
        return min(int(self.rng.random() * n), n - 1) * self.radio.slot

    def _set_disposition(self, pkt: PacketRecord, d: Disposition, when=None):
        assert pkt.disposition is None, f"double disposition on {pkt.packet_id}"
        pkt.disposition = d
        if d is Disposition.DELIVERED:
            pkt.delivered_at = when

    # -- MAC ---------------------------------------------------------------

    def _enqueue(self, node: int, frame: _Frame, now: float):
        q = self.queues[node]
        if len(q) >= QUEUE_CAP:
            if isinstance(frame.msg, DataMsg) and frame.msg.packet.disposition is None:
                self._set_disposition(frame.msg.packet, Disposition.QUEUE_OVERFLOW)
            return
        q.append(frame)
        if not self.busy[node] and len(q) == 1:
            self._schedule_attempt(node, now)

    def _schedule_attempt(self, node: int, now: float):
        self.attempt_token[node] += 1
        self._push(now + self._backoff(), "attempt", (node, self.attempt_token[node]))

    def _on_attempt(self, now: float, node: int, token: int):
        if token != self.attempt_token[node] or self.busy[node] or not self.queues[node]:
            return
        frame = self.queues[node][0]
        snap, k = self.idx.snapshot(now)
        row = self.idx.row[node]
        me = (snap[row, 0], snap[row, 1])
        # defer while any transmitter inside the interference disk is on
        # air; collisions then come from concurrent starts and mid-air
        # position drift
        busy_until = 0.0
        for tx in self.active:
            d = math.hypot(me[0] - tx.pos[0], me[1] - tx.pos[1])
            if d <= self.radio.interference_range:
                busy_until = max(busy_until, tx.end)
        if busy_until > now and frame.defers < MAX_DEFERS:
            frame.defers += 1
            self.attempt_token[node] += 1
            self._push(busy_until + self._backoff(), "attempt",
                       (node, self.attempt_token[node]))
            return
        frame.defers = 0
        self.busy[node] = True
        end = now + self.radio.airtime(frame.size)
        tx = _Tx(node, now, end, frame)
        tx.snap_k = k
        tx.snap_row = row
        tx.pos = me
        self.active.append(tx)
        self._push(end, "txend", tx)

    def _on_txend(self, now: float, tx: _Tx):
        self.active.remove(tx)
        node = tx.sender
        self.busy[node] = False
        frame = tx.frame
        overlapped = [o for o in self.active if o.start < tx.end]
        for o in self._ended:
            if o is not tx and o.end > tx.start:
                overlapped.append(o)
        outcome = self._resolve(tx, overlapped)
        if frame.unicast_to is None:
            self.queues[node].popleft()
            for lid in outcome:
                if outcome[lid] is Outcome.RECEIVED:
                    self._dispatch(lid, frame.msg, node, now)
        else:
            dst = frame.unicast_to
            got = outcome.get(dst)
            if got is Outcome.RECEIVED:
                self.queues[node].popleft()
                self._dispatch(dst, frame.msg, node, now)
            elif frame.retries < RETRY_BUDGET:
                frame.retries += 1
            else:
                self.queues[node].popleft()
                self._link_failed(node, dst, frame, got, now)
        if self.queues[node]:
            self._schedule_attempt(node, now)

    def _resolve(self, tx: _Tx, overlapped):
        snap = self.idx._snap_cache[tx.snap_k]
        dists = self.idx.distances_from(tx.snap_k, tx.snap_row)
        listeners = {}
        frame = tx.frame
        if frame.unicast_to is None:
            for v in self.idx.vehicles:
                if v != tx.sender and dists[self.idx.row[v]] <= self.radio.tx_range:
                    listeners[v] = (snap[self.idx.row[v], 0], snap[self.idx.row[v], 1])
        else:
            r = self.idx.row[frame.unicast_to]
            listeners[frame.unicast_to] = (snap[r, 0], snap[r, 1])
            if dists[r] > self.radio.tx_range:
                return {frame.unicast_to: Outcome.OUT_OF_RANGE}
        sender_pos = (snap[tx.snap_row, 0], snap[tx.snap_row, 1])
        concurrent = []
        for o in overlapped:
            osnap = self.idx._snap_cache[o.snap_k]
            concurrent.append(((osnap[o.snap_row, 0], osnap[o.snap_row, 1]), o.start, o.end))
        return channel_deliver((sender_pos, tx.start, tx.end), listeners,
                               concurrent, self.radio, tx.start)

    # -- routing glue --------------------------------------------------------

    def _dispatch(self, node: int, msg, sender: int, now: float):
        if isinstance(msg, DataMsg):
            msg.packet.path = msg.packet.path + (node,)
        actions = aodv_handle(self.states[node], msg, sender, now)
        self._apply(node, actions, now)

    def _apply(self, node: int, actions, now: float):
        for act in actions:
            kind = act[0]
            if kind == "broadcast":
                self._enqueue(node, _Frame(act[1], None, self._msg_size(act[1])), now)
            elif kind == "unicast":
                self._enqueue(node, _Frame(act[2], act[1], self._msg_size(act[2])), now)
            elif kind == "deliver":
                pkt = act[1]
                if pkt.disposition is None:
                    pkt.hops = len(pkt.path) - 1
                    self._set_disposition(pkt, Disposition.DELIVERED, when=now)
            elif kind == "drop":
                if act[1].disposition is None:
                    self._set_disposition(act[1], act[2])
            elif kind == "buffer":
                self._buffer(node, act[1], act[2], now)
            elif kind == "flush":
                self._flush(node, act[1], now)

    def _msg_size(self, msg) -> int:
        if isinstance(msg, DataMsg):
            return self.data_size[msg.packet.flow]
        if isinstance(msg, Rreq):
            return RREQ_SIZE
        if isinstance(msg, Rrep):
            return RREP_SIZE
        return RERR_SIZE

    def _buffer(self, node: int, dest: int, msg: DataMsg, now: float):
        if msg.rounds >= MAX_BUFFER_ROUNDS:
            if msg.packet.disposition is None:
                self._set_disposition(msg.packet, Disposition.NO_ROUTE)
            return
        msg.rounds += 1
        state = self.states[node]
        bucket = state.pending.setdefault(dest, [])
        if len(bucket) >= QUEUE_CAP:
            if msg.packet.disposition is None:
                self._set_disposition(msg.packet, Disposition.QUEUE_OVERFLOW)
            return
        bucket.append(msg)
        self._start_discovery(node, dest, now)

    def _start_discovery(self, node: int, dest: int, now: float):
        key = (node, dest)
        if key in self.discovering:
            return
        self.disc_token += 1
        self.discovering[key] = (self.disc_token, 1)
        self._send_rreq(node, dest, now)
        self._push(now + DISC_TIMEOUT, "disc_timeout", (node, dest, self.disc_token, 1))

    def _send_rreq(self, node: int, dest: int, now: float):
        state = self.states[node]
        state.own_seq += 1
        state.rreq_id += 1
        known = state.routing_table.get(dest)
        dest_seq = known.dest_seq if known is not None else 0
        rreq = Rreq(node, state.rreq_id, dest, 0, state.own_seq, dest_seq, DATA_TTL)
        self._enqueue(node, _Frame(rreq, None, RREQ_SIZE), now)

    def _on_disc_timeout(self, now: float, node: int, dest: int, token: int, attempt: int):
        key = (node, dest)
        if self.discovering.get(key) != (token, attempt):
            return
        state = self.states[node]
        if state.valid_route(dest, now) is not None:
            del self.discovering[key]
            self._flush(node, dest, now)
            return
        if attempt < DISC_ATTEMPTS:
            self.discovering[key] = (token, attempt + 1)
            self._send_rreq(node, dest, now)
            self._push(now + DISC_TIMEOUT, "disc_timeout", (node, dest, token, attempt + 1))
            return
        del self.discovering[key]
        for msg in state.pending.pop(dest, []):
            if msg.packet.disposition is None:
                self._set_disposition(msg.packet, Disposition.NO_ROUTE)

    def _flush(self, node: int, dest: int, now: float):
        state = self.states[node]
        self.discovering.pop((node, dest), None)
        for msg in state.pending.pop(dest, []):
            if msg.packet.disposition is not None:
                continue
            # no valid route re-buffers with a bumped round count, bounded
            self._apply(node, _handle_data(state, msg, node, now), now)

    def _link_failed(self, node: int, broken_hop: int, frame: _Frame, outcome, now: float):
        msg = frame.msg
        if isinstance(msg, DataMsg):
            if outcome is Outcome.COLLISION_LOSS:
                if msg.packet.disposition is None:
                    self._set_disposition(msg.packet, Disposition.COLLISION)
                return
            state = self.states[node]
            gone = state.invalidate_via(broken_hop)
            if gone:
                self._enqueue(node, _Frame(Rerr(tuple(gone)), None, RERR_SIZE), now)
            self._apply(node, _handle_data(state, msg, node, now), now)
        # control frames fail silently; discovery timeouts drive recovery

    # -- main loop -----------------------------------------------------------

    def run(self) -> MetricsReport:
        for i, flow in enumerate(self.flows):
            for t in cbr_generate(flow):
                if t > self.t_end:
                    break
                self._push(t, "cbr", i)
        counter = {}
        while self.heap:
            t, _, kind, payload = heapq.heappop(self.heap)
            if t > self.t_end:
                break
            if kind == "cbr":
                i = payload
                flow = self.flows[i]
                n = counter.get(i, 0)
                counter[i] = n + 1
                pkt = PacketRecord((i, n), i, t, path=(flow.src,))
                self.packets.append(pkt)
                msg = DataMsg(pkt, flow.src, flow.dst, DATA_TTL)
                self._apply(flow.src, _handle_data(self.states[flow.src], msg, flow.src, t), t)
            elif kind == "attempt":
                self._on_attempt(t, *payload)
            elif kind == "txend":
                horizon = t - 0.1  # far beyond any airtime plus backoff
                ended = self._ended
                while ended and ended[0].end < horizon:
                    ended.popleft()
                ended.append(payload)
                self._on_txend(t, payload)
            elif kind == "disc_timeout":
                self._on_disc_timeout(t, *payload)
        for pkt in self.packets:
            if pkt.disposition is None:
                self._set_disposition(pkt, Disposition.IN_FLIGHT)
        return self._report()

    def _report(self) -> MetricsReport:
        sent = len(self.packets)
        delivered = sum(1 for p in self.packets if p.disposition is Disposition.DELIVERED)
        in_flight = sum(1 for p in self.packets if p.disposition is Disposition.IN_FLIGHT)
        dropped = sent - delivered - in_flight
        per_flow = {}
        for i in range(len(self.flows)):
            fl = [p for p in self.packets if p.flow == i]
            fd = sum(1 for p in fl if p.disposition is Disposition.DELIVERED)
            per_flow[i] = (len(fl), fd)
        if sent:
            pdf, mean_delay, loss = compute_metrics(self.packets)
        else:
            pdf, mean_delay, loss = 0.0, 0.0, 0
        route_hops = {}
        for v, st in self.states.items():
            for dest, r in st.routing_table.items():
                if r.expiry > 0:
                    route_hops[(v, dest)] = r.hop_count
        return MetricsReport(sent, delivered, dropped, in_flight, pdf, mean_delay,
                             loss, per_flow, self.packets, route_hops)


def run_network_sim(trace: MobilityTrace, flows, radio: RadioParams,
                    seed: int) -> MetricsReport:
    """Replay a mobility trace under CBR load and report delivery metrics."""
    return _Sim(trace, flows, radio, seed).run()
