"""Configuration-driven sweep harness.

Parses a line-oriented `key = value` config, runs the cartesian sweep
(model x vehicle count x CBR sources x tx range x seed) of mobility plus
network simulation, and writes figure-ready CSV files. Reruns with an
identical spec produce byte-identical output trees.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from hybrist.mobility import MobilityConfig, run_mobility
from hybrist.netsim import CbrFlowConfig, RadioParams, run_network_sim
from hybrist.rng import split_stream
from hybrist.roadnet import ModelKind, TopologyParams, build_topology, validate_network


class ParseError(Exception):
    pass


class ValidationError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    topology: TopologyParams = TopologyParams()
    mobility: MobilityConfig = MobilityConfig()
    models: tuple = (ModelKind.HMM, ModelKind.UMM, ModelKind.HWM)
    vehicle_counts: tuple = (160,)
    cbr_source_counts: tuple = (5, 10, 15, 20)
    tx_ranges: tuple = (250.0,)
    seeds: tuple = (1, 2, 3, 4, 5)
    bitrate: float = 10e6
    per_hop_overhead: int = 40
    slot: float = 13e-6
    max_backoff_slots: int = 15
    interference_factor: float = 1.8
    cbr_interval: float = 0.05
    cbr_packet_size: int = 512
    cbr_start: float = 1.0
    output_dir: str = "out"

    def validate(self) -> None:
        for name in ("models", "vehicle_counts", "cbr_source_counts", "tx_ranges", "seeds"):
            if not getattr(self, name):
                raise ValidationError(f"{name} must be non-empty")
        if any(n <= 0 for n in self.cbr_source_counts):
            raise ValidationError("cbr_source_counts must be positive")
        if any(v <= 0 for v in self.vehicle_counts):
            raise ValidationError("vehicle_counts must be positive")
        for v in self.vehicle_counts:
            for c in self.cbr_source_counts:
                if c > v / 2:
                    raise ValidationError(
                        f"cbr_source_counts value {c} exceeds vehicle_count {v} / 2")
        if any(r <= 0 for r in self.tx_ranges):
            raise ValidationError("tx_ranges must be positive")
        if self.interference_factor < 1.0:
            raise ValidationError("interference_factor must be >= 1")
        if self.cbr_interval <= 0 or self.cbr_packet_size <= 0:
            raise ValidationError("cbr_interval and cbr_packet_size must be positive")
        self.topology.validate()
        self.mobility.validate()

    def radio_for(self, tx_range: float) -> RadioParams:
        return RadioParams(tx_range=tx_range,
                           interference_range=self.interference_factor * tx_range,
                           bitrate=self.bitrate, per_hop_overhead=self.per_hop_overhead,
                           slot=self.slot, max_backoff_slots=self.max_backoff_slots)


# scaled-down preset: short corridor keeps 40 vehicles at full-scale
# density, slow radio restores full-scale channel contention at the
# reduced packet rate; runs the whole acceptance sweep on a laptop
DESK = ExperimentSpec(
    topology=TopologyParams(corridor_length=800.0, corridor_width=200.0,
                            umm_grid_rows=3, umm_grid_cols=9),
    mobility=MobilityConfig(duration=300.0),
    vehicle_counts=(40,),
    tx_ranges=(200.0, 300.0),
    seeds=(1, 2, 3, 4, 5),
    bitrate=0.5e6,
    cbr_interval=1.0,
)

PAPER = ExperimentSpec()

PRESETS = {"desk": DESK, "paper": PAPER}


def _parse_model_list(s):
    out = []
    for tok in s.split(","):
        tok = tok.strip()
        try:
            out.append(ModelKind(tok))
        except ValueError:
            raise ParseError(f"unknown model kind: {tok}")
    return tuple(out)


def _ints(s):
    return tuple(int(tok.strip()) for tok in s.split(","))


def _floats(s):
    return tuple(float(tok.strip()) for tok in s.split(","))


_TOPOLOGY_KEYS = {
    "corridor_length": float, "corridor_width": float,
    "metrobus_lanes_per_direction": int, "metrobus_speed": float,
    "main_road_lanes_per_direction": int, "main_road_speed": float,
    "hwm_lanes": int, "hwm_speed": float, "umm_lanes": int, "umm_speed": float,
    "metrobus_stations": int, "main_road_stops": int, "hwm_stops": int,
    "umm_stops": int, "umm_grid_rows": int, "umm_grid_cols": int,
}

_MOBILITY_KEYS = {
    "dt": float, "accel": float, "decel": float, "tau": float, "sigma": float,
    "min_gap": float, "rwp_pause": float, "rwp_speed_min": float,
    "rwp_speed_max": float, "ssm_stop_time": float, "duration": float,
    "metrobus_fraction": float,
}

_SPEC_KEYS = {
    "models": _parse_model_list, "vehicle_counts": _ints,
    "cbr_source_counts": _ints, "tx_ranges": _floats, "seeds": _ints,
    "bitrate": float, "per_hop_overhead": int, "slot": float,
    "max_backoff_slots": int, "interference_factor": float,
    "cbr_interval": float, "cbr_packet_size": int, "cbr_start": float,
    "output_dir": str,
}


def parse_config(text: str, base: ExperimentSpec = None) -> ExperimentSpec:
    """Parse `key = value` lines over a base spec; unknown keys rejected.

    List values are comma-separated. Blank lines and #-comments allowed.
    """
    spec = base if base is not None else ExperimentSpec()
    topo = spec.topology
    mob = spec.mobility
    fields = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            if key in _SPEC_KEYS:
                fields[key] = _SPEC_KEYS[key](value)
            elif key in _TOPOLOGY_KEYS:
                topo = replace(topo, **{key: _TOPOLOGY_KEYS[key](value)})
            elif key in _MOBILITY_KEYS:
                mob = replace(mob, **{key: _MOBILITY_KEYS[key](value)})
            else:
                raise ParseError(f"line {lineno}: unknown key: {key}")
        except ParseError:
            raise
        except (ValueError, TypeError) as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
    spec = replace(spec, topology=topo, mobility=mob, **fields)
    spec.validate()
    return spec


# ---------------------------------------------------------------------------
# sweep execution

RESULT_HEADER = "model,vehicles,cbr_sources,tx_range,seed,sent,delivered,dropped,pdf,mean_delay_s,status"


@dataclass
class ResultRow:
    model: str
    vehicles: int
    cbr_sources: int
    tx_range: float
    seed: int
    sent: int = 0
    delivered: int = 0
    dropped: int = 0
    pdf: float = 0.0
    mean_delay_s: float = 0.0
    status: str = "ok"

    def csv(self) -> str:
        return (f"{self.model},{self.vehicles},{self.cbr_sources},{self.tx_range:.6f},"
                f"{self.seed},{self.sent},{self.delivered},{self.dropped},"
                f"{self.pdf:.6f},{self.mean_delay_s:.6f},{self.status}")


def choose_flows(spec: ExperimentSpec, trace, count: int, seed: int) -> list:
    """Distinct random src/dst pairs among vehicles present for >= 80% of
    the run, seeded from the run seed."""
    t0, t1 = trace.span()
    need = 0.8 * (t1 - t0)
    per = {}
    for r in trace.records:
        a = per.get(r.vehicle)
        if a is None:
            per[r.vehicle] = [r.time, r.time]
        else:
            a[0] = min(a[0], r.time)
            a[1] = max(a[1], r.time)
    alive = sorted(v for v, (a, b) in per.items() if b - a >= need)
    if len(alive) < 2:
        raise ValidationError("fewer than two long-lived vehicles for flows")
    rng = split_stream(seed, "flows", count)
    stop = t1
    flows = []
    for _ in range(count):
        src = rng.choice(alive)
        dst = rng.choice([v for v in alive if v != src])
        flows.append(CbrFlowConfig(src, dst, packet_size=spec.cbr_packet_size,
                                   interval=spec.cbr_interval,
                                   start=min(spec.cbr_start, stop / 2.0), stop=stop))
    return flows


def _trace_group(args):
    """One worker unit: a mobility run plus all its network sweep points."""
    spec, kind, vcount, seed = args
    net = build_topology(spec.topology, kind)
    cfg = replace(spec.mobility, vehicle_count=vcount, seed=seed)
    trace = run_mobility(net, cfg)
    rows = []
    for cbr_n in spec.cbr_source_counts:
        flows = choose_flows(spec, trace, cbr_n, seed)
        for tx in spec.tx_ranges:
            row = ResultRow(kind.value, vcount, cbr_n, tx, seed)
            try:
                report = run_network_sim(trace, flows, spec.radio_for(tx), seed)
                report.sweep_key = (kind.value, cbr_n, tx, seed)
                row.sent = report.sent
                row.delivered = report.delivered
                row.dropped = report.dropped
                row.pdf = report.pdf
                row.mean_delay_s = report.mean_e2e_delay
            except Exception as exc:  # run failures become rows, never holes
                row.status = f"error:{type(exc).__name__}"
            rows.append(row)
    return rows


def sweep_points(spec: ExperimentSpec):
    for kind in spec.models:
        for vcount in spec.vehicle_counts:
            for seed in spec.seeds:
                yield (spec, kind, vcount, seed)


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> list:
    """Run the full sweep, write results.csv and figure aggregates.

    Returns the result rows in deterministic sweep order regardless of
    worker completion order.
    """
    spec.validate()
    points = list(sweep_points(spec))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            batches = list(pool.map(_trace_group, points))
    else:
        batches = [_trace_group(p) for p in points]
    ordered = {}
    for (sp, kind, vcount, seed), batch in zip(points, batches):
        for row in batch:
            ordered[(kind.value, vcount, row.cbr_sources, row.tx_range, seed)] = row
    rows = []
    for kind in spec.models:
        for vcount in spec.vehicle_counts:
            for cbr_n in spec.cbr_source_counts:
                for tx in spec.tx_ranges:
                    for seed in spec.seeds:
                        rows.append(ordered[(kind.value, vcount, cbr_n, tx, seed)])
    _write_outputs(spec, rows)
    return rows


def _mean(vals):
    return sum(vals) / len(vals)


def aggregate_rows(spec: ExperimentSpec, rows: list) -> dict:
    """Figure-ready aggregates, averaging pdf/delay/loss over seeds.

    CBR figures are cut at the first tx range and first vehicle count;
    the range figure is cut at the highest CBR source count.
    """
    ok = [r for r in rows if r.status == "ok"]
    v0 = spec.vehicle_counts[0]
    tx0 = spec.tx_ranges[0]
    cbr_hi = max(spec.cbr_source_counts)
    fig7, fig8, fig9, fig10 = [], [], [], []
    for kind in spec.models:
        for cbr_n in spec.cbr_source_counts:
            grp = [r for r in ok if r.model == kind.value and r.vehicles == v0
                   and r.cbr_sources == cbr_n and r.tx_range == tx0]
            if not grp:
                continue
            fig7.append((kind.value, cbr_n, _mean([r.pdf for r in grp])))
            fig8.append((kind.value, cbr_n, _mean([r.mean_delay_s for r in grp])))
            fig9.append((kind.value, cbr_n, _mean([r.dropped for r in grp])))
        for tx in spec.tx_ranges:
            grp = [r for r in ok if r.model == kind.value and r.vehicles == v0
                   and r.cbr_sources == cbr_hi and r.tx_range == tx]
            if not grp:
                continue
            fig10.append((kind.value, tx, _mean([r.pdf for r in grp])))
    return {"fig7": fig7, "fig8": fig8, "fig9": fig9, "fig10": fig10}


def _write_outputs(spec: ExperimentSpec, rows: list) -> None:
    os.makedirs(spec.output_dir, exist_ok=True)

    def write(name, text):
        with open(os.path.join(spec.output_dir, name), "w", newline="") as fh:
            fh.write(text)

    write("results.csv", "\n".join([RESULT_HEADER] + [r.csv() for r in rows]) + "\n")
    aggs = aggregate_rows(spec, rows)
    write("fig7_pdf_vs_cbr.csv", "model,cbr_sources,pdf\n" + "".join(
        f"{m},{c},{v:.6f}\n" for m, c, v in aggs["fig7"]))
    write("fig8_delay_vs_cbr.csv", "model,cbr_sources,mean_delay_s\n" + "".join(
        f"{m},{c},{v:.6f}\n" for m, c, v in aggs["fig8"]))
    write("fig9_loss_vs_cbr.csv", "model,cbr_sources,loss\n" + "".join(
        f"{m},{c},{v:.6f}\n" for m, c, v in aggs["fig9"]))
    write("fig10_pdr_vs_range.csv", "model,tx_range,pdf\n" + "".join(
        f"{m},{t:.6f},{v:.6f}\n" for m, t, v in aggs["fig10"]))


def validate_spec_networks(spec: ExperimentSpec) -> list:
    """Build every requested topology and collect structural violations."""
    out = []
    for kind in spec.models:
        net = build_topology(spec.topology, kind)
        for v in validate_network(net):
            out.append((kind.value, v))
    return out
