"""Acceptance criteria, one test per criterion, desk scale.

Run with `pytest tests/test_acceptance.py -v -s` to see one verdict line
per criterion. The desk sweep (criteria 7-11) executes once per output
tree via the CLI and takes a few minutes single-core.
"""

import filecmp
import itertools
import math
import os
import random
import time
from dataclasses import replace
from pathlib import Path

import pytest

from hybrist import cli
from hybrist.experiment import DESK
from hybrist.mobility import run_mobility
from hybrist.netsim import (
    CbrFlowConfig,
    RadioParams,
    cbr_generate,
    run_network_sim,
)
from hybrist.roadnet import ModelKind, VehicleClass, build_topology, route_cost, shortest_route
from hybrist.traceio import NS2_MOVEMENT, export_trace, parse_trace

from test_netsim import bfs_hops, static_trace
from test_roadnet import brute_force_route, random_connected_net


def verdict(num, name, ok, detail=""):
    line = f"ACCEPTANCE {num:02d} {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  [{detail}]"
    print(line)
    return ok


@pytest.fixture(scope="session")
def desk_outputs(tmp_path_factory):
    base = tmp_path_factory.mktemp("desk")
    out1, out2 = base / "run1", base / "run2"
    assert cli.main(["run", "--preset", "desk", "--out", str(out1)]) == 0
    assert cli.main(["run", "--preset", "desk", "--out", str(out2)]) == 0
    return out1, out2


@pytest.fixture(scope="session")
def desk_traces():
    out = {}
    for kind in ModelKind:
        net = build_topology(DESK.topology, kind)
        for seed in DESK.seeds:
            cfg = replace(DESK.mobility, vehicle_count=DESK.vehicle_counts[0], seed=seed)
            out[(kind, seed)] = (net, run_mobility(net, cfg))
    return out


def read_fig(path: Path):
    rows = []
    for line in path.read_text().splitlines()[1:]:
        model, key, value = line.split(",")
        rows.append((model, float(key), float(value)))
    return rows


def test_criterion_01_routing_oracle():
    rng = random.Random(1)
    t0 = time.time()
    mismatches = 0
    instances = 0
    while instances < 200:
        net, origin, dest = random_connected_net(rng, max_nodes=8)
        expected = brute_force_route(net, origin, dest, VehicleClass.CAR)
        if expected is None:
            continue
        got = shortest_route(net, origin, dest, VehicleClass.CAR)
        if abs(route_cost(net, got) - expected[0]) > 1e-9:
            mismatches += 1
        instances += 1
    elapsed = time.time() - t0
    ok = mismatches == 0 and elapsed < 5.0
    assert verdict(1, "routing-oracle", ok,
                   f"{instances} instances, {mismatches} mismatches, {elapsed:.2f}s")


def test_criterion_02_mobility_safety(desk_traces):
    gap_violations = 0
    speed_violations = 0
    for (kind, seed), (net, trace) in desk_traces.items():
        by_cell = {}
        for r in trace.records:
            limit = net.edges[r.edge].speed_limit
            if r.speed > limit:
                speed_violations += 1
            if kind is ModelKind.HMM:
                cap = 33.33 if VehicleClass.METROBUS in net.edges[r.edge].allowed_class else 13.89
                if r.speed > cap:
                    speed_violations += 1
            by_cell.setdefault((r.time, r.edge, r.lane), []).append(r.pos)
        for group in by_cell.values():
            group.sort()
            for a, b in zip(group, group[1:]):
                if b - a < 0.0:
                    gap_violations += 1
    ok = gap_violations == 0 and speed_violations == 0
    assert verdict(2, "mobility-safety", ok,
                   f"gaps={gap_violations} speeds={speed_violations} over "
                   f"{len(desk_traces)} desk runs")


def test_criterion_03_ptsm_statistics():
    from hybrist.mobility import ptsm_decision

    rng = random.Random(12345)
    n = 10_000
    waits = [ptsm_decision(0.5, 10.0, rng) for _ in range(n)]
    stopped = [w for w in waits if w > 0.0]
    frac = len(stopped) / n
    mean_wait = sum(stopped) / len(stopped)
    ok = 0.47 <= frac <= 0.53 and 4.7 <= mean_wait <= 5.3
    assert verdict(3, "ptsm-statistics", ok,
                   f"stop fraction {frac:.4f}, mean nonzero wait {mean_wait:.3f}s")


def test_criterion_04_manhattan_frequencies():
    from hybrist.mobility import Turn, manhattan_turn

    rng = random.Random(54321)
    n = 10_000
    counts = {t: 0 for t in Turn}
    for _ in range(n):
        counts[manhattan_turn(rng)] += 1
    devs = {
        "left": abs(counts[Turn.LEFT] / n - 0.25),
        "right": abs(counts[Turn.RIGHT] / n - 0.25),
        "straight": abs(counts[Turn.STRAIGHT] / n - 0.50),
    }
    ok = all(d <= 0.02 for d in devs.values())
    assert verdict(4, "manhattan-frequencies", ok,
                   ", ".join(f"{k} dev {v:.4f}" for k, v in devs.items()))


def test_criterion_05_packet_conservation():
    rng = random.Random(777)
    bad = 0
    for trial in range(20):
        n = rng.randint(3, 12)
        positions = {i: (rng.uniform(0, 700), rng.uniform(0, 350)) for i in range(n)}
        trace = static_trace(positions, duration=10.0)
        tx = rng.choice([80.0, 150.0, 250.0])
        radio = RadioParams(tx_range=tx, interference_range=1.8 * tx,
                            bitrate=rng.choice([0.5e6, 10e6]))
        flows = []
        for _ in range(rng.randint(1, 4)):
            src, dst = rng.sample(range(n), 2)
            flows.append(CbrFlowConfig(src, dst, interval=rng.choice([0.2, 0.5]),
                                       start=0.0, stop=10.0))
        rep = run_network_sim(trace, flows, radio, seed=trial)
        expected_sent = sum(len(cbr_generate(f)) for f in flows)
        if rep.sent != rep.delivered + rep.dropped + rep.in_flight or rep.sent != expected_sent:
            bad += 1
    assert verdict(5, "packet-conservation", bad == 0, f"20 configs, {bad} violations")


def test_criterion_06_aodv_bfs_oracle():
    cells = [(i, j) for i in range(4) for j in range(4)]
    combos = list(itertools.combinations(cells, 5))
    rng = random.Random(20260808)
    rng.shuffle(combos)
    radio = RadioParams(tx_range=100.0, interference_range=180.0)
    checked = mismatches = 0
    for combo in combos:
        positions = {k: (c[0] * 100.0, c[1] * 100.0) for k, c in enumerate(combo)}
        want = bfs_hops(positions, 0, 4, 100.0)
        if want is None:
            continue
        trace = static_trace(positions, duration=10.0)
        flows = [CbrFlowConfig(0, 4, interval=0.5, start=0.0, stop=10.0)]
        rep = run_network_sim(trace, flows, radio, seed=checked)
        if rep.route_hops.get((0, 4)) != want:
            mismatches += 1
        checked += 1
        if checked >= 120:
            break
    ok = checked >= 100 and mismatches == 0
    assert verdict(6, "aodv-bfs-oracle", ok, f"{checked} instances, {mismatches} mismatches")


def _fig_series(rows, model):
    return sorted((k, v) for m, k, v in rows if m == model)


def test_criterion_07_pdf_ordering(desk_outputs):
    fig7 = read_fig(desk_outputs[0] / "fig7_pdf_vs_cbr.csv")
    hmm = _fig_series(fig7, "HMM")
    umm = _fig_series(fig7, "UMM")
    hwm = _fig_series(fig7, "HWM")
    checks = []
    for (c, h), (_, u), (_, w) in zip(hmm, umm, hwm):
        checks.append(h > w and u > w)
    ok = all(checks) and len(checks) == 4
    detail = "; ".join(f"cbr{int(c)}: HMM {h:.3f} UMM {u:.3f} HWM {w:.3f}"
                       for (c, h), (_, u), (_, w) in zip(hmm, umm, hwm))
    assert verdict(7, "fig7-pdf-ordering", ok, detail)


def test_criterion_08_delay_rises_with_cbr(desk_outputs):
    fig8 = read_fig(desk_outputs[0] / "fig8_delay_vs_cbr.csv")
    ok = True
    details = []
    for model in ("HMM", "UMM", "HWM"):
        series = _fig_series(fig8, model)
        inversions = []
        for (_, a), (_, b) in zip(series, series[1:]):
            if b < a:
                inversions.append((a - b) / a)
        model_ok = len(inversions) == 0 or (len(inversions) == 1 and inversions[0] <= 0.05)
        ok = ok and model_ok
        details.append(f"{model} {' -> '.join(f'{v*1000:.0f}ms' for _, v in series)}")
    assert verdict(8, "fig8-delay-rises", ok, "; ".join(details))


def test_criterion_09_loss_ordering(desk_outputs):
    fig9 = read_fig(desk_outputs[0] / "fig9_loss_vs_cbr.csv")
    hmm = _fig_series(fig9, "HMM")
    umm = _fig_series(fig9, "UMM")
    hwm = _fig_series(fig9, "HWM")
    hits = sum(1 for (c, h), (_, u), (_, w) in zip(hmm, umm, hwm) if w > u >= h)
    ok = hits >= 3
    detail = "; ".join(f"cbr{int(c)}: HWM {w:.0f} UMM {u:.0f} HMM {h:.0f}"
                       for (c, h), (_, u), (_, w) in zip(hmm, umm, hwm))
    assert verdict(9, "fig9-loss-ordering", ok, f"{hits}/4 points; {detail}")


def test_criterion_10_pdr_declines_with_range_soft(desk_outputs):
    fig10 = read_fig(desk_outputs[0] / "fig10_pdr_vs_range.csv")
    declines = {}
    for model in ("HMM", "UMM", "HWM"):
        series = _fig_series(fig10, model)
        at_300 = dict(series)[300.0]
        peak = max(v for _, v in series)
        declines[model] = at_300 < peak
    holds = all(declines.values())
    detail = ", ".join(f"{m}: {'declines' if d else 'no decline'}"
                       for m, d in declines.items())
    if holds:
        assert verdict(10, "fig10-range-decline(soft)", True, detail)
        return
    # soft criterion: a miss downgrades to a documented finding
    readme = Path(__file__).resolve().parent.parent / "README.md"
    documented = "range-decline finding" in readme.read_text()
    assert verdict(10, "fig10-range-decline(soft)", documented,
                   f"{detail}; documented finding" if documented else detail)


def test_criterion_11_determinism(desk_outputs):
    out1, out2 = desk_outputs
    names1 = sorted(os.listdir(out1))
    names2 = sorted(os.listdir(out2))
    same = names1 == names2 and all(
        filecmp.cmp(out1 / n, out2 / n, shallow=False) for n in names1)
    assert verdict(11, "determinism", same, f"{len(names1)} files compared")


def test_criterion_12_ns2_round_trip(desk_traces):
    net, trace = desk_traces[(ModelKind.HMM, DESK.seeds[0])]
    text = export_trace(trace, NS2_MOVEMENT)
    parsed = parse_trace(text, NS2_MOVEMENT)
    fixed_point = export_trace(parsed, NS2_MOVEMENT) == text

    per = {}
    for r in parsed.records:
        per.setdefault(r.vehicle, []).append(r)
    for v in per.values():
        v.sort(key=lambda r: r.time)

    def interp(recs, t):
        if t <= recs[0].time:
            return (recs[0].x, recs[0].y)
        if t >= recs[-1].time:
            return (recs[-1].x, recs[-1].y)
        for a, b in zip(recs, recs[1:]):
            if a.time <= t <= b.time:
                f = 0.0 if b.time == a.time else (t - a.time) / (b.time - a.time)
                return (a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f)

    worst = 0.0
    for r in trace.records:
        x, y = interp(per[r.vehicle], r.time)
        worst = max(worst, math.hypot(x - r.x, y - r.y))
    ok = fixed_point and worst <= 1e-6
    assert verdict(12, "ns2-round-trip", ok,
                   f"fixed point {fixed_point}, worst deviation {worst:.2e} m")
