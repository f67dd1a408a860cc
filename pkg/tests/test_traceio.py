import math

import pytest

from hybrist.mobility import MobilityConfig, MobilityTrace, TraceRecord, run_mobility
from hybrist.roadnet import ModelKind, TopologyParams, build_topology
from hybrist.traceio import NATIVE_CSV, NS2_MOVEMENT, export_trace, parse_trace


def small_trace():
    params = TopologyParams(corridor_length=1600.0, corridor_width=400.0,
                            metrobus_stations=3, main_road_stops=6, hwm_stops=2,
                            umm_stops=6, umm_grid_rows=3, umm_grid_cols=5)
    net = build_topology(params, ModelKind.HMM)
    cfg = MobilityConfig(duration=60.0, vehicle_count=8, seed=13)
    return run_mobility(net, cfg)


def positions_of(trace):
    per = {}
    for r in trace.records:
        per.setdefault(r.vehicle, []).append(r)
    for v in per.values():
        v.sort(key=lambda r: r.time)
    return per


def interp_clamped(recs, t):
    """Piecewise-linear position lookup clamped at the span ends."""
    if t <= recs[0].time:
        return (recs[0].x, recs[0].y)
    if t >= recs[-1].time:
        return (recs[-1].x, recs[-1].y)
    for a, b in zip(recs, recs[1:]):
        if a.time <= t <= b.time:
            if b.time == a.time:
                return (b.x, b.y)
            f = (t - a.time) / (b.time - a.time)
            return (a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f)
    raise AssertionError("unreachable")


class TestNativeCsv:
    def test_header_only_for_empty_trace(self):
        empty = MobilityTrace((), None, None)
        assert export_trace(empty, NATIVE_CSV) == "time,vehicle,x,y,speed\n"

    def test_round_trip_equality(self):
        trace = small_trace()
        text = export_trace(trace, NATIVE_CSV)
        again = export_trace(parse_trace(text, NATIVE_CSV), NATIVE_CSV)
        assert again == text

    def test_parse_rejects_garbage(self):
        with pytest.raises(ValueError):
            parse_trace("nope\n", NATIVE_CSV)
        with pytest.raises(ValueError):
            parse_trace("time,vehicle,x,y,speed\n1,2,3\n", NATIVE_CSV)

    def test_rows_match_records(self):
        trace = small_trace()
        text = export_trace(trace, NATIVE_CSV)
        assert len(text.splitlines()) == len(trace.records) + 1


class TestNs2Movement:
    def test_single_segment_literal_lines(self):
        dt = 15.0 / 13.89
        records = (
            TraceRecord(0.0, 0, 5.0, 10.0, 13.89),
            TraceRecord(dt, 0, 20.0, 10.0, 13.89),
        )
        text = export_trace(MobilityTrace(records, None, None), NS2_MOVEMENT)
        lines = text.splitlines()
        assert lines[0] == "$node_(0) set X_ 5.000000"
        assert lines[1] == "$node_(0) set Y_ 10.000000"
        assert lines[2] == "$node_(0) set Z_ 0.0"
        assert lines[3] == '$ns_ at 0.000000 "$node_(0) setdest 20.000000 10.000000 13.890000"'
        assert len(lines) == 4

    def test_empty_trace_empty_body(self):
        assert export_trace(MobilityTrace((), None, None), NS2_MOVEMENT) == ""

    def test_stationary_vehicle_init_only(self):
        records = (TraceRecord(0.0, 3, 1.0, 2.0, 0.0), TraceRecord(5.0, 3, 1.0, 2.0, 0.0))
        text = export_trace(MobilityTrace(records, None, None), NS2_MOVEMENT)
        assert text.splitlines() == [
            "$node_(3) set X_ 1.000000",
            "$node_(3) set Y_ 2.000000",
            "$node_(3) set Z_ 0.0",
        ]

    def test_export_parse_export_fixed_point(self):
        trace = small_trace()
        text = export_trace(trace, NS2_MOVEMENT)
        once = parse_trace(text, NS2_MOVEMENT)
        text2 = export_trace(once, NS2_MOVEMENT)
        assert text2 == text
        twice = parse_trace(text2, NS2_MOVEMENT)
        assert export_trace(twice, NS2_MOVEMENT) == text2

    def test_parsed_positions_match_source_within_tolerance(self):
        trace = small_trace()
        parsed = parse_trace(export_trace(trace, NS2_MOVEMENT), NS2_MOVEMENT)
        per = positions_of(parsed)
        for r in trace.records:
            x, y = interp_clamped(per[r.vehicle], r.time)
            assert math.hypot(x - r.x, y - r.y) <= 1e-6, (r.time, r.vehicle)

    def test_parse_rejects_garbage(self):
        with pytest.raises(ValueError):
            parse_trace("$node_(0) set Q_ 1.0\n", NS2_MOVEMENT)


def test_unknown_format_rejected():
    with pytest.raises(ValueError):
        export_trace(MobilityTrace((), None, None), "xml")
    with pytest.raises(ValueError):
        parse_trace("", "xml")
