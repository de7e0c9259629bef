"""Trace serialization: round trips, strict parsing, atomic writes."""

import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corridorsim import Actuation, AdcSample, PirEvent
from corridorsim.physics import default_sensor_models
from corridorsim.traceio import (
    FORMAT_VERSION,
    TraceError,
    TraceHeader,
    TraceWriter,
    format_record,
    model_digest,
    parse_record,
    read_trace,
)

from conftest import crossing_walker, make_engine


def header_for(eng):
    return TraceHeader(
        version=FORMAT_VERSION,
        tiles_x=eng.topo.config.tiles_x,
        tiles_y=eng.topo.config.tiles_y,
        rate_hz=eng.cfg.sample_rate_hz,
        seed=eng.cfg.seed,
        model_digest=model_digest(eng.models),
        end_t_us=eng.end_t_us,
    )


# -- record grammar ---------------------------------------------------------

record_strategy = st.one_of(
    st.tuples(st.just("S"), st.integers(0, 10**9), st.integers(0, 119),
              st.integers(0, 4095)),
    st.tuples(st.just("P"), st.integers(0, 10**9), st.integers(0, 28),
              st.booleans()),
    st.tuples(st.just("A"), st.integers(0, 10**9), st.integers(0, 29),
              st.just("led"), st.tuples(st.integers(0, 3), st.integers(0, 3),
                                        st.integers(0, 3))),
    st.tuples(st.just("A"), st.integers(0, 10**9), st.integers(0, 29),
              st.just("sound"), st.tuples(st.integers(0, 255))),
    st.tuples(st.just("T"), st.integers(0, 10**9), st.integers(0, 9),
              st.integers(0, 3000).map(lambda v: v / 1000.0),
              st.integers(0, 18600).map(lambda v: v / 1000.0)),
)


@settings(max_examples=200, deadline=None)
@given(rec=record_strategy)
def test_record_roundtrip(rec):
    assert parse_record(format_record(rec), 1) == rec


def test_parse_errors_carry_line_numbers():
    with pytest.raises(TraceError) as e:
        parse_record("S 100 5", 17)
    assert e.value.line_no == 17
    with pytest.raises(TraceError):
        parse_record("Q 0 0 0", 1)
    with pytest.raises(TraceError):
        parse_record("A 0 0 X 1", 1)
    with pytest.raises(TraceError):
        parse_record("S abc 0 0", 1)


# -- file round trips ----------------------------------------------------------

def test_write_read_roundtrip(tmp_path):
    eng = make_engine(duration_s=0.0)
    path = str(tmp_path / "run.trace")
    with TraceWriter(path, header_for(eng)) as w:
        w.write_sample(AdcSample(0, 3, 1000))
        w.write_pir(PirEvent(125_000, 2, True))
        w.write_actuation(Actuation(250_000, 4, "led", (3, 0, 0)))
        w.write_actuation(Actuation(250_000, 4, "sound", (7,)))
        w.write_truth(375_000, 0, 1.5, 2.4)
    header, records = read_trace(path)
    assert header.tiles_x == 5 and header.seed == 0
    assert records == [
        ("S", 0, 3, 1000),
        ("P", 125_000, 2, True),
        ("A", 250_000, 4, "led", (3, 0, 0)),
        ("A", 250_000, 4, "sound", (7,)),
        ("T", 375_000, 0, 1.5, 2.4),
    ]


def test_truth_positions_are_millimeters(tmp_path):
    eng = make_engine(duration_s=0.0)
    path = str(tmp_path / "mm.trace")
    with TraceWriter(path, header_for(eng)) as w:
        w.write_truth(0, 0, 1.23456, 2.0)
    _, records = read_trace(path)
    assert records[0][3] == pytest.approx(1.235)  # rounded to integer mm


def test_atomic_write(tmp_path):
    eng = make_engine(duration_s=0.0)
    path = str(tmp_path / "atomic.trace")
    w = TraceWriter(path, header_for(eng))
    assert os.path.exists(path + ".part")
    assert not os.path.exists(path)
    w.close()
    assert os.path.exists(path)
    assert not os.path.exists(path + ".part")


def test_abort_leaves_nothing(tmp_path):
    eng = make_engine(duration_s=0.0)
    path = str(tmp_path / "aborted.trace")
    w = TraceWriter(path, header_for(eng))
    w.write_sample(AdcSample(0, 0, 900))
    w.abort()
    assert not os.path.exists(path)
    assert not os.path.exists(path + ".part")


def test_context_manager_aborts_on_error(tmp_path):
    eng = make_engine(duration_s=0.0)
    path = str(tmp_path / "ctx.trace")
    with pytest.raises(RuntimeError):
        with TraceWriter(path, header_for(eng)):
            raise RuntimeError("boom")
    assert not os.path.exists(path)


# -- strict vs lenient parsing ----------------------------------------------------

def write_lines(tmp_path, lines, name="t.trace"):
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n")
    return str(p)


GOOD_HEADER = [
    "#version 1", "#tiles_x 5", "#tiles_y 31", "#rate_hz 8",
    "#seed 0", "#model_digest 0123456789abcdef",
]


def test_missing_header_key(tmp_path):
    path = write_lines(tmp_path, GOOD_HEADER[:-1] + ["S 0 0 1000"])
    with pytest.raises(TraceError, match="model_digest"):
        read_trace(path)


def test_bad_record_line_number(tmp_path):
    path = write_lines(tmp_path, GOOD_HEADER + ["S 0 0 1000", "S 1 nope 2"])
    with pytest.raises(TraceError) as e:
        read_trace(path)
    assert e.value.line_no == len(GOOD_HEADER) + 2


def test_decreasing_timestamps_rejected(tmp_path):
    path = write_lines(tmp_path, GOOD_HEADER + ["S 1000 0 900", "S 500 1 900"])
    with pytest.raises(TraceError, match="decrease"):
        read_trace(path)


def test_header_after_records_rejected(tmp_path):
    path = write_lines(tmp_path, GOOD_HEADER + ["S 0 0 900", "#seed 2"])
    with pytest.raises(TraceError):
        read_trace(path)


def test_lenient_stops_at_first_bad_line(tmp_path):
    path = write_lines(
        tmp_path, GOOD_HEADER + ["S 0 0 900", "S 125000 1 901", "garbage", "S 250000 2 902"]
    )
    _, records = read_trace(path, lenient=True)
    assert len(records) == 2
    assert records[-1] == ("S", 125_000, 1, 901)


def test_validate_against(tmp_path):
    eng = make_engine(duration_s=0.0)
    h = header_for(eng)
    h.validate_against(eng.topo, eng.models)  # self-consistent

    other = make_engine(duration_s=0.0, seed=99)
    with pytest.raises(ValueError, match="digest"):
        h.validate_against(eng.topo, other.models)


def test_model_digest_sensitivity():
    a = make_engine(duration_s=0.0, seed=1)
    b = make_engine(duration_s=0.0, seed=1)
    c = make_engine(duration_s=0.0, seed=2)
    assert model_digest(a.models) == model_digest(b.models)
    assert model_digest(a.models) != model_digest(c.models)


# -- record + replay through the engine -------------------------------------------

def test_recorded_run_replays_identically(tmp_path):
    path = str(tmp_path / "live.trace")
    live = make_engine(walkers=[crossing_walker()], duration_s=16.0, seed=7,
                       algorithm="centroid-tracker")
    with TraceWriter(path, header_for(live)) as w:
        w.attach(live)
        live.run()

    header, records = read_trace(path)
    replay = make_engine(duration_s=16.0, seed=7, algorithm="centroid-tracker")
    replay.run_replay(records, end_t_us=header.end_t_us)

    assert replay.samples == live.samples
    assert replay.pir_events == live.pir_events
    assert replay.track_obs == live.track_obs
    assert replay.stream_digest() == live.stream_digest()
