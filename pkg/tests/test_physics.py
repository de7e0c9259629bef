"""Force distribution, walker kinematics, and sensor transduction.

The statistical checks first compute an independent oracle (analytic moments
or a brute-force sum) and then compare the implementation against it.
"""

import math
import random
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corridorsim import (
    FloorConfig,
    GaitParams,
    SensorModel,
    Walker,
    build_floor,
    corner_loads,
    transduce,
    world_forces,
)
from corridorsim.physics import (
    default_sensor_models,
    load_scenario,
    pir_state,
    walker_contacts,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


# -- bilinear corner split ---------------------------------------------------

@given(u=unit, v=unit, w=st.floats(1.0, 2000.0))
def test_corner_loads_conserve_weight(u, v, w):
    assert math.isclose(sum(corner_loads(u, v, w)), w, rel_tol=1e-12)


@given(u=unit, v=unit, w=st.floats(1.0, 2000.0))
def test_corner_loads_match_tensor_product(u, v, w):
    # oracle: outer product of the 1-D lever-arm splits
    fx = (1.0 - u, u)
    fy = (1.0 - v, v)
    expect = (fx[0] * fy[0] * w, fx[1] * fy[0] * w,
              fx[0] * fy[1] * w, fx[1] * fy[1] * w)
    got = corner_loads(u, v, w)
    for g, e in zip(got, expect):
        assert math.isclose(g, e, rel_tol=1e-12, abs_tol=1e-12)


@given(u=unit, v=unit)
def test_corner_centroid_recovers_contact(u, v):
    # the weighted centroid of the four corner loads is exactly the contact
    # point; the tracker's position estimate rests on this identity
    nw, ne, sw, se = corner_loads(u, v, 800.0)
    cx = (nw * 0.0 + ne * 1.0 + sw * 0.0 + se * 1.0) / 800.0
    cy = (nw * 0.0 + ne * 0.0 + sw * 1.0 + se * 1.0) / 800.0
    assert math.isclose(cx, u, abs_tol=1e-9)
    assert math.isclose(cy, v, abs_tol=1e-9)


def test_corner_loads_extremes():
    assert corner_loads(0.0, 0.0, 100.0) == (100.0, 0.0, 0.0, 0.0)
    assert corner_loads(1.0, 1.0, 100.0) == (0.0, 0.0, 0.0, 100.0)
    assert corner_loads(0.5, 0.5, 100.0) == (25.0, 25.0, 25.0, 25.0)


def test_corner_loads_rejects_out_of_range():
    with pytest.raises(ValueError):
        corner_loads(-0.1, 0.5, 100.0)
    with pytest.raises(ValueError):
        corner_loads(0.5, 1.1, 100.0)


# -- world forces -------------------------------------------------------------

def test_world_forces_conservation(topo):
    w = Walker(0, 800.0, [(1.5, 0.9, 0.0), (1.5, 17.7, 16.8)])
    rng = random.Random(7)
    for _ in range(200):
        t = rng.uniform(0.0, 16.8)
        forces = world_forces(topo, [w], t)
        assert math.isclose(sum(forces.values()), 800.0, abs_tol=1e-9)


def test_world_forces_superposition(topo):
    wa = Walker(0, 700.0, [(1.5, 2.0, 0.0), (1.5, 10.0, 8.0)])
    wb = Walker(1, 900.0, [(2.1, 10.0, 0.0), (2.1, 2.0, 8.0)])
    rng = random.Random(3)
    for _ in range(100):
        t = rng.uniform(0.0, 8.0)
        fa = world_forces(topo, [wa], t)
        fb = world_forces(topo, [wb], t)
        both = world_forces(topo, [wa, wb], t)
        for sid in set(fa) | set(fb):
            assert math.isclose(
                both.get(sid, 0.0), fa.get(sid, 0.0) + fb.get(sid, 0.0),
                abs_tol=1e-9,
            )


def test_world_forces_edge_tiles_leak(topo):
    # contacts on boundary tiles load phantom corners without sensors, so
    # the measured sum undershoots the walker weight there
    w = Walker(0, 800.0, [(0.1, 5.0, 0.0), (0.1, 6.0, 1.0)])
    forces = world_forces(topo, [w], 0.5)
    assert sum(forces.values()) < 800.0


def test_world_forces_off_floor_is_empty(topo):
    w = Walker(0, 800.0, [(1.5, 2.0, 5.0), (1.5, 3.0, 6.0)])
    assert world_forces(topo, [w], 1.0) == {}


# -- walker kinematics --------------------------------------------------------

def test_walker_interpolation():
    w = Walker(0, 800.0, [(0.0, 0.0, 0.0), (0.0, 4.0, 4.0), (2.0, 4.0, 6.0)])
    assert w.position_at(2.0) == pytest.approx((0.0, 2.0))
    assert w.position_at(5.0) == pytest.approx((1.0, 4.0))
    assert w.position_at(-0.1) is None
    assert w.position_at(6.1) is None
    assert w.speed_at(1.0) == pytest.approx(1.0)
    assert w.heading_at(5.0) == pytest.approx((1.0, 0.0))


def test_walker_validation():
    with pytest.raises(ValueError):
        Walker(0, -5.0, [(0, 0, 0)]).validate()
    with pytest.raises(ValueError):
        Walker(0, 800.0, []).validate()
    with pytest.raises(ValueError):
        Walker(0, 800.0, [(0, 0, 1.0), (1, 1, 1.0)]).validate()
    with pytest.raises(ValueError):
        Walker(0, 800.0, [(0, 0, 0)], mode="hover").validate()


def test_gait_contacts_conserve_weight():
    w = Walker(0, 800.0, [(1.5, 1.0, 0.0), (1.5, 15.0, 14.0)], mode="gait")
    for k in range(140):
        t = k * 0.1
        contacts = walker_contacts(w, t)
        assert 1 <= len(contacts) <= 2
        assert math.isclose(sum(c[2] for c in contacts), 800.0, abs_tol=1e-9)


def test_gait_feet_near_body_line():
    gait = GaitParams(step_length_m=0.7, cadence_hz=1.8)
    w = Walker(0, 800.0, [(1.5, 1.0, 0.0), (1.5, 15.0, 14.0)],
               mode="gait", gait=gait)
    for k in range(140):
        t = k * 0.1
        body = w.position_at(t)
        for cx, cy, _ in walker_contacts(w, t):
            assert math.hypot(cx - body[0], cy - body[1]) <= gait.step_length_m


def test_point_contact_is_body_position():
    w = Walker(0, 800.0, [(1.0, 2.0, 0.0), (2.0, 2.0, 1.0)])
    contacts = walker_contacts(w, 0.5)
    assert contacts == [(pytest.approx(1.5), pytest.approx(2.0), 800.0)]


# -- sensor transduction -------------------------------------------------------

def test_transduce_moments():
    # oracle: reading = offset - gain*F + N(0, sigma), quantized; over 1e5
    # draws the sample mean converges to the analytic mean and the sample
    # sigma to sqrt(sigma^2 + 1/12) (rounding adds uniform quantization noise)
    model = SensorModel(sensor_id=0, zero_offset=1000, gain=0.5, noise_sigma=4.0)
    rng = random.Random(42)
    vals = [transduce(model, 100.0, rng) for _ in range(100_000)]
    mean = statistics.fmean(vals)
    sigma = statistics.pstdev(vals)
    assert abs(mean - (1000 - 0.5 * 100.0)) < 0.1
    assert abs(sigma - math.sqrt(4.0**2 + 1.0 / 12.0)) < 0.1


def test_transduce_reading_drops_under_load():
    model = SensorModel(sensor_id=0, zero_offset=1000, gain=0.5, noise_sigma=0.0)
    rng = random.Random(0)
    assert transduce(model, 0.0, rng) == 1000
    assert transduce(model, 100.0, rng) == 950
    assert transduce(model, 400.0, rng) < transduce(model, 100.0, rng)


def test_transduce_clamps_and_validates():
    model = SensorModel(sensor_id=0, zero_offset=100, gain=1.0, noise_sigma=0.0)
    rng = random.Random(0)
    assert transduce(model, 500.0, rng) == 0
    high = SensorModel(sensor_id=0, zero_offset=4095, gain=1.0, noise_sigma=0.0)
    assert transduce(high, 0.0, rng) == 4095
    with pytest.raises(ValueError):
        transduce(model, -1.0, rng)


def test_default_model_priors(topo):
    for seed in range(3):
        models = default_sensor_models(topo, seed)
        assert len(models) == topo.n_sensors
        for m in models:
            assert 400 <= m.zero_offset <= 1300
            assert 0.3 <= m.gain <= 0.7
            assert 2.0 <= m.noise_sigma <= 6.0
    # hand construction: sensors are heterogeneous
    offsets = {m.zero_offset for m in default_sensor_models(topo, 0)}
    assert len(offsets) > 10


def test_default_models_deterministic(topo):
    assert default_sensor_models(topo, 5) == default_sensor_models(topo, 5)
    assert default_sensor_models(topo, 5) != default_sensor_models(topo, 6)


# -- PIR ------------------------------------------------------------------------

def test_pir_sees_motion_not_presence():
    zone = (0.0, 0.0, 3.0, 3.0)
    moving = Walker(0, 800.0, [(1.0, 1.0, 0.0), (1.0, 2.0, 1.0)])
    parked = Walker(1, 800.0, [(1.0, 1.0, 0.0), (1.0, 1.0, 100.0)])
    outside = Walker(2, 800.0, [(1.0, 5.0, 0.0), (1.0, 6.0, 1.0)])
    assert pir_state(zone, [moving], 0.5)
    assert not pir_state(zone, [parked], 0.5)
    assert not pir_state(zone, [outside], 0.5)


def test_pir_speed_threshold():
    zone = (0.0, 0.0, 3.0, 3.0)
    creeping = Walker(0, 800.0, [(1.0, 1.0, 0.0), (1.0, 1.05, 1.0)])
    assert not pir_state(zone, [creeping], 0.5, speed_threshold_mps=0.1)
    assert pir_state(zone, [creeping], 0.5, speed_threshold_mps=0.01)


# -- scenario files --------------------------------------------------------------

def test_load_scenario(tmp_path):
    p = tmp_path / "scene.txt"
    p.write_text(
        "# a crossing plus one tweaked sensor\n"
        "walker 0 800 point 1.5:0.9:6,1.5:17.7:22.8\n"
        "walker 1 650 gait 2.1:17.7:6,2.1:0.9:22.8 step=0.6 cadence=2.0\n"
        "sensor 12 offset=900 gain=0.5 sigma=0\n"
        "truth 1\n"
        "radio.loss_prob=0.1\n"
    )
    scn = load_scenario(str(p))
    assert len(scn.walkers) == 2
    assert scn.walkers[0].path[0] == (1.5, 0.9, 6.0)
    assert scn.walkers[1].mode == "gait"
    assert scn.walkers[1].gait.step_length_m == 0.6
    assert scn.sensor_overrides[12]["offset"] == 900
    assert scn.truth_export is True
    assert scn.radio_overrides == {"loss_prob": 0.1}


def test_load_scenario_rejects_garbage(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("walker 0 800 point\n")
    with pytest.raises(ValueError):
        load_scenario(str(p))
