import pytest

from corridorsim import (
    Engine,
    FloorConfig,
    Scenario,
    SimConfig,
    Walker,
    build_floor,
)


@pytest.fixture(scope="session")
def topo():
    return build_floor(FloorConfig())


def make_engine(
    walkers=None,
    rate_hz=8.0,
    duration_s=10.0,
    seed=0,
    algorithm="null",
    sensor_overrides=None,
    radio_overrides=None,
    truth=False,
    algo_params=None,
    keep_streams=True,
):
    """One-stop engine builder for tests; defaults match the shipped config."""
    floor = build_floor(FloorConfig())
    scn = Scenario(
        walkers=walkers or [],
        sensor_overrides=sensor_overrides or {},
        radio_overrides=radio_overrides or {},
        truth_export=truth,
    )
    cfg = SimConfig(sample_rate_hz=rate_hz, duration_s=duration_s, seed=seed)
    return Engine(
        floor, scn, cfg, algorithm=algorithm, algo_params=algo_params,
        keep_streams=keep_streams,
    )


def crossing_walker(wid=0, weight_n=800.0, x=1.5, y0=0.9, y1=17.7,
                    speed=1.0, t0=6.0, mode="point"):
    """Straight hallway crossing starting after baseline warmup."""
    t1 = t0 + abs(y1 - y0) / speed
    return Walker(wid, weight_n, [(x, y0, t0), (x, y1, t1)], mode=mode)


def quiet_sensor_overrides(topo, offset=4000, gain=8.0):
    """Noise-free homogeneous sensors; keeps quantization analysis simple."""
    return {
        sid: {"offset": offset, "gain": gain, "sigma": 0.0}
        for sid in range(topo.n_sensors)
    }
