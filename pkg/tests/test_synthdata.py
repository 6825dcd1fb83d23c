import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drpinn.ecm import ArrheniusLaw, EcmSpec, RcBranch, TempEcmSpec, total_current
from drpinn.synthdata import (NormalizationInfo, default_t_end, denormalize, generate_static,
                              generate_temperature, normalize, read_csv, write_csv)

TABLE1 = EcmSpec(25.0, (RcBranch(3.5, 0.1), RcBranch(8.0, 0.5)), 1.0)
LAW0 = ArrheniusLaw.from_reference(25.0, 294.0, 0.76)
TSPEC = TempEcmSpec(LAW0, ((ArrheniusLaw(LAW0.a * 0.5, 0.76), 0.5),), 50.0)
TEMPS = np.linspace(294.0, 324.0, 10)


def test_static_noiseless_matches_forward_model_bitwise():
    ds = generate_static(TABLE1, 50, 0.0, seed=3)
    assert len(ds) == 50
    assert ds.t[0] == 0.0 and ds.t[-1] == ds.t_end == 5 * 4.0
    assert ds.current[0] == pytest.approx(0.450714285714, abs=1e-12)
    np.testing.assert_array_equal(ds.current, total_current(TABLE1, ds.t))
    assert all(s.temperature is None for s in ds.samples)


def test_two_samples_hit_endpoints():
    ds = generate_static(TABLE1, 2, 0.0, seed=0, t_end=7.0)
    np.testing.assert_array_equal(ds.t, [0.0, 7.0])


def test_pure_resistor_needs_t_end():
    with pytest.raises(ValueError):
        generate_static(EcmSpec(25.0), 10, 0.0, seed=0)
    ds = generate_static(EcmSpec(25.0), 10, 0.0, seed=0, t_end=1.0)
    np.testing.assert_array_equal(ds.current, 0.04)


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        generate_static(TABLE1, 1, 0.0, seed=0)
    with pytest.raises(ValueError):
        generate_static(TABLE1, 10, -0.1, seed=0)
    with pytest.raises(ValueError):
        generate_temperature(TSPEC, [], 10, 0.0, seed=0)
    with pytest.raises(ValueError):
        generate_temperature(TSPEC, [300.0, -1.0], 10, 0.0, seed=0)


def test_static_noise_statistics():
    n, sigma = 100_000, 0.2
    ds = generate_static(TABLE1, n, sigma, seed=11)
    resid = ds.current - ds.clean
    assert abs(resid.mean()) < 4 * sigma / math.sqrt(n)
    assert resid.std() == pytest.approx(sigma, rel=0.02)
    assert np.abs(resid).mean() == pytest.approx(sigma * math.sqrt(2 / math.pi), rel=0.01)


def test_static_noise_uses_documented_stream():
    ds = generate_static(TABLE1, 20, 0.3, seed=5)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(5)))
    np.testing.assert_allclose(ds.current - ds.clean, rng.normal(0.0, 1.0, 20) * 0.3, rtol=0, atol=1e-15)


def test_determinism_byte_identical(tmp_path):
    a = write_csv(generate_static(TABLE1, 50, 0.2, seed=9), tmp_path / "a.csv")
    b = write_csv(generate_static(TABLE1, 50, 0.2, seed=9), tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()
    c = write_csv(generate_static(TABLE1, 50, 0.2, seed=10), tmp_path / "c.csv")
    assert a.read_bytes() != c.read_bytes()


def test_temperature_dataset_shape_and_exactness():
    ds = generate_temperature(TSPEC, TEMPS, 20, 0.0, seed=0)
    assert len(ds) == 200
    np.testing.assert_array_equal(ds.temperatures, TEMPS)
    for T in TEMPS:
        k = ds.temperature == T
        np.testing.assert_array_equal(ds.current[k], total_current(TSPEC.materialize(T), ds.t[k]))


def test_temperature_noise_std_is_sigma_over_current():
    n, sigma = 100_000, 0.4
    ds = generate_temperature(TSPEC, [300.0], n, sigma, seed=2)
    z = (ds.current - ds.clean) * ds.clean / sigma
    assert abs(z.mean()) < 4 / math.sqrt(n)
    assert z.std() == pytest.approx(1.0, rel=0.02)
    std = sigma / ds.clean
    assert np.argmin(std) == np.argmax(ds.clean)


def test_temperature_streams_are_spawned_per_temperature():
    ds = generate_temperature(TSPEC, TEMPS[:3], 5, 0.4, seed=8)
    streams = np.random.SeedSequence(8).spawn(3)
    for T, ss in zip(TEMPS[:3], streams):
        k = ds.temperature == T
        z = np.random.Generator(np.random.PCG64(ss)).normal(0.0, 1.0, 5)
        np.testing.assert_allclose(ds.current[k] - ds.clean[k], z * 0.4 / ds.clean[k], rtol=1e-12)


def test_t_end_rules():
    per = generate_temperature(TSPEC, TEMPS, 20, 0.0, seed=0)
    for T in TEMPS:
        assert per.t[per.temperature == T].max() == pytest.approx(default_t_end(TSPEC.materialize(T)))
    glob = generate_temperature(TSPEC, TEMPS, 20, 0.0, seed=0, t_end_rule="global")
    ends = {glob.t[glob.temperature == T].max() for T in TEMPS}
    assert ends == {default_t_end(TSPEC.materialize(294.0))}
    with pytest.raises(ValueError):
        generate_temperature(TSPEC, TEMPS, 20, 0.0, seed=0, t_end_rule="other")


# normalization ------------------------------------------------------------------------------

def test_normalize_static_endpoints():
    ds = generate_static(TABLE1, 50, 0.0, seed=0)
    nd, nm = normalize(ds)
    assert nd.normalized and nd.t[-1] == 1.0 and nd.t[0] == 0.0
    assert nm.t_scale == ds.t_end
    assert np.max(np.abs(nd.current)) == 1.0
    assert normalize(nd)[0] is nd


def test_normalize_temperature_endpoints():
    ds = generate_temperature(TSPEC, TEMPS, 20, 0.0, seed=0)
    nd, nm = normalize(ds)
    assert nm.temp(294.0) == -1.0 and nm.temp(324.0) == 1.0
    assert nd.temperature.min() == -1.0 and nd.temperature.max() == 1.0
    # per-measurement scales: every measurement spans [0, 1] in time and peaks at 1
    for Tn in np.unique(nd.temperature):
        k = nd.temperature == Tn
        assert nd.t[k].max() == 1.0
        assert np.abs(nd.current[k]).max() == 1.0


def test_single_temperature_maps_to_zero():
    ds = generate_temperature(TSPEC, [300.0], 10, 0.0, seed=0)
    nd, _ = normalize(ds)
    np.testing.assert_array_equal(nd.temperature, 0.0)


@pytest.mark.parametrize("make", [
    lambda: generate_static(TABLE1, 50, 0.2, seed=4),
    lambda: generate_temperature(TSPEC, TEMPS, 20, 0.4, seed=4),
])
def test_round_trip(make):
    ds = make()
    back = denormalize(normalize(ds)[0])
    for a, b in ((ds.t, back.t), (ds.current, back.current), (ds.clean, back.clean)):
        nz = a != 0
        assert np.max(np.abs(b[nz] / a[nz] - 1)) < 1e-14
    if ds.is_temperature:
        assert np.max(np.abs(back.temperature / ds.temperature - 1)) < 1e-14


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=20), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_round_trip_property(values, t_scale, c_scale):
    nm = NormalizationInfo(t_scale, c_scale)
    x = np.array(values)
    assert np.max(np.abs(nm.time_inv(nm.time(x)) / x - 1)) < 1e-14
    assert np.max(np.abs(nm.current_inv(nm.current(x)) / x - 1)) < 1e-14


def test_empty_dataset_rejected():
    ds = generate_static(TABLE1, 5, 0.0, seed=0)
    ds.t = ds.t[:0]
    with pytest.raises(ValueError):
        normalize(ds)


# persistence ----------------------------------------------------------------------------------

def test_csv_round_trip_static(tmp_path):
    ds = generate_static(TABLE1, 50, 0.2, seed=1)
    path = write_csv(ds, tmp_path / "sub" / "d.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "t,temperature,current"
    assert lines[1].split(",")[1] == ""
    meta = json.loads(path.with_suffix(".json").read_text())
    assert meta["sigma"] == 0.2 and meta["seed"] == 1
    back = read_csv(path)
    np.testing.assert_array_equal(back.t, ds.t)
    np.testing.assert_array_equal(back.current, ds.current)
    np.testing.assert_array_equal(back.clean, ds.clean)
    assert back.spec == ds.spec and back.norm == ds.norm and not back.is_temperature


def test_csv_round_trip_temperature(tmp_path):
    ds = generate_temperature(TSPEC, TEMPS, 20, 0.4, seed=1)
    back = read_csv(write_csv(ds, tmp_path / "d.csv"))
    np.testing.assert_array_equal(back.temperature, ds.temperature)
    np.testing.assert_array_equal(back.current, ds.current)
    assert back.norm == ds.norm
    assert back.spec == ds.spec
