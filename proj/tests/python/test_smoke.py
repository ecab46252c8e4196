import math
from pathlib import Path

import numpy as np
import pytest

import avgeo

DATA = Path(__file__).resolve().parents[2] / "data"


def test_unit_round_trip():
    v = avgeo.to_unit(48.8, 2.3)
    assert v.shape == (3,)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-15)
    lat, lon = avgeo.from_unit(v)
    assert lat == pytest.approx(48.8, abs=1e-12)
    assert lon == pytest.approx(2.3, abs=1e-12)


def test_distance_and_maps():
    quarter = math.pi / 2 * avgeo.EARTH_RADIUS_KM
    assert avgeo.geodesic_distance_km((0, 0), (0, 90)) == pytest.approx(quarter, rel=1e-12)
    a, b = avgeo.to_unit(10, 20), avgeo.to_unit(-30, 100)
    assert np.allclose(avgeo.exp_map(a, avgeo.log_map(a, b)), b, atol=1e-12)
    mid, vel = avgeo.geodesic_interpolate(a, b, 0.5)
    d = math.acos(float(a @ b))
    assert np.linalg.norm(vel) == pytest.approx(d, abs=1e-12)
    assert math.acos(min(1.0, float(a @ mid))) == pytest.approx(d / 2, abs=1e-12)


def test_invalid_input_maps_to_value_error():
    with pytest.raises(avgeo.InvalidInput):
        avgeo.to_unit(91.0, 0.0)
    with pytest.raises(ValueError):
        avgeo.from_unit(np.zeros(3))
    with pytest.raises(avgeo.SingularityError):
        avgeo.log_map(avgeo.to_unit(0, 0), avgeo.to_unit(0, 180))


def test_cells_and_r_geo():
    token = avgeo.cell_token((46.0, 11.0), 5)
    face, digits = token.split("/")
    assert 0 <= int(face) < 6 and len(digits) == 5
    assert avgeo.r_geo((12.5, -40.0), (12.5, -40.0)) == 1.0
    assert avgeo.r_geo((12.5, -40.0), (-12.5, 140.0)) == 0.0
    with pytest.raises(ValueError):
        avgeo.r_geo((0, 0), (0, 0), levels=[1, 5], weights=[0.5, 0.6])


def test_decompose_prototype_dictionary():
    kernels = np.eye(6)
    d = avgeo.Dictionary(kernels, 3)
    assert d.block_size == 2
    x = 0.9 * kernels[:, 4] + 0.5 * kernels[:, 1]
    steps, residual = d.decompose(x, 2)
    assert [s["class"] for s in steps] == [2, 0]
    assert [s["kernel"] for s in steps] == [4, 1]
    assert np.allclose(residual, 0.0)
    r = avgeo.Dictionary.random(16, 4, 4, seed=3)
    assert np.allclose(np.linalg.norm(r.kernels, axis=0), 1.0)


def test_zero_flow_is_uniform():
    f = avgeo.FlowModel.zero(2)
    pts = np.array([[0.0, 0.0], [45.0, 90.0], [-80.0, -170.0]])
    lp = f.log_likelihood(pts, np.zeros(2), steps=16)
    assert np.allclose(lp, -math.log(4 * math.pi), atol=1e-9)
    samples = f.sample(np.zeros(2), 5, steps=4, seed=1)
    assert samples.shape == (5, 2)
    with pytest.raises(ValueError):
        f.sample(np.zeros(3), 1)


def test_gazetteer_and_rewards():
    g = avgeo.Gazetteer.load(str(DATA / "gazetteer_fixture.geojson"))
    assert {"usa", "canada", "testland"} <= set(g.names)
    ents = g.parse_entities("Looks like Canada to me")
    assert ents == ["canada"]
    assert g.r_align(ents, (39.0, -98.0)) == 0.0
    assert g.r_align(["usa"], (39.0, -98.0)) == 1.0
    assert avgeo.group_advantages([0.0, 1.0]) == pytest.approx([-1.0, 1.0], abs=1e-7)


def test_metrics():
    truths = np.zeros((4, 2))
    preds = np.array([[0.0, km / avgeo.EARTH_RADIUS_KM * 180 / math.pi] for km in (10, 100, 1000, 3000)])
    rep = avgeo.evaluate(preds, truths)
    assert rep["accuracy"][25.0] == 0.25
    assert rep["accuracy"][2500.0] == 0.75
    assert rep["median_error_km"] == pytest.approx(550.0, rel=1e-9)
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-60, 60, 20), rng.uniform(-180, 180, 20)])
    m = avgeo.prd_metrics(pts, pts, 3)
    assert m["precision"] == 1.0 and m["coverage"] == 1.0
