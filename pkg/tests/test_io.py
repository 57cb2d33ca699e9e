import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmsnb.draws import WaicAccumulator
from cmsnb.io import (
    PanelFormatError, bhattacharyya_weight, load_draws, load_panel, neighbours_from_distributions,
    patient_distributions, persist_draws, write_csv, write_panel,
)
from cmsnb.model import ModelSpec
from cmsnb.priors import default_priors
from cmsnb.samplers import SamplerConfig, gibbs_run
from conftest import small_instance


def test_panel_round_trip(tmp_path):
    data, _ = small_instance(N=3, T=5, W=np.array([[0, .5, 0], [.5, 0, .2], [0, .2, 0]]))
    f = [str(tmp_path / n) for n in ("c.csv", "x.csv", "w.csv")]
    write_panel(data, *f)
    back = load_panel(*f, emission_covariates=["x0"], transition_covariates=["z0"],
                      standardize=False)
    np.testing.assert_array_equal(back.y, data.y)
    np.testing.assert_array_equal(back.x, data.x)
    np.testing.assert_array_equal(back.z, data.z)
    np.testing.assert_array_equal(back.W, data.W)
    std = load_panel(*f)
    assert std.x_names == ("x0", "z0")
    np.testing.assert_allclose(std.x.mean(axis=(0, 1)), 0, atol=1e-12)
    np.testing.assert_allclose(std.x.std(axis=(0, 1)), 1, atol=1e-12)
    assert set(std.transforms) == {"x0", "z0"}


def test_panel_errors_name_the_line(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("area_id,week,count\na,1,3\na,2,-1\n")
    with pytest.raises(PanelFormatError, match=r"c.csv:3"):
        load_panel(str(p))
    p.write_text("area_id,week,count\na,1,3\na,1,4\n")
    with pytest.raises(PanelFormatError, match="duplicate"):
        load_panel(str(p))
    p.write_text("area_id,week,count\na,1,3\nb,2,4\n")
    with pytest.raises(PanelFormatError, match="missing count"):
        load_panel(str(p))
    p.write_text("area_id,week\na,1\n")
    with pytest.raises(PanelFormatError, match="missing columns"):
        load_panel(str(p))


def test_neighbour_file_symmetry(tmp_path):
    c = tmp_path / "c.csv"
    c.write_text("area_id,week,count\na,1,1\nb,1,2\nc,1,0\n")
    w = tmp_path / "w.csv"
    w.write_text("from_area,to_area,weight\na,b,0.5\nc,b,1\n")
    W = load_panel(str(c), neighbors_path=str(w)).W
    assert W[1, 0] == W[0, 1] == 0.5 and W[1, 2] == W[2, 1] == 1.0
    W = load_panel(str(c), neighbors_path=str(w), asymmetric=True).W
    assert W[1, 0] == 0.5 and W[0, 1] == 0.0
    w.write_text("from_area,to_area,weight\na,b,0.5\nb,a,0.4\n")
    with pytest.raises(PanelFormatError, match="differ by direction"):
        load_panel(str(c), neighbors_path=str(w))
    w.write_text("from_area,to_area,weight\na,a,0.5\n")
    with pytest.raises(PanelFormatError):
        load_panel(str(c), neighbors_path=str(w))


prob = st.lists(st.floats(0, 1), min_size=3, max_size=3).filter(lambda v: sum(v) > 0.01).map(
    lambda v: np.array(v) / sum(v))


@settings(max_examples=50, deadline=None)
@given(p=prob, q=prob)
def test_bhattacharyya_properties(p, q):
    b = bhattacharyya_weight(p, q)
    assert 0 <= b <= 1
    assert b == pytest.approx(bhattacharyya_weight(q, p), abs=1e-15)
    assert bhattacharyya_weight(p, p) == pytest.approx(1.0, abs=1e-12)


def test_top_k_neighbours(tmp_path):
    P = np.array([[.5, .5, 0, 0], [.5, .5, 0, 0], [.4, .6, 0, 0], [0, 0, .5, .5], [0, .1, .4, .5]])
    W = neighbours_from_distributions(P, k=2)
    assert (np.count_nonzero(W, axis=1) <= 2).all()
    assert W[0, 1] == pytest.approx(1.0) and W[3, 4] > 0 and W[3, 0] == 0
    assert np.all(np.diag(W) == 0)
    f = tmp_path / "pat.csv"
    write_csv(str(f), ("area_id", "neighborhood_id", "n"),
              [("a", "h1", 3), ("a", "h2", 1), ("b", "h2", 4)])
    areas, D = patient_distributions(str(f))
    assert areas == ["a", "b"]
    np.testing.assert_allclose(D, [[.75, .25], [0, 1]])


@pytest.fixture(scope="module")
def fitted():
    data, _ = small_instance(N=3, T=12)
    model = ModelSpec(en_covariates=("x0",), ob_covariates=("x0",), p23_covariates=("z0",))
    cfg = SamplerConfig(n_chains=2, n_iterations=60, burn_in=20, thin=3, seed=1)
    return gibbs_run(data, default_priors(data), cfg, model=model)


def test_draws_round_trip(tmp_path, fitted):
    persist_draws(fitted, tmp_path / "d")
    back = load_draws(tmp_path / "d")
    assert back == fitted
    for a, b in zip(back.waic, fitted.waic):
        assert a.n == b.n
        for k in ("lse", "mean", "m2"):
            np.testing.assert_array_equal(getattr(a, k), getattr(b, k))
    # persisting twice gives byte-identical files
    persist_draws(back, tmp_path / "e")
    for name in os.listdir(tmp_path / "d"):
        assert (tmp_path / "d" / name).read_bytes() == (tmp_path / "e" / name).read_bytes()


def test_truncated_draws_are_detected(tmp_path, fitted):
    persist_draws(fitted, tmp_path / "d")
    f = tmp_path / "d" / "states_chain1.bin"
    f.write_bytes(f.read_bytes()[:-3])
    with pytest.raises(ValueError, match="truncated"):
        load_draws(tmp_path / "d")
    (tmp_path / "d" / "meta.json").write_text("{not json")
    with pytest.raises(ValueError, match="corrupt"):
        load_draws(tmp_path / "d")


def test_waic_accumulator_needs_two_draws():
    acc = WaicAccumulator.empty((1, 2))
    acc.update(np.zeros((1, 2)))
    with pytest.raises(ValueError):
        acc.pointwise()


def test_bhattacharyya_worked_values():
    assert bhattacharyya_weight([0.5, 0.5], [0.25, 0.75]) == pytest.approx(
        np.sqrt(0.125) + np.sqrt(0.375), abs=1e-12)
    assert bhattacharyya_weight([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.96593, abs=1e-5)
    assert bhattacharyya_weight([0.2, 0.8], [0.2, 0.8]) == pytest.approx(1.0)
    assert bhattacharyya_weight([1.0, 0.0], [0.0, 1.0]) == 0.0
