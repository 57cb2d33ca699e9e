import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from cmsnb.model import ModelSpec, PanelData, constraints_satisfied, free_parameters
from cmsnb.priors import (
    Prior, PriorSpec, default_priors, log_prior, sample_from_prior, swap_regimes,
)
from conftest import small_instance

MODEL = ModelSpec(en_covariates=("x0",), ob_covariates=("x0",), p12_covariates=("z0",),
                  p23_covariates=("z0",))


@pytest.mark.parametrize("prior,ref", [
    (Prior("normal", 1.0, 2.0), stats.norm(1, 2)),
    (Prior("cauchy", 0.0, 2.5), stats.cauchy(0, 2.5)),
    (Prior("uniform", 0.0, 10.0), stats.uniform(0, 10)),
    (Prior("gamma", 2.0, 0.5), stats.gamma(2.0, scale=2.0)),
])
def test_prior_logpdf_matches_scipy(prior, ref):
    for v in (0.3, 1.7, 4.2):
        assert prior.logpdf(v) == pytest.approx(ref.logpdf(v), rel=1e-12)


def test_prior_bounds():
    assert Prior("uniform", 0, 1).logpdf(1.0) == -math.inf
    assert Prior("gamma", 1, 1).logpdf(-1) == -math.inf
    with pytest.raises(ValueError):
        Prior("normal", 0, -1)
    with pytest.raises(ValueError):
        Prior("lognormal", 0, 1)


def test_default_scales_follow_the_data():
    data, _ = small_instance(N=3, T=30, W=np.array([[0, .5, 0], [.5, 0, .25], [0, .25, 0]]))
    spec = default_priors(data)
    sd = float(np.std(data.z[:, :, 0]))
    assert spec.alpha_scales["z0"] == pytest.approx(2.5 / (2 * sd))
    assert spec.spat_sd == pytest.approx(0.36 / 0.5)
    bad = PanelData(data.y, data.x, np.ones_like(data.z), data.W, z_names=("flat",))
    with pytest.raises(ValueError, match="flat"):
        default_priors(bad)


def test_prior_spec_round_trip():
    spec = PriorSpec(alpha_scales={"a": 1.5}, spat_sd_by_transition={"23": 0.5})
    assert PriorSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError):
        PriorSpec.from_dict({"nonsense": 1})


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_prior_draws_satisfy_constraints(seed):
    data, _ = small_instance(N=3, T=10)
    spec = default_priors(data)
    v = sample_from_prior(spec, data, MODEL, np.random.default_rng(seed))
    assert constraints_satisfied(v.count, data, spec.eps_rate, spec.eps_rho)
    assert np.isfinite(log_prior(v, spec, data, MODEL))


def test_log_prior_truncation():
    data, v = small_instance(N=2, T=6)
    spec = default_priors(data)
    layout = free_parameters(MODEL, data)
    from cmsnb.model import from_flat, to_flat
    v.count.beta0_mean_en, v.count.beta0_mean_ob = 0.0, 1.0
    v = from_flat(to_flat(v, layout), layout, data)
    assert np.isfinite(log_prior(v, spec, data, MODEL))
    assert log_prior(swap_regimes(v), spec, data, MODEL) == -math.inf
    v.count.r_en = 11.0
    assert log_prior(v, spec, data, MODEL) == -math.inf
