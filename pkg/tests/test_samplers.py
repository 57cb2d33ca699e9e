import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import small_instance
from cmsnb import _kernels as kern
from cmsnb.model import (
    LatentStates, ModelSpec, StateSpace, constraints_satisfied, free_parameters, from_flat,
    get_param, joint_loglik,
)
from cmsnb.priors import default_priors, log_prior
from cmsnb.samplers import (
    AdaptState, FilterDegeneracyError, SamplerConfig, _ChainState, forward_filter_area,
    gibbs_run, iffbs_run, iffbs_sample_area, iffbs_sequence_logprob, init_latent_chains,
    kernel_inputs, random_start, single_site_run,
)
from cmsnb.simulation import params_from_named, recovery_scenario, simulate_from_model, \
    synthetic_skeleton


def block_distribution(i, S, data, v, model):
    f = forward_filter_area(i, data, LatentStates(S), v, model)
    K = model.states.K
    return {seq: math.exp(iffbs_sequence_logprob(seq, f))
            for seq in itertools.product(range(1, K + 1), repeat=data.T)}


def total_variation(p, q):
    return 0.5 * sum(abs(p[k] - q.get(k, 0.0)) for k in p)


@pytest.mark.parametrize("seed", [0, 1])
def test_block_conditional_matches_enumeration(seed):
    model = ModelSpec()
    data, v = small_instance(N=2, T=3, seed=seed, spat=1.3)
    S = np.array([[2, 3, 4], [4, 5, 6]])
    for i in (0, 1):
        exact = oracles.area_conditional(i, S, data, v, 2, 4, True)
        got = block_distribution(i, S, data, v, model)
        assert abs(sum(got.values()) - 1) < 1e-12
        assert total_variation(exact, got) < 1e-10


def test_block_conditional_asymmetric_graph_three_areas():
    W = np.array([[0, .7, 0], [0, 0, .4], [1., .2, 0]])
    space = StateSpace(1, 2, True)
    model = ModelSpec(states=space)
    data, v = small_instance(N=3, T=3, seed=7, W=W, spat=-0.9, model=model)
    S = np.array([[2, 3, 4], [3, 4, 2], [4, 2, 2]])
    for i in range(3):
        exact = oracles.area_conditional(i, S, data, v, 1, 2, True)
        assert total_variation(exact, block_distribution(i, S, data, v, model)) < 1e-10


def test_backward_draws_follow_the_conditional():
    space = StateSpace(1, 1, False)
    model = ModelSpec(states=space, spatial=("23", "33"))
    data, v = small_instance(N=2, T=3, seed=2, model=model)
    S = np.array([[1, 1, 2], [2, 2, 1]])
    exact = oracles.area_conditional(0, S, data, v, 1, 1, False)
    rng = np.random.default_rng(0)
    n = 20_000
    counts = {}
    for _ in range(n):
        seq = tuple(iffbs_sample_area(0, data, LatentStates(S), v, rng, model))
        counts[seq] = counts.get(seq, 0) + 1
    for seq, p in exact.items():
        assert abs(counts.get(seq, 0) / n - p) < 4.5 * math.sqrt(p * (1 - p) / n) + 1e-3


def test_predictive_density_matches_enumeration():
    model = ModelSpec(states=StateSpace(1, 2, True))
    data, v = small_instance(N=2, T=3, seed=11, spat=0.7, model=model)
    S = np.array([[2, 3, 4], [4, 2, 3]])
    for i in (0, 1):
        f = forward_filter_area(i, data, LatentStates(S), v, model)
        ref = oracles.area_predictive(i, S, data, v, 1, 2, True)
        np.testing.assert_allclose(f.predictive_logdens[1:], ref[1:], rtol=1e-11)


def test_neutral_forward_product_is_bitwise_ffbs():
    # area 0 has no reverse neighbours: nobody listens to it
    W = np.array([[0, 1.0, 0], [0, 0, 1.0], [0, 1.0, 0]])
    model = ModelSpec()
    data, v = small_instance(N=3, T=25, seed=3, W=W)
    rng = np.random.default_rng(0)
    S = init_latent_chains(data, rng).codes().copy()
    ki = kernel_inputs(data, v, model)
    assert data.reverse_neighbours(0).size == 0
    T, K = data.T, model.states.K
    nsum = kern.current_nsum(S, ki.reg, ki.W, True)
    R = np.zeros((T, 7))
    kern.area_row_params(0, nsum, ki.lin, ki.spat, ki.has_abs, R)
    out = []
    for use_fp in (True, False):
        fp = np.zeros(T)
        if use_fp:
            kern.forward_product(0, S, nsum, ki.lin, ki.spat, ki.W, np.zeros(0, np.int64),
                                 ki.reg, ki.has_abs, ki.m_en, K, fp)
        filt, lpd = np.zeros((T, K)), np.zeros(T)
        assert kern.filter_pass(ki.em[0], R, ki.init[0], fp, ki.reg, use_fp, ki.has_abs,
                                ki.m_en, filt, lpd) == -1
        out.append(filt)
    assert np.array_equal(out[0], out[1])
    f = forward_filter_area(0, data, LatentStates(S + 1), v, model)
    assert np.array_equal(f.probs, out[1])
    # and it is the ordinary normalised HMM forward recursion
    alpha = ki.init[0].copy()
    em = np.exp(ki.em[0][:, ki.reg])
    ref = [alpha / alpha.sum()]
    for t in range(1, T):
        a = (ref[-1] @ f.transitions[t]) * em[t]
        ref.append(a / a.sum())
    np.testing.assert_allclose(f.probs, np.array(ref), rtol=1e-12, atol=1e-300)


def test_filter_degeneracy_is_reported():
    data, v = small_instance(N=2, T=3)
    data.y[0, 2] = 5
    data.initial_state_dist = np.tile(np.eye(7)[0], (2, 1))
    v.chain.alpha0[0] = -1000.0  # emergence impossible
    with pytest.raises(FilterDegeneracyError) as err:
        forward_filter_area(0, data, LatentStates(np.ones((2, 3), int)), v)
    assert err.value.area == 0


def exact_posterior_means(data, v, space):
    K = space.K
    N, T = data.y.shape
    num = np.zeros((N, T))
    tot = 0.0
    for flat in itertools.product(range(1, K + 1), repeat=N * T):
        S = np.array(flat).reshape(N, T)
        p = oracles.joint_prob(S, data, v, space.n_endemic, space.n_outbreak, space.absence)
        tot += p
        num += p * (space.collapse[S - 1] == 3)
    return num / tot


def test_both_state_samplers_reach_the_exact_posterior():
    space = StateSpace(1, 1, False)
    model = ModelSpec(states=space, spatial=("23", "33"))
    data, v = small_instance(N=2, T=4, seed=9, spat=1.5, model=model)
    exact = exact_posterior_means(data, v, space)
    rng = np.random.default_rng(5)
    n = 30_000
    for run in (single_site_run, iffbs_run):
        draws = run(data, v, model, n, rng)[1000:]
        est = (draws == 2).mean(axis=0)
        assert np.abs(est - exact).max() < 0.02, run.__name__


def test_init_states_respect_corridors(rng):
    data, _ = small_instance(N=4, T=40)
    for space in (StateSpace(), StateSpace(3, 5, True), StateSpace(1, 1, False)):
        S = init_latent_chains(data, rng, space)
        assert S.respects(space)


def test_adaptation_direction():
    a = AdaptState(np.zeros(2), interval=10)
    for _ in range(10):
        a.record(0, True)
        a.end_iteration()
    assert a.log_sd[0] > 0 and a.log_sd[1] < 0
    a.frozen = True
    before = a.log_sd.copy()
    for _ in range(20):
        a.record(1, True)
        a.end_iteration()
    assert np.array_equal(before, a.log_sd)


def _recovery_data(N=4, T=40, seed=0):
    rng = np.random.default_rng(seed)
    sk = synthetic_skeleton(N, T, rng)
    model, truth = recovery_scenario(sk)
    v = params_from_named(truth, model, sk)
    data, S = simulate_from_model(v, sk, rng, model)
    return data, model, v, S


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), j_frac=st.floats(0, 0.999), step=st.floats(-0.3, 0.3))
def test_cached_update_matches_full_posterior(seed, j_frac, step):
    data, model, v, S = _recovery_data()
    spec = default_priors(data)
    chain = _ChainState(data, model, spec, v.copy(), S.codes().copy())
    layout = chain.layout
    j = int(j_frac * len(layout))
    old = chain.v.copy()
    new = old.copy()
    from cmsnb.model import set_param
    set_param(new, layout[j], get_param(old, layout[j]) + step)

    def logpost(w):
        lp = log_prior(w, spec, data, model)
        return lp + joint_loglik(data, S, w, model.states) if np.isfinite(lp) else -np.inf

    delta = logpost(new) - logpost(old)
    if not np.isfinite(delta):
        assert not chain.update_param(j, step, -1e-300, 1.0) or delta == np.inf
        return
    tol = 1e-7 * max(1.0, abs(delta))
    c1 = _ChainState(data, model, spec, old.copy(), S.codes().copy())
    assert not c1.update_param(j, step, delta + tol, 1.0)
    c2 = _ChainState(data, model, spec, old.copy(), S.codes().copy())
    assert c2.update_param(j, step, delta - tol, 1.0)
    # caches agree with a fresh computation after acceptance
    fresh = _ChainState(data, model, spec, c2.v.copy(), S.codes().copy())
    for r in (1, 2):
        np.testing.assert_allclose(c2.ll_mean[r], fresh.ll_mean[r], rtol=1e-12)
        assert c2.ll_count[r] == pytest.approx(fresh.ll_count[r], rel=1e-12)
    for k in fresh.ll_row:
        assert c2.ll_row[k] == pytest.approx(fresh.ll_row[k], rel=1e-12)


def test_random_start_is_admissible(rng):
    data, model, _, _ = _recovery_data()
    spec = default_priors(data)
    for _ in range(5):
        assert np.isfinite(log_prior(random_start(data, model, spec, rng), spec, data, model))


def test_gibbs_run_is_seeded_and_respects_constraints():
    data, model, _, _ = _recovery_data(N=3, T=30)
    spec = default_priors(data)
    cfg = SamplerConfig(n_chains=2, n_iterations=300, burn_in=100, thin=5, seed=42)
    a = gibbs_run(data, spec, cfg, model=model)
    b = gibbs_run(data, spec, cfg, model=model)
    assert a == b
    assert a.n_chains == 2 and a.n_kept == 200
    assert a.states[0].shape == (40, 3, 30)
    layout = free_parameters(model, data)
    for row in a.stacked_params():
        v = from_flat(row, layout, data)
        assert constraints_satisfied(v.count, data, spec.eps_rate, spec.eps_rho)
    for S in a.stacked_states():
        assert LatentStates(S).respects(model.states)
    c = gibbs_run(data, spec, SamplerConfig(n_chains=2, n_iterations=300, burn_in=100, thin=5,
                                            seed=43), model=model)
    assert not a == c


def test_in_sweep_densities_match_post_sweep_filter():
    data, model, v, S = _recovery_data(N=4, T=30)
    ki = kernel_inputs(data, v, model)
    codes = S.codes().copy()
    lpd = np.zeros(data.y.shape)
    u = np.random.default_rng(1).random(data.y.shape)
    kern.iffbs_sweep(codes, ki.em, ki.lin, ki.spat, ki.W, ki.rev_ptr, ki.rev_idx, ki.init,
                     ki.reg, ki.has_abs, ki.m_en, u, True, lpd)
    post = kern.predictive_logdens(codes, ki.em, ki.lin, ki.spat, ki.W, ki.rev_ptr, ki.rev_idx,
                                   ki.init, ki.reg, ki.has_abs, ki.m_en, True)
    # the last area is filtered with every other area already updated
    np.testing.assert_array_equal(lpd[-1], post[-1])


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(n_iterations=10, burn_in=10)
    with pytest.raises(ValueError):
        SamplerConfig(state_sampler="gibbs")
