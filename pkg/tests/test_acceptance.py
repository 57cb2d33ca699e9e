"""Acceptance criteria, each at its stated tolerance.

Every test records one ``criterion N: PASS|FAIL ...`` line, shown in the
terminal summary. Criteria needing full-length MCMC runs are marked slow.
"""

import itertools
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from conftest import small_instance
from cmsnb import _kernels as kern
from cmsnb.experiments import (
    evaluate_detection, fit, outbreak_probabilities, realtime_scores, recovery_replication,
    selection_replication, summarise_recovery,
)
from cmsnb.inference import (
    marginal_loglik_forward, partial_marginal_loglik, state_probabilities,
)
from cmsnb.model import LatentStates, ModelSpec, StateSpace, TRANSITIONS, free_parameters, \
    from_flat
from cmsnb.priors import default_priors
from cmsnb.samplers import (
    SamplerConfig, forward_filter_area, gibbs_run, init_latent_chains, iffbs_sequence_logprob,
    kernel_inputs,
)
from cmsnb.simulation import (
    benchmark_models, params_from_named, selection_scenario, simulate_cluster_benchmark,
    simulate_from_model, synthetic_skeleton,
)

TESTS = Path(__file__).parent


def test_criterion_1_block_conditional_is_exact(report):
    model = ModelSpec()
    data, v = small_instance(N=2, T=4, seed=21, spat=1.1)
    S = np.array([[2, 3, 4, 5], [4, 5, 6, 7]])
    t0 = time.perf_counter()
    f = forward_filter_area(0, data, LatentStates(S), v, model)
    got = {seq: math.exp(iffbs_sequence_logprob(seq, f))
           for seq in itertools.product(range(1, 8), repeat=4)}
    elapsed = time.perf_counter() - t0
    exact = oracles.area_conditional(0, S, data, v, 2, 4, True)
    assert len(exact) <= 7 ** 4 and len(got) == 7 ** 4
    tv = 0.5 * sum(abs(got[k] - exact.get(k, 0.0)) for k in got)
    ok = tv < 1e-8 and elapsed < 10
    report(1, ok, f"TV={tv:.2e} (<1e-8) runtime={elapsed:.2f}s (<10s)")
    assert ok


def test_criterion_2_ffbs_reduction_is_bitwise(report):
    # area 0 has no reverse neighbours: nobody conditions on its chain
    W = np.array([[0, 1.0, 0], [0, 0, 1.0], [0, 1.0, 0]])
    data, v = small_instance(N=3, T=30, seed=4, W=W)
    model = ModelSpec()
    S = init_latent_chains(data, np.random.default_rng(0)).S_star
    assert data.reverse_neighbours(0).size == 0
    f = forward_filter_area(0, data, LatentStates(S), v, model)
    ki = kernel_inputs(data, v, model)
    T, K = data.T, model.states.K
    R = np.zeros((T, 7))
    kern.area_row_params(0, kern.current_nsum(S - 1, ki.reg, ki.W, True), ki.lin, ki.spat,
                         ki.has_abs, R)
    # the plain FFBS filter: same rows and densities, no forward-product factor
    ffbs, lpd = np.zeros((T, K)), np.zeros(T)
    kern.filter_pass(ki.em[0], R, ki.init[0], np.zeros(T), ki.reg, False, ki.has_abs,
                     ki.m_en, ffbs, lpd)
    # and the textbook normalised forward recursion with dense matrices
    em = np.exp(ki.em[0][:, ki.reg])
    ref = [ki.init[0] / ki.init[0].sum()]
    for t in range(1, T):
        a = (ref[-1] @ f.transitions[t]) * em[t]
        ref.append(a / a.sum())
    dense_err = np.abs(f.probs - np.array(ref)).max()
    ok = bool(np.array_equal(f.probs, ffbs)) and dense_err < 1e-12
    report(2, ok, f"bitwise equal to FFBS filter={np.array_equal(f.probs, ffbs)}; "
                  f"max|diff| to dense forward={dense_err:.1e}")
    assert ok


@pytest.mark.slow
def test_criterion_3_block_and_single_site_samplers_agree(report):
    rng = np.random.default_rng(11)
    skeleton = synthetic_skeleton(4, 40, rng)
    model = ModelSpec(states=StateSpace(1, 1, False), en_covariates=("beds",),
                      ob_covariates=("beds",), spatial=("23", "33"),
                      shared_overdispersion=True)
    truth = {"beta0_en": 1.5, "beta_en[beds]": 0.1, "rho_en": 0.4, "beta0_ob": 2.5,
             "beta_ob[beds]": 0.05, "rho_ob": 0.5, "r": 10.0, "alpha23_0": -3.0,
             "alpha23_spat": 1.2, "alpha33_0": 1.5, "alpha33_spat": 0.5}
    data, _ = simulate_from_model(params_from_named(truth, model, skeleton), skeleton, rng,
                                  model)
    spec = default_priors(data)
    means = {}
    for sampler in ("iffbs", "single"):
        cfg = SamplerConfig(n_chains=3, n_iterations=40_000, burn_in=8_000, thin=2, seed=1,
                            state_sampler=sampler, waic="off")
        means[sampler] = state_probabilities(gibbs_run(data, spec, cfg, model=model),
                                             model=model)[:, :, 1]
    diff = np.abs(means["iffbs"] - means["single"])
    ok = diff.max() < 0.02
    report(3, ok, f"max|mean diff|={diff.max():.4f} (<0.02) mean={diff.mean():.4f}")
    assert ok


RECOVERY_CONFIG = SamplerConfig(n_chains=3, n_iterations=20_000, burn_in=5_000, thin=10)


@pytest.mark.slow
def test_criterion_4_parameter_recovery(report):
    results = [recovery_replication(seed, RECOVERY_CONFIG) for seed in range(20)]
    s = summarise_recovery(results)
    ok = s["gate_rate"] >= 0.70 and 0.85 <= s["average_coverage"] <= 1.0
    report(4, ok, f"gate pass rate={s['gate_rate']:.2f} (>=0.70) average coverage="
                  f"{s['average_coverage']:.3f} (in [0.85, 1]) min={s['min_coverage']:.2f}")
    assert ok


@pytest.mark.slow
def test_criterion_5_waic_selection(report):
    cfg = SamplerConfig(n_chains=3, n_iterations=20_000, burn_in=5_000, thin=10)
    coupled = [selection_replication(100 + k, True, cfg) for k in range(5)]
    plain = [selection_replication(200 + k, False, cfg) for k in range(5)]
    chosen = sum(r.delta > 5 for r in coupled)
    worst = max(r.delta for r in plain)
    ok = chosen >= 4 and worst <= 5
    report(5, ok, f"coupled truth chosen with margin>5 in {chosen}/5 (>=4); "
                  f"largest preference for coupling under non-coupled truth={worst:.2f} (<=5); "
                  f"deltas={[round(r.delta, 1) for r in coupled]} / "
                  f"{[round(r.delta, 1) for r in plain]}")
    assert ok


@pytest.mark.slow
def test_criterion_6_detection_benchmark(report):
    data, truth = simulate_cluster_benchmark()
    cfg = SamplerConfig(n_chains=3, n_iterations=20_000, burn_in=5_000, thin=10)
    res = {}
    for name, model in zip(("coupled", "non-coupled"), benchmark_models()):
        draws = fit(data, model, cfg)
        res[name] = evaluate_detection(outbreak_probabilities(draws, model), truth)
    c, n = res["coupled"], res["non-coupled"]
    ok = c.auc >= 0.95 and c.timeliness <= n.timeliness
    report(6, ok, f"coupled AUC={c.auc:.4f} (>=0.95) timeliness coupled={c.timeliness:.3f} "
                  f"<= non-coupled={n.timeliness:.3f}; non-coupled AUC={n.auc:.4f}")
    assert ok


def test_criterion_7_zero_coupling_waic_identity(report):
    data, _ = small_instance(N=3, T=20, seed=5, spat=0.0)
    coupled = ModelSpec(spatial=TRANSITIONS, en_covariates=("x0",), ob_covariates=("x0",),
                        p23_covariates=("z0",))
    plain = coupled.non_coupled()
    cfg = SamplerConfig(n_chains=1, n_iterations=400, burn_in=200, thin=10, seed=3)
    draws = gibbs_run(data, default_priors(data), cfg, model=plain)
    layout = free_parameters(plain, data)
    n_equal = 0
    # parameters are kept every iteration, state matrices every ``thin``
    for k, S in enumerate(draws.states[0]):
        v = from_flat(draws.params[0][k * draws.thin], layout, data)
        assert not v.chain.alpha_spat.any()
        a = partial_marginal_loglik(data, v, S, coupled)
        b = marginal_loglik_forward(data, v, coupled)
        n_equal += bool(np.array_equal(a, b))
    n_draws = len(draws.states[0])
    ok = n_equal == n_draws
    report(7, ok, f"{n_equal}/{n_draws} draws identical (exact)")
    assert ok


PROPERTY_TESTS = [
    "test_model.py::test_transition_rows_are_stochastic",
    "test_model.py::test_clone_corridors_are_deterministic",
    "test_model.py::test_nb_pmf_normalises",
    "test_samplers.py::test_gibbs_run_is_seeded_and_respects_constraints",
    "test_inference.py::test_state_probabilities_normalise",
    "test_metrics.py::test_auc_complement_identity",
    "test_io.py::test_draws_round_trip",
    "test_cli.py::test_seeded_fits_are_byte_identical",
]


def test_criterion_8_property_suites_under_a_minute(report):
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *[str(TESTS / t) for t in PROPERTY_TESTS]],
                          cwd=TESTS.parent, capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    ok = proc.returncode == 0 and elapsed < 60
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    report(8, ok, f"{summary} runtime={elapsed:.1f}s (<60s)")
    assert ok, proc.stdout[-3000:]


@pytest.mark.slow
def test_criterion_9_true_model_scores_better(report):
    rng = np.random.default_rng(900)
    skeleton = synthetic_skeleton(10, 113, rng)
    true_model, truth = selection_scenario(True)
    data, _ = simulate_from_model(params_from_named(truth, true_model, skeleton), skeleton,
                                  rng, true_model)
    weeks = list(range(data.T - 10, data.T))
    cfg = SamplerConfig(n_chains=3, n_iterations=10_000, burn_in=2_500, thin=5, seed=9,
                        waic="off")
    s_true = realtime_scores(data, true_model, weeks, cfg)
    s_plain = realtime_scores(data, true_model.non_coupled(), weeks, cfg)
    ok = s_true.mean() <= s_plain.mean()
    report(9, ok, f"mean log score true={s_true.mean():.4f} <= non-coupled="
                  f"{s_plain.mean():.4f}")
    assert ok
