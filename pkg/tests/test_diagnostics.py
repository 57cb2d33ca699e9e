import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmsnb.diagnostics import convergence_gate, effective_sample_size, gelman_rubin


def ar1(rng, m, n, phi):
    x = np.zeros((m, n))
    e = rng.normal(size=(m, n)) * np.sqrt(1 - phi ** 2)
    x[:, 0] = rng.normal(size=m)
    for t in range(1, n):
        x[:, t] = phi * x[:, t - 1] + e[:, t]
    return x


def test_rhat_near_one_for_iid_chains(rng):
    r = gelman_rubin(rng.normal(size=(4, 2000, 3)))
    assert np.all(np.abs(r - 1) < 0.01)


def test_rhat_flags_separated_chains(rng):
    x = rng.normal(size=(3, 1000))
    x[0] += 3
    assert gelman_rubin(x)[0] > 1.5


def test_rhat_detects_drift_within_chains(rng):
    # split halves reveal a trend that whole-chain R-hat would miss
    n = 2000
    x = rng.normal(size=(2, n)) * 0.1 + np.linspace(0, 2, n)
    assert gelman_rubin(x)[0] > 1.2


def test_rhat_input_checks(rng):
    with pytest.raises(ValueError):
        gelman_rubin(rng.normal(size=(1, 100)))
    with pytest.raises(ValueError):
        gelman_rubin(rng.normal(size=(2, 5)))


def test_ess_iid(rng):
    ess = effective_sample_size(rng.normal(size=(4, 5000)))
    assert ess[0] == pytest.approx(20_000, rel=0.1)


@pytest.mark.parametrize("phi", [0.5, 0.9])
def test_ess_ar1_matches_theory(phi):
    rng = np.random.default_rng(int(phi * 10))
    n, m = 20_000, 4
    ess = effective_sample_size(ar1(rng, m, n, phi))[0]
    theory = m * n * (1 - phi) / (1 + phi)
    assert ess == pytest.approx(theory, rel=0.15)


def test_ess_constant_chain_is_flagged():
    res = effective_sample_size(np.ones((2, 100)), return_flags=True)
    assert res.ess[0] == 0 and res.degenerate[0]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(1, 4), n=st.integers(20, 400))
def test_ess_is_positive_and_bounded(seed, m, n):
    x = np.random.default_rng(seed).normal(size=(m, n))
    ess = effective_sample_size(x)[0]
    assert 0 < ess <= m * n * np.log10(m * n) + 1e-9


def test_gate():
    g = convergence_gate(names=["a", "b"], ess=[1500, 999], rhat=[1.01, 1.01])
    assert not g.passed and g.offending == ["b"] and g.verdict().startswith("FAIL")
    g = convergence_gate(names=["a"], ess=[1001], rhat=[1.0499])
    assert g.passed and g.verdict().startswith("PASS")
    assert not convergence_gate(names=["a"], ess=[5000], rhat=[1.05]).passed
