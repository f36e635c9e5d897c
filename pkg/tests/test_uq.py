import numpy as np
import pytest

from tclkit.core import DomainPair, LinkKind, ObservationSet
from tclkit.errors import BootstrapTrialError, ValidationError
from tclkit.sim import SimConfig, generate
from tclkit.uq import Verdict, bootstrap_ace, classify_verdict, summarize, trial_rng


@pytest.mark.parametrize("median, verdict", [
    (-100.5, Verdict.NEGATIVE), (-100.0, Verdict.NEUTRAL), (0.0, Verdict.NEUTRAL),
    (100.0, Verdict.NEUTRAL), (250.0, Verdict.POSITIVE),
])
def test_verdict_band(median, verdict):
    assert classify_verdict(median) is verdict


def test_summary_quantiles_recomputable():
    est = np.array([3.0, -1.0, 7.5, 2.0, 0.5])
    median, q05, q95, verdict = summarize(est)
    assert median == np.median(est)
    assert (q05, q95) == tuple(np.quantile(est, [0.05, 0.95]))
    assert q05 <= median <= q95
    assert verdict is Verdict.NEUTRAL


def test_trial_streams_are_independent_of_order():
    a = trial_rng(5, 3).random(4)
    trial_rng(5, 0).random(10)
    assert np.array_equal(a, trial_rng(5, 3).random(4))
    assert not np.array_equal(a, trial_rng(5, 4).random(4))


def test_single_trial_degenerate_quantiles(small_sim):
    pair, _ = small_sim
    summary = bootstrap_ace(pair, "ipw", 1, seed=0)
    assert summary.estimates.size == 1
    assert summary.median == summary.quantile_05 == summary.quantile_95 == summary.estimates[0]


def test_same_seed_is_bit_identical(small_sim):
    pair, _ = small_sim
    a = bootstrap_ace(pair, "ols", 6, seed=12)
    b = bootstrap_ace(pair, "ols", 6, seed=12)
    assert np.array_equal(a.estimates, b.estimates)


def test_thread_count_does_not_change_estimates(small_sim):
    pair, _ = small_sim
    serial = bootstrap_ace(pair, "ipw", 8, seed=3, threads=1)
    pooled = bootstrap_ace(pair, "ipw", 8, seed=3, threads=4)
    assert np.array_equal(serial.estimates, pooled.estimates)


def test_zero_effect_generator_is_neutral():
    pair, _ = generate(SimConfig(dimension=4, sparsity=1, n_target=150, n_source=300, tau_source=0.0,
                                 tau_target=0.0, index_offset=0.3, center_index=False,
                                 coefficient_scale=0.3, seed=21))
    summary = bootstrap_ace(pair, "ipw", 10, seed=1)
    assert summary.verdict is Verdict.NEUTRAL
    assert summary.to_dict()["verdict"] == "neutral"


def test_tcl_bootstrap_selects_lambda_per_trial(small_sim):
    pair, _ = small_sim
    summary = bootstrap_ace(pair, "tcl", 2, criterion="l2_in", grid=[0.0, 0.01, 0.02], seed=7,
                            link=LinkKind.SIGMOID)
    assert summary.estimates.size == 2 and summary.lambdas.size == 2
    assert np.all(np.isfinite(summary.lambdas)) and np.all(summary.lambdas >= 0)
    assert set(summary.to_dict()) >= {"estimates", "median", "quantile_05", "quantile_95", "verdict", "lambdas"}


def test_tcl_bootstrap_defaults_to_configured_grid(small_sim, monkeypatch):
    import tclkit.uq as uq

    seen = []
    real = uq.select_lambda_expanding

    def recording(pair, grid, *args, **kwargs):
        seen.append(np.asarray(grid))
        return real(pair, grid, *args, **kwargs)

    monkeypatch.setattr(uq, "select_lambda_expanding", recording)
    pair, _ = small_sim
    summary = bootstrap_ace(pair, "tcl", 2, criterion="l2_in", seed=7)
    assert len(seen) == 2
    for grid in seen:
        assert grid.size == 201 and grid[0] == 0.0 and grid[-1] == pytest.approx(0.2)
    assert summary.lambdas.size == 2


def test_trial_failure_carries_index():
    rng = np.random.default_rng(0)
    target = ObservationSet(rng.normal(size=(3, 2)), [0, 1, 0], rng.normal(size=3))
    source = ObservationSet(rng.normal(size=(10, 2)), [0, 1] * 5, rng.normal(size=10))
    with pytest.raises(BootstrapTrialError) as info:
        bootstrap_ace(DomainPair(source, target), "ols", 3, seed=0)
    assert info.value.trial == 0
    assert info.value.category == "bootstrap"


def test_trials_must_be_positive(small_sim):
    pair, _ = small_sim
    with pytest.raises(ValidationError):
        bootstrap_ace(pair, "ipw", 0)
