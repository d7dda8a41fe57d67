import math

import numpy as np
import pytest

from tiltcrm.exact import exact_size_distribution
from tiltcrm.exceptions import UsageError
from tiltcrm.harness import (RunConfig, _Conditional, _Unconditional, _result, run, run_a1,
                             run_a2, run_a3, run_a4, run_replicates, summarize, tv_distance,
                             two_sample_chi2)
from tiltcrm.core_math import DEFAULT_QUADRATURE
from tiltcrm.partition import Partition, conditional_urn_weights, unconditional_urn_weights
from tiltcrm.process import GeneralizedDirichlet, GeneralizedGamma, TiltedSpec

KERNEL_SPECS = [
    TiltedSpec(GeneralizedGamma(0.0, 2.0, 1.0), q=0.5),
    TiltedSpec(GeneralizedGamma(0.5, 1.0, 0.0), q=1.0),
    TiltedSpec(GeneralizedGamma(0.5, 1.0, 1.0)),
    TiltedSpec(GeneralizedGamma(0.3, 2.0, 0.5), q=0.5, gamma=1.0),
    TiltedSpec(GeneralizedDirichlet(2.0, 3), q=0.5, gamma=0.5),
]


def normalized(w_new, w_join):
    w = np.array([w_new] + list(w_join))
    return w / w.sum()


# --- configuration ------------------------------------------------------------------

def test_config_validation(presets):
    spec = presets["pd"]
    for bad in (dict(num_samples=0), dict(burn_in=-1), dict(algorithm="A5"), dict(n=0),
                dict(init="random")):
        kw = dict(spec=spec, n=5, num_samples=10)
        kw.update(bad)
        with pytest.raises(UsageError):
            RunConfig(**kw)


def test_config_round_trip(presets):
    cfg = RunConfig(presets["gd"], 7, 11, "A3", burn_in=3, seed=5, replicate=2, init="one_block")
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


# --- kernels against the public weight functions -----------------------------------------

@pytest.mark.parametrize("spec", KERNEL_SPECS)
def test_unconditional_kernel_matches_api(spec):
    kernel = _Unconditional(spec, DEFAULT_QUADRATURE)
    for sizes in ([1], [3, 1], [2, 5, 1, 1], [4, 4, 2]):
        ref = unconditional_urn_weights(spec, Partition.from_sizes(sizes)).probabilities()
        np.testing.assert_allclose(normalized(*kernel(list(sizes))), ref, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("spec", KERNEL_SPECS)
def test_conditional_kernel_matches_api(spec):
    kernel = _Conditional(spec)
    for sizes in ([1], [3, 1], [2, 5, 1, 1]):
        for u in (0.05, 1.0, 30.0):
            ref = conditional_urn_weights(spec, Partition.from_sizes(sizes), u).probabilities()
            np.testing.assert_allclose(normalized(*kernel(list(sizes), u)), ref, rtol=1e-12,
                                       atol=1e-15)


# --- algorithms -------------------------------------------------------------------------------

def test_dirichlet_n2(presets):
    spec = presets["dirichlet"]
    res = run_a1(RunConfig(spec, 2, 100_000, "A1", seed=3), workers=1)
    p1 = 1.0 / (1.0 + spec.family.theta)
    se = math.sqrt(p1 * (1 - p1) / 100_000)
    assert abs(res.size_distribution[1] - p1) <= 3 * se


@pytest.mark.parametrize("alg", ["A1", "A2", "A3", "A4"])
def test_single_item(presets, alg):
    burn = 2 if alg in ("A3", "A4") else 0
    for spec in presets.values():
        res = run(RunConfig(spec, 1, 20, alg, burn_in=burn, seed=1), workers=1)
        assert res.block_count_draws.tolist() == [1] * 20
        assert res.size_distribution.probabilities.tolist() == [1.0]


def test_result_fields(presets):
    res = run_a1(RunConfig(presets["pd"], 8, 500, "A1", seed=9), workers=1)
    d = res.block_count_draws
    assert d.size == 500 and d.min() >= 1 and d.max() <= 8
    assert not d.flags.writeable
    np.testing.assert_array_equal(res.size_distribution.probabilities,
                                  np.bincount(d, minlength=9)[1:] / 500)
    p = res.size_distribution.probabilities
    np.testing.assert_allclose(res.standard_errors, np.sqrt(p * (1 - p) / 500))
    assert res.size_distribution.provenance == "A1"


@pytest.mark.parametrize("alg", ["A1", "A2", "A3", "A4"])
def test_reproducible_and_worker_independent(presets, alg):
    burn = 5 if alg in ("A3", "A4") else 0
    for name in ("ngg", "gd"):
        cfg = RunConfig(presets[name], 6, 40, alg, burn_in=burn, seed=77)
        a = run(cfg, workers=1).block_count_draws
        b = run(cfg, workers=1).block_count_draws
        c = run(cfg, workers=2).block_count_draws
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(a, c)


def test_seed_and_replicate_change_stream(presets):
    cfg = RunConfig(presets["ngg"], 20, 200, "A1", seed=1)
    base = run_a1(cfg, 1).block_count_draws
    other_seed = run_a1(RunConfig(presets["ngg"], 20, 200, "A1", seed=2), 1).block_count_draws
    other_rep = run_a1(RunConfig(presets["ngg"], 20, 200, "A1", seed=1, replicate=1),
                       1).block_count_draws
    assert not np.array_equal(base, other_seed)
    assert not np.array_equal(base, other_rep)


@pytest.mark.parametrize("name,n", [("dirichlet", 20), ("pd", 20), ("ngg", 20), ("gd", 10)])
def test_a1_a2_same_law(presets, name, n):
    spec = presets[name]
    a = run_a1(RunConfig(spec, n, 10_000, "A1", seed=101), 1).block_count_draws
    b = run_a2(RunConfig(spec, n, 10_000, "A2", seed=202), 1).block_count_draws
    assert two_sample_chi2(a, b)[2] > 1e-3


def test_a2_runs_agree(presets):
    spec = presets["ngg"]
    a = run_a2(RunConfig(spec, 15, 5_000, "A2", seed=1), 1).block_count_draws
    b = run_a2(RunConfig(spec, 15, 5_000, "A2", seed=2), 1).block_count_draws
    assert two_sample_chi2(a, b)[2] > 1e-3


def test_dirichlet_a3_matches_a1(presets):
    spec = presets["dirichlet"]
    a = run_a1(RunConfig(spec, 10, 10_000, "A1", seed=5), 1).block_count_draws
    b = run_a3(RunConfig(spec, 10, 10_000, "A3", burn_in=1_000, seed=6), 1).block_count_draws
    assert two_sample_chi2(a, b)[2] > 1e-3


def test_gibbs_start_does_not_matter(presets):
    spec = presets["ngg"]
    kw = dict(spec=spec, n=10, num_samples=10_000, algorithm="A3", burn_in=1_000, seed=8)
    a = run_a3(RunConfig(init="singletons", **kw), 1).size_distribution.probabilities
    b = run_a3(RunConfig(init="one_block", **kw), 1).size_distribution.probabilities
    assert tv_distance(a, b) <= 0.02


@pytest.mark.parametrize("name", ["ngg", "gd"])
def test_a4_latents_positive(presets, name):
    res = run_a4(RunConfig(presets[name], 12, 300, "A4", burn_in=50, seed=4), 1)
    u = res.latent_draws
    assert u.shape == (300,)
    assert np.all(u > 0) and np.all(np.isfinite(u))


@pytest.mark.parametrize("alg", ["A1", "A2", "A4"])
def test_exact_sampler_z_scores(presets, alg):
    spec = presets["ngg"]
    burn = 1_000 if alg == "A4" else 0
    res = run(RunConfig(spec, 10, 10_000, alg, burn_in=burn, seed=12), 1)
    s = summarize(res, exact_size_distribution(spec, 10))
    gate = 6 if alg == "A4" else 4
    assert s.max_abs_z() <= gate
    assert s.passes(gate)


# --- summaries -----------------------------------------------------------------------------

def test_se_formula_example():
    p = 0.070723
    se = math.sqrt(p * (1 - p) / 1e4)
    assert se == pytest.approx(0.002563, abs=1e-6)
    assert abs(se - 0.002575) / 0.002575 <= 0.2


def test_summarize_single_and_batches(presets):
    cfg = RunConfig(presets["pd"], 6, 400, "A1", seed=3)
    one = summarize(run_a1(cfg, 1))
    assert one.num_batches == 1 and one.num_samples == 400
    assert one.batch_min is None and one.batch_q975 is None
    assert one.exact is None and one.z_scores is None
    with pytest.raises(UsageError):
        one.passes(4)
    batches = run_replicates(cfg, 5, workers=1)
    s = summarize(batches, exact_size_distribution(presets["pd"], 6))
    assert s.num_batches == 5 and s.num_samples == 2_000
    assert np.all(s.batch_min <= s.batch_q025) and np.all(s.batch_q975 <= s.batch_max)
    pooled = np.concatenate([r.block_count_draws for r in batches])
    np.testing.assert_allclose(s.p_hat, np.bincount(pooled, minlength=7)[1:] / 2_000)
    np.testing.assert_allclose(s.se, np.sqrt(s.p_hat * (1 - s.p_hat) / 2_000))
    assert s.max_abs_deviation == pytest.approx(np.max(np.abs(s.p_hat - s.exact)))
    assert s.tv == pytest.approx(0.5 * np.abs(s.p_hat - s.exact).sum())


def test_summarize_errors(presets):
    a = run_a1(RunConfig(presets["pd"], 5, 10, "A1"), 1)
    b = run_a1(RunConfig(presets["pd"], 6, 10, "A1"), 1)
    with pytest.raises(UsageError):
        summarize([a, b])
    with pytest.raises(UsageError):
        summarize([])
    with pytest.raises(UsageError):
        summarize(a, exact_size_distribution(presets["pd"], 6))


def test_summary_z_scores_from_synthetic_draws(presets):
    cfg = RunConfig(presets["pd"], 3, 4, "A1")
    res = _result(cfg, np.array([1, 2, 2, 3]))
    exact = exact_size_distribution(presets["pd"], 3)
    s = summarize(res, exact)
    p = exact.probabilities
    np.testing.assert_allclose(s.z_scores, (np.array([0.25, 0.5, 0.25]) - p)
                               / np.sqrt(p * (1 - p) / 4))


def test_chi2_helper():
    rng = np.random.default_rng(0)
    a = rng.integers(1, 6, 5_000)
    b = rng.integers(1, 6, 5_000)
    stat, dof, p = two_sample_chi2(a, b)
    assert dof == 4 and p > 1e-3
    assert two_sample_chi2(a, b + 2)[2] < 1e-10
    assert two_sample_chi2([1, 1], [1, 1]) == (0.0, 0, 1.0)
    with pytest.raises(UsageError):
        two_sample_chi2([], [1])


def test_tv_distance():
    assert tv_distance([0.5, 0.5], [1.0, 0.0]) == 0.5
    with pytest.raises(UsageError):
        tv_distance([1.0], [0.5, 0.5])
