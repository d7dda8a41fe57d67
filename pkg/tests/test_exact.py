import itertools
import math
from collections import Counter

import numpy as np
import pytest
from scipy.special import gammaln

from tiltcrm.exact import (BRUTE_FORCE, BRUTE_FORCE_MAX_N, EXACT, SizeDistribution,
                           brute_force_size_distribution, exact_size_distribution,
                           set_partitions, stirling_table)
from tiltcrm.exceptions import UsageError
from tiltcrm.process import GeneralizedDirichlet, GeneralizedGamma, TiltedSpec

BELL = [1, 1, 2, 5, 15, 52, 203, 877, 4140]


def enumerate_stirling(alpha, m):
    """C(m, k) by summing over every set partition."""
    out = Counter()
    for rgs in set_partitions(m):
        sizes = Counter(rgs).values()
        out[len(sizes)] += math.exp(sum(gammaln(s - alpha) - gammaln(1 - alpha) for s in sizes))
    return out


def test_set_partitions_counts():
    for n, bell in enumerate(BELL):
        parts = list(set_partitions(n))
        assert len(parts) == bell
        assert len(set(parts)) == bell


def test_stirling_examples():
    for alpha in (0.0, 0.3, 0.5):
        assert stirling_table(alpha, 2).value(2, 1) == pytest.approx(1 - alpha, rel=1e-14)
    assert stirling_table(0.5, 3).value(3, 2) == pytest.approx(1.5, rel=1e-14)
    assert stirling_table(0.0, 4).value(4, 2) == pytest.approx(11, rel=1e-14)
    first_kind = [24, 50, 35, 10, 1]
    np.testing.assert_allclose(np.exp(stirling_table(0.0, 5).log_values[5, 1:]), first_kind,
                               rtol=1e-13)


def test_stirling_invariants():
    alpha = 0.35
    t = stirling_table(alpha, 12)
    for m in range(1, 13):
        assert t.value(m, m) == pytest.approx(1.0, rel=1e-12)
        assert t.log_values[m, 1] == pytest.approx(gammaln(m - alpha) - gammaln(1 - alpha),
                                                   rel=1e-12)
        assert np.all(np.isneginf(t.log_values[m, m + 1:]))
    with pytest.raises(ValueError):
        t.log_values[1, 1] = 0.0


@pytest.mark.parametrize("alpha", [0.0, 0.25, 0.5, 0.9])
def test_stirling_matches_enumeration(alpha):
    t = stirling_table(alpha, 8)
    for m in range(1, 9):
        ref = enumerate_stirling(alpha, m)
        for k in range(1, m + 1):
            assert t.value(m, k) == pytest.approx(ref[k], rel=1e-10)


def test_stirling_rejects_bad_alpha():
    with pytest.raises(UsageError):
        stirling_table(1.0, 3)


def test_dirichlet_n3(presets):
    d = exact_size_distribution(presets["dirichlet"], 3)
    np.testing.assert_allclose(d.probabilities, [1 / 3, 1 / 2, 1 / 6], rtol=1e-13)
    assert d.provenance == EXACT
    assert d[2] == pytest.approx(0.5)


def test_n_equals_one(presets):
    for spec in presets.values():
        assert exact_size_distribution(spec, 1).probabilities.tolist() == [1.0]
        assert brute_force_size_distribution(spec, 1).probabilities.tolist() == [1.0]


def test_ngg_table_values():
    spec = TiltedSpec(GeneralizedGamma(0.5, 1.0, 1.0))
    d = exact_size_distribution(spec, 50)
    assert round(d[1], 6) == 0.000035
    assert round(d[13], 6) == 0.082360
    assert round(d[14], 6) == 0.082159


def test_pd_closed_form_single_block():
    # PD(alpha, q): P(K=1) = Gamma(q+1) Gamma(n-alpha) / (Gamma(1-alpha) Gamma(q+n))
    for alpha, q in ((0.5, 1.0), (0.5, 2.0), (0.3, 0.0)):
        d = exact_size_distribution(TiltedSpec(GeneralizedGamma(alpha, 1.0, 0.0), q=q), 50)
        ref = math.exp(gammaln(q + 1) + gammaln(50 - alpha) - gammaln(1 - alpha) - gammaln(q + 50))
        assert d[1] == pytest.approx(ref, rel=1e-9)


def test_pd_table_values_at_q_two():
    # the first table's printed column is reproduced by q = 2 (see the decisions ledger)
    d = exact_size_distribution(TiltedSpec(GeneralizedGamma(0.5, 1.0, 0.0), q=2.0), 50)
    assert round(d[1], 6) == 0.000063
    assert round(d[17], 6) == 0.070723
    assert round(d[25], 6) == 0.029805
    assert max(i for i in range(1, 51) if round(d[i], 6) > 0) == 42


def test_brute_force_examples():
    pd = TiltedSpec(GeneralizedGamma(0.5, 1.0, 0.0), q=1.0)
    np.testing.assert_allclose(brute_force_size_distribution(pd, 3).probabilities,
                               exact_size_distribution(pd, 3).probabilities, atol=1e-10)
    gd = TiltedSpec(GeneralizedDirichlet(2.0, 2))
    bf = brute_force_size_distribution(gd, 6)
    assert bf.provenance == BRUTE_FORCE
    np.testing.assert_allclose(bf.probabilities, exact_size_distribution(gd, 6).probabilities,
                               atol=1e-9)


def test_brute_force_limit(presets):
    with pytest.raises(UsageError):
        brute_force_size_distribution(presets["pd"], BRUTE_FORCE_MAX_N + 1)


@pytest.mark.parametrize("name", ["dirichlet", "pd", "ngg", "gd"])
def test_oracle_equivalence(presets, name):
    spec = presets[name]
    for n in range(2, 9):
        np.testing.assert_allclose(brute_force_size_distribution(spec, n).probabilities,
                                   exact_size_distribution(spec, n).probabilities, atol=1e-9)


def test_oracle_equivalence_tilted():
    for spec in (TiltedSpec(GeneralizedGamma(0.3, 2.0, 0.5), q=0.5, gamma=1.5),
                 TiltedSpec(GeneralizedDirichlet(3.0, 3), q=1.0, gamma=0.5)):
        np.testing.assert_allclose(brute_force_size_distribution(spec, 7).probabilities,
                                   exact_size_distribution(spec, 7).probabilities, atol=1e-9)


def test_beta_gamma_invariance():
    base = exact_size_distribution(TiltedSpec(GeneralizedGamma(0.0, 2.0, 1.0)), 30)
    for q, gamma in itertools.product((0.0, 0.5), (0.0, 2.0)):
        d = exact_size_distribution(TiltedSpec(GeneralizedGamma(0.0, 2.0, 1.0), q=q, gamma=gamma), 30)
        np.testing.assert_array_equal(d.probabilities, base.probabilities)


@pytest.mark.parametrize("name", ["dirichlet", "pd", "ngg", "gd"])
def test_positive_and_normalized(presets, name):
    d = exact_size_distribution(presets[name], 50)
    assert np.all(d.probabilities > 0)
    assert d.probabilities.sum() == pytest.approx(1.0, abs=1e-10)


def test_rejects_bad_n(presets):
    for n in (0, -1, 2.5):
        with pytest.raises(UsageError):
            exact_size_distribution(presets["pd"], n)


def test_size_distribution_round_trip(presets):
    d = exact_size_distribution(presets["gd"], 5)
    assert SizeDistribution.from_dict(d.to_dict()) == d
    with pytest.raises(UsageError):
        SizeDistribution(2, [1.0], EXACT)
    with pytest.raises(UsageError):
        SizeDistribution(2, [1.5, -0.5], EXACT)
