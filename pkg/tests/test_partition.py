import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tiltcrm.core_math import integrate_log_density
from tiltcrm.exceptions import DomainError, UsageError
from tiltcrm.partition import (Partition, UrnWeights, add_item, conditional_urn_weights,
                               gibbs_full_conditional_weights, log_eppf_conditional,
                               log_eppf_marginal, log_joint_partition_u, remove_item,
                               unconditional_urn_weights)
from tiltcrm.process import GeneralizedDirichlet, GeneralizedGamma, TiltedSpec

sizes_strategy = st.lists(st.integers(1, 6), min_size=1, max_size=6)


def random_spec(rng):
    kind = rng.integers(4)
    q = float(rng.choice([0.0, 0.5, 1.0]))
    gamma = float(rng.choice([0.0, 1.5]))
    if kind == 0:
        return TiltedSpec(GeneralizedGamma(float(rng.uniform(0.1, 0.9)), float(rng.uniform(0.5, 3)),
                                           float(rng.uniform(0.2, 2))), q=q, gamma=gamma)
    if kind == 1:
        return TiltedSpec(GeneralizedGamma(float(rng.uniform(0.1, 0.9)), 1.0, 0.0), q=q)
    if kind == 2:
        return TiltedSpec(GeneralizedGamma(0.0, float(rng.uniform(1.5, 4)), 1.0), q=q, gamma=gamma)
    return TiltedSpec(GeneralizedDirichlet(float(rng.uniform(1.5, 4)), int(rng.integers(1, 4))),
                      q=q, gamma=gamma)


# --- structure ----------------------------------------------------------------

def test_add_item_examples():
    assert add_item(Partition()).block_sizes == (1,)
    assert add_item(Partition()).n == 1
    assert add_item(Partition.from_sizes([2, 1]), 0).block_sizes == (3, 1)
    assert add_item(Partition.from_sizes([2, 1])).block_sizes == (2, 1, 1)


def test_add_item_errors():
    with pytest.raises(UsageError):
        add_item(Partition.from_sizes([2, 1]), 2)
    with pytest.raises(UsageError):
        add_item(Partition.from_sizes([2, 1]), -1)


def test_remove_item_examples():
    assert remove_item(Partition.from_sizes([1]), 0) == Partition()
    assert remove_item(Partition.from_sizes([3, 1]), 0).block_sizes == (2, 1)
    p = remove_item(Partition.from_sizes([2, 1]), 2)
    assert p.block_sizes == (2,)
    assert p.assignment == (0, 0)


def test_remove_compacts_indices():
    p = Partition.from_assignment([0, 1, 2, 1])
    q = remove_item(p, 0)
    assert q.assignment == (0, 1, 0)
    assert q.block_sizes == (2, 1)
    assert q.labels == (1, 2)


def test_remove_item_errors():
    with pytest.raises(UsageError):
        remove_item(Partition.from_sizes([2]), 2)


def test_invariants_enforced():
    with pytest.raises(UsageError):
        Partition((0, 0), (1,), (0,))
    with pytest.raises(UsageError):
        Partition((0, 1), (1, 1), (0, 0))
    with pytest.raises(UsageError):
        Partition((0, 2), (1, 1), (0, 1))


@settings(max_examples=80, deadline=None)
@given(sizes_strategy, st.data())
def test_remove_then_add_is_isomorphic(sizes, data):
    p = Partition.from_sizes(sizes)
    i = data.draw(st.integers(0, p.n - 1))
    k = p.assignment[i]
    rest = remove_item(p, i)
    if rest.num_blocks < p.num_blocks:
        back = add_item(rest)
    else:
        back = add_item(rest, k)
    assert back.canonical_sizes() == p.canonical_sizes()
    assert sum(back.block_sizes) == back.n


# --- conditional urn ------------------------------------------------------------

def test_conditional_examples():
    dp = TiltedSpec(GeneralizedGamma(0.0, 1.0, 1.0))
    for u in (0.1, 1.0, 10.0):
        np.testing.assert_allclose(
            conditional_urn_weights(dp, Partition.from_sizes([2]), u).probabilities(),
            [1 / 3, 2 / 3], rtol=1e-14)
    pd = TiltedSpec(GeneralizedGamma(0.5, 1.0, 0.0))
    np.testing.assert_allclose(
        conditional_urn_weights(pd, Partition.from_sizes([1]), 1.0).probabilities(),
        [2 / 3, 1 / 3], rtol=1e-14)
    ngg = TiltedSpec(GeneralizedGamma(0.5, 1.0, 1.0))
    np.testing.assert_allclose(
        conditional_urn_weights(ngg, Partition.from_sizes([1]), 3.0).probabilities(),
        [0.8, 0.2], rtol=1e-14)


def test_conditional_gd_join_formula():
    spec = TiltedSpec(GeneralizedDirichlet(2.0, 3), gamma=0.5)
    p = Partition.from_sizes([3, 1])
    u = 0.7
    w = conditional_urn_weights(spec, p, u, normalize=False)
    a = 0.5 + u
    for k, nk in enumerate((3, 1)):
        phi = lambda m: sum((a + 1 + l) ** -m for l in range(3))  # noqa: E731
        assert w.log_join[k] == pytest.approx(math.log(u) + math.log(nk)
                                              + math.log(phi(nk + 1) / phi(nk)), rel=1e-13)
    assert w.log_new == pytest.approx(math.log(u) + math.log(2.0 * phi(1)), rel=1e-13)


def test_conditional_normalization_and_phi():
    rng = np.random.default_rng(5)
    for _ in range(25):
        spec = random_spec(rng)
        p = Partition.from_sizes(rng.integers(1, 6, size=rng.integers(1, 5)))
        u = float(rng.uniform(0.05, 20))
        w = conditional_urn_weights(spec, p, u)
        assert w.probabilities().sum() == pytest.approx(1.0, abs=1e-12)
        raw = conditional_urn_weights(spec, p, u, normalize=False)
        # phi(u, X_n) = u kappa_1(gamma+u) + u sum_k tau_{n_k+1}/tau_{n_k}
        fam = spec.family
        a = spec.gamma + u
        if isinstance(fam, GeneralizedGamma):
            phi = u * (fam.theta * (a + fam.b) ** (fam.alpha - 1)
                       + sum((nk - fam.alpha) / (a + fam.b) for nk in p.block_sizes))
            assert math.exp(raw.log_total) == pytest.approx(phi, rel=1e-12)


def test_alpha_zero_weights_bitwise_u_free():
    for spec in (TiltedSpec(GeneralizedGamma(0.0, 2.0, 1.0)),
                 TiltedSpec(GeneralizedGamma(0.0, 3.0, 0.5), q=0.5, gamma=2.0)):
        p = Partition.from_sizes([4, 2, 1])
        ref = conditional_urn_weights(spec, p, 0.1)
        for u in (1.0, 10.0):
            w = conditional_urn_weights(spec, p, u)
            assert w.log_new == ref.log_new
            assert np.array_equal(w.log_join, ref.log_join)


def test_conditional_rejects_bad_u():
    spec = TiltedSpec(GeneralizedGamma(0.5, 1.0, 1.0))
    for u in (0.0, -1.0, float("inf")):
        with pytest.raises(DomainError):
            conditional_urn_weights(spec, Partition.from_sizes([1]), u)


def test_urn_bayes_consistency():
    rng = np.random.default_rng(9)
    for _ in range(10):
        spec = random_spec(rng)
        p = Partition.from_sizes(rng.integers(1, 5, size=rng.integers(1, 4)))
        u = float(rng.uniform(0.1, 5))
        w = conditional_urn_weights(spec, p, u, normalize=False)
        base = log_eppf_conditional(spec, p, u)
        ratios = [log_eppf_conditional(spec, add_item(p), u) - base - w.log_new]
        for k in range(p.num_blocks):
            ratios.append(log_eppf_conditional(spec, add_item(p, k), u) - base - w.log_join[k])
        np.testing.assert_allclose(ratios, ratios[0], atol=1e-12)


# --- EPPF and joint density -------------------------------------------------------

def test_eppf_conditional_examples():
    dp = TiltedSpec(GeneralizedGamma(0.0, 1.0, 1.0))
    assert log_eppf_conditional(dp, Partition(), 1.0) == 0.0
    for u in (0.5, 2.0):
        assert log_eppf_conditional(dp, Partition.from_sizes([2, 1]), u) == pytest.approx(
            -3 * math.log1p(u), rel=1e-14)
    pd = TiltedSpec(GeneralizedGamma(0.5, 1.0, 0.0))
    assert log_eppf_conditional(pd, Partition.from_sizes([2]), 1.0) == pytest.approx(math.log(0.5))


def test_joint_examples():
    dp2 = TiltedSpec(GeneralizedGamma(0.0, 2.0, 1.0))
    assert log_joint_partition_u(dp2, Partition.from_sizes([1]), 1.0) == pytest.approx(
        -2 * math.log(2.0), rel=1e-14)
    pd = TiltedSpec(GeneralizedGamma(0.5, 1.0, 0.0), q=1.0)
    assert log_joint_partition_u(pd, Partition.from_sizes([1]), 1.0) == pytest.approx(-2.0)
    tiny = log_joint_partition_u(pd, Partition.from_sizes([2, 1]), np.array([1e-300, 1e-200]))
    assert np.all(np.isfinite(tiny)) and np.all(tiny < -400)


@settings(max_examples=40, deadline=None)
@given(sizes_strategy, st.randoms(use_true_random=False))
def test_eppf_exchangeable(sizes, rnd):
    spec = TiltedSpec(GeneralizedDirichlet(2.0, 2), q=0.5)
    shuffled = list(sizes)
    rnd.shuffle(shuffled)
    a, b = Partition.from_sizes(sizes), Partition.from_sizes(shuffled)
    assert log_eppf_conditional(spec, a, 1.3) == pytest.approx(
        log_eppf_conditional(spec, b, 1.3), abs=1e-12)
    assert log_eppf_marginal(spec, a) == log_eppf_marginal(spec, b) or math.isclose(
        log_eppf_marginal(spec, a), log_eppf_marginal(spec, b), abs_tol=1e-10)


def test_eppf_marginal_ratios():
    dp = TiltedSpec(GeneralizedGamma(0.0, 1.0, 1.0))
    r = log_eppf_marginal(dp, Partition.from_sizes([2])) - log_eppf_marginal(
        dp, Partition.from_sizes([1, 1]))
    assert r == pytest.approx(0.0, abs=1e-9)
    pd = TiltedSpec(GeneralizedGamma(0.5, 1.0, 0.0), q=1.0)
    r = log_eppf_marginal(pd, Partition.from_sizes([2])) - log_eppf_marginal(
        pd, Partition.from_sizes([1, 1]))
    assert math.exp(r) == pytest.approx(0.5 / 1.5, rel=1e-9)


def test_eppf_marginal_single_item():
    spec = TiltedSpec(GeneralizedGamma(0.5, 1.0, 1.0), q=0.5)
    a = log_eppf_marginal(spec, Partition.from_sizes([1]))
    b = log_eppf_marginal(spec, add_item(Partition(), label="y"))
    assert a == b
    with pytest.raises(UsageError):
        log_eppf_marginal(spec, Partition())


# --- unconditional urn --------------------------------------------------------------

def quadrature_unconditional(spec, p):
    """Average the conditional raw weights over f_U by direct quadrature."""
    log_norm = integrate_log_density(lambda u: log_joint_partition_u(spec, p, u))
    out = []
    for j in range(p.num_blocks + 1):
        def log_f(u, j=j):
            vals = np.empty(u.shape)
            for i, uu in enumerate(u):
                w = conditional_urn_weights(spec, p, float(uu), normalize=False)
                vals[i] = w.log_new if j == 0 else w.log_join[j - 1]
            return vals + log_joint_partition_u(spec, p, u)
        out.append(integrate_log_density(log_f) - log_norm)
    return np.array(out)


def test_unconditional_examples():
    dp = TiltedSpec(GeneralizedGamma(0.0, 1.0, 1.0))
    np.testing.assert_allclose(
        unconditional_urn_weights(dp, Partition.from_sizes([2])).probabilities(), [1 / 3, 2 / 3])
    pd = TiltedSpec(GeneralizedGamma(0.5, 1.0, 0.0), q=1.0)
    p = Partition.from_sizes([1, 1])
    np.testing.assert_allclose(unconditional_urn_weights(pd, p).probabilities(),
                               [2 / 3, 1 / 6, 1 / 6], rtol=1e-14)
    raw = unconditional_urn_weights(pd, p, normalize=False)
    np.testing.assert_allclose(np.exp(np.append(raw.log_new, raw.log_join)),
                               np.exp(quadrature_unconditional(pd, p)), rtol=1e-8)
    ngg = TiltedSpec(GeneralizedGamma(0.5, 1.0, 1.0))
    raw = unconditional_urn_weights(ngg, Partition.from_sizes([1]), normalize=False)
    assert math.exp(raw.log_total) == pytest.approx(1.0, rel=1e-8)


def test_unconditional_matches_quadrature_all_paths():
    specs = [TiltedSpec(GeneralizedGamma(0.5, 1.0, 0.0), q=1.0),
             TiltedSpec(GeneralizedGamma(0.0, 2.5, 1.0), q=0.5, gamma=1.0),
             TiltedSpec(GeneralizedGamma(0.4, 1.5, 0.7), q=0.5, gamma=0.3),
             TiltedSpec(GeneralizedDirichlet(2.0, 3), q=0.5, gamma=0.5)]
    p = Partition.from_sizes([3, 1, 2, 1])
    for spec in specs:
        raw = unconditional_urn_weights(spec, p, normalize=False)
        got = np.append(raw.log_new, raw.log_join)
        np.testing.assert_allclose(got, quadrature_unconditional(spec, p), atol=1e-8)


def test_phi_expectation_identity():
    # E[phi(U, X_n) | X_n] = n + q on random cases
    rng = np.random.default_rng(21)
    for _ in range(10):
        spec = random_spec(rng)
        p = Partition.from_sizes(rng.integers(1, 6, size=rng.integers(1, 5)))
        log_norm = integrate_log_density(lambda u: log_joint_partition_u(spec, p, u))

        def log_f(u):
            tot = np.array([conditional_urn_weights(spec, p, float(x), normalize=False).log_total
                            for x in u])
            return tot + log_joint_partition_u(spec, p, u)

        assert math.exp(integrate_log_density(log_f) - log_norm) == pytest.approx(
            p.n + spec.q, rel=1e-8)
        raw = unconditional_urn_weights(spec, p, normalize=False)
        assert math.exp(raw.log_total) == pytest.approx(p.n + spec.q, rel=1e-8)


def test_unconditional_empty_partition():
    w = unconditional_urn_weights(TiltedSpec(GeneralizedGamma(0.5, 1.0, 1.0)), Partition())
    assert w.probabilities().tolist() == [1.0]


# --- Gibbs full conditionals ----------------------------------------------------------

def test_gibbs_examples():
    dp = TiltedSpec(GeneralizedGamma(0.0, 1.0, 1.0))
    p = Partition.from_sizes([2, 1])
    np.testing.assert_allclose(gibbs_full_conditional_weights(dp, p, 2).probabilities(),
                               [1 / 3, 2 / 3])
    ngg = TiltedSpec(GeneralizedGamma(0.5, 1.0, 1.0))
    w = gibbs_full_conditional_weights(ngg, Partition.from_sizes([2]), 0)
    ref = unconditional_urn_weights(ngg, Partition.from_sizes([1]))
    np.testing.assert_array_equal(w.probabilities(), ref.probabilities())
    pd = TiltedSpec(GeneralizedGamma(0.5, 1.0, 0.0), q=1.0)
    w = gibbs_full_conditional_weights(pd, Partition.from_sizes([1, 1]), 1, u=1.0)
    ref = conditional_urn_weights(pd, Partition.from_sizes([1]), 1.0)
    np.testing.assert_array_equal(w.probabilities(), ref.probabilities())


def test_urn_weights_normalize():
    w = UrnWeights(math.log(2.0), [0.0, math.log(3.0)], normalized=False)
    np.testing.assert_allclose(w.probabilities(), [2 / 6, 1 / 6, 3 / 6])
    assert w.normalize().normalized
