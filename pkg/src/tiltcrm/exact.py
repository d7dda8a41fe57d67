"""Exact distribution of the number of blocks.

The EPPF of every implemented process has the Gibbs-like form

    p(n_1, ..., n_K) = int exp(-psi0(gamma + u)) prod_k kappa_{n_k}(gamma + u) u^(n+q-1) du
                       / normalizer,

so ``P(K = k)`` is a sum over set partitions with ``k`` blocks. For the
generalized gamma family ``kappa_m(a)`` factorizes as
``theta Gamma(m - alpha) / Gamma(1 - alpha) (a + b)^(alpha - m)``, and the sum
collapses to a generalized Stirling number ``C(n, k)`` times one integral per
``k``. For the generalized Dirichlet family the m- and a-dependence do not
separate; there the partition sum is evaluated at every quadrature node by a
recursion over the block containing the last item.

:func:`brute_force_size_distribution` enumerates set partitions directly and
serves as an independent check for small ``n``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .core_math import DEFAULT_QUADRATURE, QuadratureConfig, integrate_log_density_vec, \
    log_sum_exp_rows
from .exceptions import UsageError
from .partition import Partition, log_eppf_marginal
from .process import GeneralizedGamma, TiltedSpec, log_phi, log_psi0

__all__ = [
    "StirlingTable",
    "SizeDistribution",
    "EXACT",
    "BRUTE_FORCE",
    "stirling_table",
    "exact_size_distribution",
    "brute_force_size_distribution",
    "set_partitions",
    "BRUTE_FORCE_MAX_N",
]

EXACT = "exact"
BRUTE_FORCE = "brute-force"
BRUTE_FORCE_MAX_N = 10


@dataclass(frozen=True)
class StirlingTable:
    """Generalized Stirling numbers in log space.

    ``log_values[m, k] = log C(m, k)`` where ``C(m, k)`` sums
    ``prod_j Gamma(n_j - alpha) / Gamma(1 - alpha)`` over the partitions of
    ``m`` items into ``k`` blocks. Entries with ``k > m`` are ``-inf``.
    """

    n: int
    alpha: float
    log_values: np.ndarray

    def value(self, m: int, k: int) -> float:
        return float(np.exp(self.log_values[m, k]))


def stirling_table(alpha: float, n: int) -> StirlingTable:
    """Build ``log C(m, k)`` for ``0 <= k <= m <= n``.

    Uses ``C(m+1, k) = C(m, k-1) + (m - k alpha) C(m, k)`` with ``C(0, 0) = 1``.
    For ``alpha = 0`` these are the unsigned Stirling numbers of the first kind.

    Examples
    --------
    >>> round(stirling_table(0.5, 3).value(3, 2), 12)
    1.5
    >>> round(stirling_table(0.0, 4).value(4, 2))
    11
    """
    if not 0.0 <= alpha < 1.0:
        raise UsageError("alpha must satisfy 0 <= alpha < 1")
    if n < 0:
        raise UsageError("n must be nonnegative")
    lv = np.full((n + 1, n + 1), -np.inf)
    lv[0, 0] = 0.0
    k = np.arange(1, n + 1, dtype=float)
    for m in range(n):
        prev = lv[m]
        coef = m - k * alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            stay = np.where(coef > 0, np.log(np.where(coef > 0, coef, 1.0)) + prev[1:], -np.inf)
        lv[m + 1, 1:] = np.logaddexp(prev[:-1], stay)
    lv.setflags(write=False)
    return StirlingTable(n, float(alpha), lv)


@dataclass(frozen=True)
class SizeDistribution:
    """Probabilities ``P(K = i)`` for ``i = 1..n`` with their provenance.

    ``provenance`` is ``"exact"``, ``"brute-force"`` or an algorithm name
    (``"A1"`` ... ``"A4"``).
    """

    n: int
    probabilities: np.ndarray
    provenance: str
    spec: Optional[TiltedSpec] = None
    standard_errors: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float).reshape(-1)
        if p.size != self.n:
            raise UsageError("probabilities must have length n")
        if np.any(p < 0) or np.any(~np.isfinite(p)):
            raise UsageError("probabilities must be finite and nonnegative")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)
        if self.standard_errors is not None:
            se = np.array(self.standard_errors, dtype=float).reshape(-1)
            se.setflags(write=False)
            object.__setattr__(self, "standard_errors", se)

    def __getitem__(self, i: int) -> float:
        """``P(K = i)`` with 1-based ``i``."""
        return float(self.probabilities[i - 1])

    def mean(self) -> float:
        return float(np.dot(np.arange(1, self.n + 1), self.probabilities))

    def to_dict(self) -> dict:
        d = {"n": self.n, "provenance": self.provenance,
             "probabilities": self.probabilities.tolist(),
             "spec": None if self.spec is None else self.spec.to_dict()}
        if self.standard_errors is not None:
            d["standard_errors"] = self.standard_errors.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SizeDistribution":
        spec = None if d.get("spec") is None else TiltedSpec.from_dict(d["spec"])
        return cls(d["n"], d["probabilities"], d["provenance"], spec,
                   d.get("standard_errors"))

    def __eq__(self, other):
        if not isinstance(other, SizeDistribution):
            return NotImplemented
        se_eq = (self.standard_errors is None and other.standard_errors is None) or (
            self.standard_errors is not None and other.standard_errors is not None
            and np.array_equal(self.standard_errors, other.standard_errors))
        return (self.n == other.n and self.provenance == other.provenance
                and self.spec == other.spec and se_eq
                and np.array_equal(self.probabilities, other.probabilities))

    __hash__ = None


def _normalize(logp: np.ndarray) -> np.ndarray:
    return np.exp(logp - log_sum_exp_rows(logp))


def _gg_log_weights(spec: TiltedSpec, n: int, cfg: QuadratureConfig) -> np.ndarray:
    fam = spec.family
    table = stirling_table(fam.alpha, n)
    k = np.arange(1, n + 1, dtype=float)
    if fam.alpha == 0.0:
        # (a + b)^(-n) does not depend on k, so the integral cancels
        return table.log_values[n, 1:] + k * math.log(fam.theta)
    g, b, q = spec.gamma, fam.b, spec.q

    def log_f(u):
        base = -np.asarray(log_psi0(spec, g + u)) + (n + q - 1.0) * np.log(u)
        lab = np.log(g + u + b)
        return base[:, None] + (k * fam.alpha - n)[None, :] * lab[:, None]

    integrals = integrate_log_density_vec(log_f, cfg)
    return table.log_values[n, 1:] + k * math.log(fam.theta) + integrals


def _gd_partition_sums(n: int, log_w: np.ndarray) -> np.ndarray:
    """Log of sum over partitions of n items into k blocks of prod_j W_{n_j}.

    ``log_w[:, m-1]`` holds ``log W_m`` at every node; returns ``(nodes, n)``
    with column ``k-1``. Recursion on the block holding the last item:
    ``D(m+1, k) = sum_j binom(m, j) W_{j+1} D(m-j, k-1)``.
    """
    nodes = log_w.shape[0]
    d = np.full((nodes, n + 1, n + 1), -np.inf)
    d[:, 0, 0] = 0.0
    for m in range(n):
        j = np.arange(m + 1)
        lbinom = gammaln(m + 1.0) - gammaln(j + 1.0) - gammaln(m - j + 1.0)
        # terms[node, j, k] = lbinom_j + log W_{j+1} + D(m - j, k - 1)
        prev = d[:, m - j, :m + 1]
        terms = (lbinom[None, :, None] + log_w[:, j][:, :, None] + prev)
        d[:, m + 1, 1:m + 2] = log_sum_exp_rows(terms, axis=1)
    return d[:, n, 1:]


def _gd_log_weights(spec: TiltedSpec, n: int, cfg: QuadratureConfig) -> np.ndarray:
    fam = spec.family
    g, q, c = spec.gamma, spec.q, fam.c
    k = np.arange(1, n + 1, dtype=float)
    m = np.arange(1, n + 1, dtype=float)

    def log_f(u):
        a = g + u
        base = -np.asarray(log_psi0(spec, a)) + (n + q - 1.0) * np.log(u)
        log_w = gammaln(m)[None, :] + np.asarray(log_phi(m[None, :], a[:, None], c))
        return base[:, None] + _gd_partition_sums(n, log_w)

    integrals = integrate_log_density_vec(log_f, cfg)
    return k * math.log(fam.theta) + integrals


def exact_size_distribution(spec: TiltedSpec, n: int,
                            cfg: QuadratureConfig | None = None) -> SizeDistribution:
    """Exact ``P(K = k)``, ``k = 1..n``, for ``n`` draws from the normalized process.

    * generalized gamma, ``alpha > 0``:
      ``P(k) ~ C(n, k) theta^k int exp(-psi0(gamma+u)) (gamma+u+b)^(k alpha - n) u^(n+q-1) du``,
      with all ``n`` integrals sharing one adaptive node set;
    * generalized gamma, ``alpha = 0``: ``P(k) ~ theta^k |s(n, k)|``;
    * generalized Dirichlet: the per-node partition sum described in the
      module docstring, integrated the same way.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise UsageError("n must be a positive integer")
    cfg = cfg or DEFAULT_QUADRATURE
    if isinstance(spec.family, GeneralizedGamma):
        logp = _gg_log_weights(spec, int(n), cfg)
    else:
        logp = _gd_log_weights(spec, int(n), cfg)
    return SizeDistribution(int(n), _normalize(logp), EXACT, spec)


def set_partitions(n: int):
    """Yield every set partition of ``n`` items as a restricted growth string.

    ``a[0] = 0`` and ``a[i] <= 1 + max(a[:i])``; the string lists the block
    of each item.
    """
    if n == 0:
        yield ()
        return
    a = [0] * n
    mx = [0] * n  # mx[i] = max(a[:i+1])
    while True:
        yield tuple(a)
        i = n - 1
        while i > 0 and a[i] > mx[i - 1]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        mx[i] = max(mx[i - 1], a[i])
        for j in range(i + 1, n):
            a[j] = 0
            mx[j] = mx[i]


def brute_force_size_distribution(spec: TiltedSpec, n: int,
                                  cfg: QuadratureConfig | None = None) -> SizeDistribution:
    """``P(K = k)`` by summing the marginal EPPF over every set partition.

    Partitions are enumerated one by one; the EPPF (one quadrature each) is
    cached on the multiset of block sizes since it is symmetric.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise UsageError("n must be a positive integer")
    if n > BRUTE_FORCE_MAX_N:
        raise UsageError(f"brute force enumeration is limited to n <= {BRUTE_FORCE_MAX_N}")
    shapes = Counter()
    for rgs in set_partitions(int(n)):
        sizes = Counter(rgs)
        shapes[tuple(sorted(sizes.values()))] += 1
    logp = np.full(n, -np.inf)
    for shape, count in shapes.items():
        le = log_eppf_marginal(spec, Partition.from_sizes(shape), cfg)
        k = len(shape)
        logp[k - 1] = np.logaddexp(logp[k - 1], math.log(count) + le)
    return SizeDistribution(int(n), _normalize(logp), BRUTE_FORCE, spec)
