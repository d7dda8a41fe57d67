"""Partitions, EPPF evaluation and predictive urn weights.

A :class:`Partition` records which block each of ``n`` items sits in. Blocks
are numbered ``0, 1, ...`` in order of creation; removing the last item of a
block deletes it and shifts higher block indices down by one.

Urn weights come in two flavours:

* conditional on the latent ``u`` (cheap, closed form), where the weight of a
  new block is ``u * kappa_1(gamma + u)`` and the weight of block ``k`` is
  ``u * tau_{n_k + 1}(gamma + u) / tau_{n_k}(gamma + u)``;
* unconditional, where the same weights are averaged over the conditional
  law of ``U_n`` given the partition. Their raw values sum to ``n + q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .core_math import DEFAULT_QUADRATURE, QuadratureConfig, integrate_log_density, \
    integrate_log_density_vec
from .exceptions import DomainError, UsageError
from .process import GeneralizedGamma, TiltedSpec, log_kappa, log_psi0, log_tau_ratio

__all__ = [
    "Partition",
    "UrnWeights",
    "add_item",
    "remove_item",
    "conditional_urn_weights",
    "unconditional_urn_weights",
    "gibbs_full_conditional_weights",
    "log_eppf_conditional",
    "log_joint_partition_u",
    "log_eppf_marginal",
    "gg_unconditional_moments",
]


@dataclass(frozen=True)
class Partition:
    """Assignment of ``n`` items to nonempty blocks.

    Parameters
    ----------
    assignment : tuple of int
        Block index (0-based) of every item.
    block_sizes : tuple of int
        Size of each block, in creation order.
    labels : tuple
        One opaque atom identifier per block.
    """

    assignment: tuple = ()
    block_sizes: tuple = ()
    labels: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(a) for a in self.assignment))
        object.__setattr__(self, "block_sizes", tuple(int(s) for s in self.block_sizes))
        object.__setattr__(self, "labels", tuple(self.labels))
        k = len(self.block_sizes)
        if len(self.labels) != k:
            raise UsageError("labels must have one entry per block")
        if len(set(self.labels)) != k:
            raise UsageError("atom labels must be distinct")
        if any(s < 1 for s in self.block_sizes):
            raise UsageError("blocks must be nonempty")
        counts = [0] * k
        for a in self.assignment:
            if not 0 <= a < k:
                raise UsageError(f"block index {a} out of range for {k} blocks")
            counts[a] += 1
        if tuple(counts) != self.block_sizes:
            raise UsageError("block_sizes disagree with assignment")

    @property
    def n(self) -> int:
        return len(self.assignment)

    @property
    def num_blocks(self) -> int:
        return len(self.block_sizes)

    @classmethod
    def from_sizes(cls, sizes) -> "Partition":
        """Partition whose items fill the blocks in order: ``[2, 1]`` -> items (0, 0, 1)."""
        sizes = [int(s) for s in sizes]
        if any(s < 1 for s in sizes):
            raise UsageError("block sizes must be positive integers")
        assignment = [k for k, s in enumerate(sizes) for _ in range(s)]
        return cls(tuple(assignment), tuple(sizes), tuple(range(len(sizes))))

    @classmethod
    def from_assignment(cls, assignment) -> "Partition":
        """Build from arbitrary block ids; blocks are renumbered by first appearance."""
        relabel = {}
        out = []
        for a in assignment:
            out.append(relabel.setdefault(a, len(relabel)))
        sizes = [0] * len(relabel)
        for a in out:
            sizes[a] += 1
        return cls(tuple(out), tuple(sizes), tuple(range(len(relabel))))

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        return cls.from_sizes([1] * n)

    def canonical_sizes(self) -> tuple:
        """Block sizes sorted in decreasing order (the partition up to relabelling)."""
        return tuple(sorted(self.block_sizes, reverse=True))


def _next_label(p: Partition):
    ints = [lab for lab in p.labels if isinstance(lab, (int, np.integer))]
    return (max(ints) + 1) if ints else 0


def add_item(p: Partition, block: Optional[int] = None, label=None) -> Partition:
    """Append one item, either to ``block`` or (``block=None``) to a new block.

    ``label`` names the new block's atom; it defaults to the next unused integer.

    Examples
    --------
    >>> add_item(Partition.from_sizes([2, 1]), 0).block_sizes
    (3, 1)
    >>> add_item(Partition.from_sizes([2, 1])).block_sizes
    (2, 1, 1)
    """
    sizes = list(p.block_sizes)
    labels = list(p.labels)
    if block is None:
        block = len(sizes)
        sizes.append(1)
        labels.append(_next_label(p) if label is None else label)
    else:
        if not isinstance(block, (int, np.integer)) or not 0 <= block < len(sizes):
            raise UsageError(f"block {block!r} out of range for {len(sizes)} blocks")
        if label is not None:
            raise UsageError("a label can only be given when opening a new block")
        sizes[block] += 1
    return Partition(p.assignment + (int(block),), tuple(sizes), tuple(labels))


def remove_item(p: Partition, i: int) -> Partition:
    """Remove item ``i`` (0-based); an emptied block is deleted and indices compacted."""
    if not isinstance(i, (int, np.integer)) or not 0 <= i < p.n:
        raise UsageError(f"item {i!r} out of range for n={p.n}")
    k = p.assignment[i]
    sizes = list(p.block_sizes)
    labels = list(p.labels)
    assignment = list(p.assignment[:i] + p.assignment[i + 1:])
    sizes[k] -= 1
    if sizes[k] == 0:
        del sizes[k]
        del labels[k]
        assignment = [a - 1 if a > k else a for a in assignment]
    return Partition(tuple(assignment), tuple(sizes), tuple(labels))


@dataclass(frozen=True)
class UrnWeights:
    """Log predictive weights for opening a new block or joining block ``k``."""

    log_new: float
    log_join: np.ndarray = field(default_factory=lambda: np.zeros(0))
    normalized: bool = True

    def __post_init__(self):
        arr = np.array(self.log_join, dtype=float).reshape(-1)
        arr.setflags(write=False)
        object.__setattr__(self, "log_join", arr)
        object.__setattr__(self, "log_new", float(self.log_new))

    @property
    def log_total(self) -> float:
        return float(logsumexp(np.append(self.log_join, self.log_new)))

    def normalize(self) -> "UrnWeights":
        z = self.log_total
        return UrnWeights(self.log_new - z, self.log_join - z, True)

    def probabilities(self) -> np.ndarray:
        """Normalized probabilities ordered as ``[new, join_0, join_1, ...]``."""
        w = self if self.normalized else self.normalize()
        return np.exp(np.append(w.log_new, w.log_join))


def _sizes_array(p: Partition) -> np.ndarray:
    return np.asarray(p.block_sizes, dtype=float)


def _check_u(u):
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0)) or np.any(~np.isfinite(u)):
        raise DomainError("u must be positive and finite")
    return u


def _conditional_parts(spec: TiltedSpec, sizes: np.ndarray, u: float):
    """Return (common, rel_new, rel_join) with weight = common + rel.

    The split keeps the u-dependence in ``common`` wherever the family allows
    it, so that with ``alpha = 0`` the normalized weights do not depend on u
    at all, to the last bit.
    """
    fam = spec.family
    a = spec.gamma + u
    if isinstance(fam, GeneralizedGamma):
        ab = a + fam.b
        common = math.log(u) - math.log(ab)
        rel_new = math.log(fam.theta) + fam.alpha * math.log(ab)
        rel_join = np.log(sizes - fam.alpha)
    else:
        common = math.log(u)
        rel_new = log_kappa(spec, 1, a)
        rel_join = np.asarray(log_tau_ratio(spec, sizes, a), dtype=float).reshape(-1)
    return common, rel_new, rel_join


def conditional_urn_weights(spec: TiltedSpec, p: Partition, u: float,
                            normalize: bool = True) -> UrnWeights:
    """Predictive weights for item ``n + 1`` given the partition and ``U = u``.

    Unnormalized, ``log_new = log u + log kappa_1(gamma + u)`` and
    ``log_join[k] = log u + log tau_{n_k+1}(gamma + u) - log tau_{n_k}(gamma + u)``;
    their sum is ``phi(u, X_n)``.

    Examples
    --------
    Dirichlet process with ``theta = 1`` after two items in one block:

    >>> from tiltcrm.process import expand_preset
    >>> w = conditional_urn_weights(expand_preset("dirichlet"), Partition.from_sizes([2]), 0.7)
    >>> w.probabilities().round(6).tolist()
    [0.333333, 0.666667]
    """
    u = float(_check_u(u))
    common, rel_new, rel_join = _conditional_parts(spec, _sizes_array(p), u)
    if normalize:
        z = float(logsumexp(np.append(rel_join, rel_new)))
        return UrnWeights(rel_new - z, rel_join - z, True)
    return UrnWeights(common + rel_new, common + rel_join, False)


def log_eppf_conditional(spec: TiltedSpec, p: Partition, u) -> float:
    """``sum_k log kappa_{n_k}(gamma + u)``, the u-conditional EPPF up to a constant."""
    u = _check_u(u)
    if p.num_blocks == 0:
        return 0.0 if u.ndim == 0 else np.zeros(u.shape)
    a = spec.gamma + u
    sizes = _sizes_array(p)
    if u.ndim == 0:
        return float(np.sum(log_kappa(spec, sizes, float(a))))
    return np.sum(log_kappa(spec, sizes[None, :], a[:, None]), axis=1)


def _log_joint(spec: TiltedSpec, sizes: np.ndarray, u: np.ndarray) -> np.ndarray:
    n = sizes.sum()
    a = spec.gamma + u
    out = -np.asarray(log_psi0(spec, a)) + (n + spec.q - 1.0) * np.log(u)
    if sizes.size:
        uniq, counts = np.unique(sizes, return_counts=True)
        lk = np.asarray(log_kappa(spec, uniq[None, :], np.atleast_1d(a)[:, None]))
        out = out + (lk @ counts).reshape(np.shape(out))
    return out


def log_joint_partition_u(spec: TiltedSpec, p: Partition, u):
    """``-psi0(gamma + u) + sum_k log kappa_{n_k}(gamma + u) + (n + q - 1) log u``.

    This is the unnormalized joint density of the partition and ``U_n``;
    ``u`` may be an array.
    """
    u = _check_u(u)
    out = _log_joint(spec, _sizes_array(p), np.atleast_1d(u))
    return float(out[0]) if u.ndim == 0 else out


def log_eppf_marginal(spec: TiltedSpec, p: Partition,
                      cfg: QuadratureConfig | None = None) -> float:
    """Log of ``int exp(log_joint_partition_u(spec, p, u)) du`` (unnormalized EPPF)."""
    if p.n < 1:
        raise UsageError("log_eppf_marginal needs at least one item")
    sizes = _sizes_array(p)
    return integrate_log_density(lambda u: _log_joint(spec, sizes, u), cfg)


def _unconditional_raw(spec: TiltedSpec, sizes_key: tuple, cfg: QuadratureConfig):
    """Raw unconditional weights keyed by block size: (log_new, {size: log_join})."""
    sizes = np.asarray(sizes_key, dtype=float)
    n = float(sizes.sum())
    k = len(sizes_key)
    uniq = np.unique(sizes)
    fam = spec.family
    log_nq = math.log(n + spec.q)
    if isinstance(fam, GeneralizedGamma):
        if fam.alpha == 0.0:
            # u * tau ratio = n_k * u / (u + b'), E[U/(U+b')] = (n+q)/(theta+n)
            base = log_nq - math.log(fam.theta + n)
            return base + math.log(fam.theta), {s: base + math.log(s) for s in uniq}
        if spec.effective_b == 0.0:
            return (math.log(spec.q + fam.alpha * k),
                    {s: math.log(s - fam.alpha) for s in uniq})
        log_new, log_a = gg_unconditional_moments(spec, int(n), k, cfg)
        return log_new, {s: math.log(s - fam.alpha) + log_a for s in uniq}

    def log_f(u):
        lf = _log_joint(spec, sizes, u)
        a = spec.gamma + u
        cols = [lf, lf + np.log(u) + log_kappa(spec, 1, a)]
        cols += [lf + np.log(u) + log_tau_ratio(spec, s, a) for s in uniq]
        return np.stack(cols, axis=1)

    res = integrate_log_density_vec(log_f, cfg)
    return res[1] - res[0], {s: res[2 + j] - res[0] for j, s in enumerate(uniq)}


@lru_cache(maxsize=8192)
def gg_unconditional_moments(spec: TiltedSpec, n: int, k: int,
                             cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> tuple:
    """Unconditional weight ingredients for generalized gamma with ``alpha > 0, b' > 0``.

    Returns ``(log new, log A)`` where ``new = theta E[U (U + b')^(alpha - 1)]``
    and ``A = E[U / (U + b')]``, so block ``k`` gets raw weight
    ``(n_k - alpha) A``. ``U`` has the law given a partition with ``n``
    items in ``k`` blocks, which depends on nothing else.
    """
    fam = spec.family
    bp = spec.effective_b
    g, q, alpha = spec.gamma, spec.q, fam.alpha

    def log_f(u):
        lab = np.log(u + bp)
        lf = -np.asarray(log_psi0(spec, g + u)) + (k * alpha - n) * lab + (n + q - 1.0) * np.log(u)
        lr = np.log(u) - lab
        return np.stack([lf, lf + lr, lf + lr + alpha * lab], axis=1)

    i0, i_join, i_new = integrate_log_density_vec(log_f, cfg)
    return math.log(fam.theta) + i_new - i0, i_join - i0


@lru_cache(maxsize=4096)
def _unconditional_cached(spec, sizes_key, cfg):
    return _unconditional_raw(spec, sizes_key, cfg)


def unconditional_urn_weights(spec: TiltedSpec, p: Partition,
                              cfg: QuadratureConfig | None = None,
                              normalize: bool = True) -> UrnWeights:
    """Predictive weights for item ``n + 1`` with ``U_n`` integrated out.

    Each raw weight is the conditional weight averaged over the law of
    ``U_n`` given the partition, so the raw weights sum to ``n + q``.
    Closed forms are used for ``b + gamma = 0`` (Poisson-Dirichlet type:
    new ``q + alpha K``, join ``n_k - alpha``) and for ``alpha = 0``
    (new ``theta``, join ``n_k``, both times ``(n + q) / (theta + n)``);
    otherwise a single vector quadrature supplies all the averages.

    Results are memoized on the multiset of block sizes.
    """
    cfg = cfg or DEFAULT_QUADRATURE
    if p.n == 0:
        return UrnWeights(0.0, np.zeros(0), True)
    key = tuple(sorted(p.block_sizes))
    log_new, by_size = _unconditional_cached(spec, key, cfg)
    log_join = np.array([by_size[float(s)] for s in p.block_sizes])
    w = UrnWeights(log_new, log_join, False)
    return w.normalize() if normalize else w


def gibbs_full_conditional_weights(spec: TiltedSpec, p: Partition, i: int,
                                   u: Optional[float] = None,
                                   cfg: QuadratureConfig | None = None) -> UrnWeights:
    """Weights for reallocating item ``i`` given all the other items.

    The weights refer to the blocks of ``remove_item(p, i)``. With ``u``
    given the conditional urn is used, otherwise the unconditional one.
    """
    rest = remove_item(p, i)
    if u is None:
        return unconditional_urn_weights(spec, rest, cfg)
    return conditional_urn_weights(spec, rest, u)
