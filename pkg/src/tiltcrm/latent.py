"""Densities and samplers for the latent variable ``U_n`` and its tilted companion.

Given a partition with ``n`` items in ``K`` blocks, ``U_n`` has unnormalized
log-density :func:`~tiltcrm.partition.log_joint_partition_u`. The tilted
variable ``U~_n`` has density proportional to ``phi(u, X_n) f_U(u)``, where
``phi`` is the total unnormalized conditional urn weight; it is what the
sequential conditional urn needs.

Exact samplers (``b' = b + gamma``, ``N = n + q``):

* generalized gamma, ``alpha > 0``: rejection from the ``b' = 0`` law, a
  two-component mixture of powers of gamma variables;
* generalized gamma, ``alpha = 0``: ``U / (U + b')`` is beta distributed;
* generalized Dirichlet: rejection from a transformed beta proposal.

Gamma variates are always drawn as ``standard_gamma(shape) / rate``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core_math import DEFAULT_QUADRATURE, QuadratureConfig, integrate_log_density, \
    log_sum_exp_rows, numeric_inverse_cdf_sampler
from .exceptions import DomainError, UsageError
from .partition import Partition, _check_u, _log_joint, _sizes_array
from .process import GeneralizedGamma, TiltedSpec, log_kappa, log_phi, log_tau_ratio

__all__ = [
    "LatentU",
    "U",
    "U_TILDE",
    "log_tilt",
    "log_density_u",
    "log_density_u_tilde",
    "ngg_acceptance",
    "gd_acceptance",
    "GD_TIGHT",
    "GD_CLASSICAL",
    "u_acceptance",
    "sample_u_tilde_pd",
    "sample_u_tilde_ngg",
    "sample_u_tilde_gd",
    "sample_u_tilde",
    "sample_u",
    "sample_u_generic",
    "generic_sampler",
]

U = "U"
U_TILDE = "U_tilde"


@dataclass(frozen=True)
class LatentU:
    """A realization of ``U_n`` (``kind="U"``) or ``U~_n`` (``kind="U_tilde"``)."""

    value: float
    kind: str = U

    def __post_init__(self):
        if self.kind not in (U, U_TILDE):
            raise UsageError(f"kind must be {U!r} or {U_TILDE!r}")
        if not (math.isfinite(self.value) and self.value > 0):
            raise DomainError(f"latent value must be positive and finite, got {self.value}")

    def __float__(self):
        return float(self.value)


def _require_items(p: Partition):
    if p.n < 1:
        raise UsageError("the latent density needs a partition with at least one item")


def log_tilt(spec: TiltedSpec, p: Partition, u):
    """``log phi(u, X_n)``: log of the summed unnormalized conditional urn weights."""
    u = _check_u(u)
    uu = np.atleast_1d(u)
    a = spec.gamma + uu
    sizes = _sizes_array(p)
    fam = spec.family
    if isinstance(fam, GeneralizedGamma):
        ab = a + fam.b
        out = np.log(uu) - np.log(ab) + np.log(fam.theta * ab ** fam.alpha
                                                 + sizes.sum() - fam.alpha * sizes.size)
    else:
        cols = [np.asarray(log_kappa(spec, 1, a)).reshape(-1)]
        uniq, counts = np.unique(sizes, return_counts=True)
        for s, m in zip(uniq, counts):
            cols.append(math.log(m) + np.asarray(log_tau_ratio(spec, s, a)).reshape(-1))
        out = np.log(uu) + log_sum_exp_rows(np.stack(cols, axis=1))
    return float(out[0]) if u.ndim == 0 else out


def _log_norm(spec, p, kind, cfg):
    return _cached_log_norm(spec, tuple(sorted(p.block_sizes)), kind, cfg or DEFAULT_QUADRATURE)


@lru_cache(maxsize=1024)
def _cached_log_norm(spec, sizes_key, kind, cfg):
    sizes = np.asarray(sizes_key, dtype=float)
    p = Partition.from_sizes(sizes_key)
    if kind == U:
        return integrate_log_density(lambda u: _log_joint(spec, sizes, u), cfg)
    return integrate_log_density(lambda u: _log_joint(spec, sizes, u) + log_tilt(spec, p, u), cfg)


def log_density_u(spec: TiltedSpec, p: Partition, u, normalized: bool = False,
                  cfg: QuadratureConfig | None = None):
    """Log-density of ``U_n`` given the partition (unnormalized unless ``normalized``)."""
    _require_items(p)
    u = _check_u(u)
    out = _log_joint(spec, _sizes_array(p), np.atleast_1d(u))
    if normalized:
        out = out - _log_norm(spec, p, U, cfg)
    return float(out[0]) if u.ndim == 0 else out


def log_density_u_tilde(spec: TiltedSpec, p: Partition, u, normalized: bool = False,
                        cfg: QuadratureConfig | None = None):
    """Log-density of ``U~_n``: ``log phi(u, X_n) + log f_U(u)``.

    The normalizer equals ``n + q`` times the normalizer of ``f_U``.
    """
    _require_items(p)
    u = _check_u(u)
    out = _log_joint(spec, _sizes_array(p), np.atleast_1d(u)) + log_tilt(spec, p, np.atleast_1d(u))
    if normalized:
        out = out - _log_norm(spec, p, U_TILDE, cfg)
    return float(out[0]) if u.ndim == 0 else out


# --- acceptance functions -------------------------------------------------

def _ngg_log_acceptance(v, alpha, theta, b, n, k):
    m = n - alpha * k
    vb = v + b
    with np.errstate(divide="ignore"):
        return (-(theta / alpha) * (vb ** alpha - v ** alpha)
                + (m + 1.0) * (np.log(v) - np.log(vb))
                + np.log(theta * vb ** alpha + m) - np.log(theta * v ** alpha + m))


def _u_log_acceptance(v, alpha, theta, b, n, k):
    vb = v + b
    with np.errstate(divide="ignore"):
        return (-(theta / alpha) * (vb ** alpha - v ** alpha)
                + (n - alpha * k) * (np.log(v) - np.log(vb)))


def ngg_acceptance(v, alpha: float, theta: float, b: float, n: int, k: int):
    """Acceptance probability of the generalized gamma ``U~`` rejection step.

    ``exp(-(theta/alpha)[(v+b)^a - v^a]) (v/(v+b))^(n-a k+1)
    [theta (v+b)^a + n - a k] / [theta v^a + n - a k]``; equal to 1 when ``b = 0``.
    """
    out = np.exp(_ngg_log_acceptance(np.asarray(v, dtype=float), alpha, theta, b, n, k))
    return float(out) if out.ndim == 0 else out


def u_acceptance(v, alpha: float, theta: float, b: float, n: int, k: int):
    """Acceptance probability of the generalized gamma ``U`` rejection step.

    ``exp(-(theta/alpha)[(v+b)^a - v^a]) (v/(v+b))^(n - a k)``.
    """
    out = np.exp(_u_log_acceptance(np.asarray(v, dtype=float), alpha, theta, b, n, k))
    return float(out) if out.ndim == 0 else out


GD_TIGHT = "tight"
GD_CLASSICAL = "classical"


def _gd_tail(theta, c, q, proposal):
    if proposal == GD_TIGHT:
        return c * theta - q
    if proposal == GD_CLASSICAL:
        return theta - q
    raise UsageError(f"proposal must be {GD_TIGHT!r} or {GD_CLASSICAL!r}")


def _gd_log_acceptance(theta, c, gamma, q, sizes_uniq, counts, v, proposal=GD_TIGHT):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    a = gamma + v
    n = float(np.dot(sizes_uniq, counts))
    k = float(np.sum(counts))
    j = np.arange(1, c + 1, dtype=float)
    log_e_psi = -theta * np.sum(np.log(a[:, None] + j), axis=1)
    lphi = np.asarray(log_phi(sizes_uniq[None, :], a[:, None], c)).reshape(a.size, -1)
    lphi1 = np.asarray(log_phi(sizes_uniq[None, :] + 1, a[:, None], c)).reshape(a.size, -1)
    cols = np.concatenate([
        (math.log(theta) + np.asarray(log_phi(1, a, c)).reshape(-1))[:, None],
        np.log(counts * sizes_uniq)[None, :] + lphi1 - lphi], axis=1)
    log_chi = log_e_psi + lphi @ counts + log_sum_exp_rows(cols)
    tail = _gd_tail(theta, c, q, proposal) + q
    return (log_chi + (tail + n + 1.0) * np.log1p(a)
            - k * math.log(c) - math.log(c * theta + n))


def gd_acceptance(spec: TiltedSpec, p: Partition, v, proposal: str = GD_TIGHT):
    """Acceptance probability of the generalized Dirichlet ``U~`` rejection step.

    ``chi(v) (gamma + v + 1)^(s + n + 1) / (c^K (c theta + n))``, where
    ``chi`` is the ``U~`` density with the proposal's ``u^(n+q)`` factor and
    the constant ``theta^K prod Gamma(n_k)`` removed. The exponent ``s`` is
    ``c theta`` for the ``"tight"`` proposal and ``theta`` for the
    ``"classical"`` one (see :func:`sample_u_tilde_gd`).
    """
    fam = spec.family
    uniq, counts = np.unique(_sizes_array(p), return_counts=True)
    out = np.exp(_gd_log_acceptance(fam.theta, fam.c, spec.gamma, spec.q, uniq,
                                    counts.astype(float), v, proposal))
    return float(out[0]) if np.ndim(v) == 0 else out


# --- samplers -------------------------------------------------------------
#
# The scalar loops below are what the simulation harness
# calls once per item; the vectorized ``_rejection`` serves bulk draws.

def _gg_u_tilde(rng, alpha, theta, bp, q, n, k):
    rate = theta / alpha
    w1 = (q + alpha * k) / (n + q)
    m = n - alpha * k
    while True:
        shape = k + q / alpha + (1.0 if rng.random() < w1 else 0.0)
        v = (rng.standard_gamma(shape) / rate) ** (1.0 / alpha)
        if not (v > 0 and math.isfinite(v)):
            continue
        if bp == 0.0:
            return v
        vb = v + bp
        log_acc = (-rate * (vb ** alpha - v ** alpha) + (m + 1.0) * math.log(v / vb)
                   + math.log((theta * vb ** alpha + m) / (theta * v ** alpha + m)))
        if math.log(rng.random()) < log_acc:
            return v


def _gg_u(rng, alpha, theta, bp, q, n, k):
    rate = theta / alpha
    m = n - alpha * k
    while True:
        v = (rng.standard_gamma(k + q / alpha) / rate) ** (1.0 / alpha)
        if not (v > 0 and math.isfinite(v)):
            continue
        if bp == 0.0:
            return v
        vb = v + bp
        if math.log(rng.random()) < -rate * (vb ** alpha - v ** alpha) + m * math.log(v / vb):
            return v


def _log_phi_scalar(a: float, c: int):
    """``m -> log sum_{l<c} (a + 1 + l)^(-m)`` at one point ``a``, in pure Python."""
    logs = [math.log(a + 1.0 + l) for l in range(c)]
    l0 = logs[0]  # the l = 0 term is the largest

    def lphi(m):
        return -m * l0 + math.log(math.fsum(math.exp(-m * (x - l0)) for x in logs))

    return lphi


def _gd_log_acceptance_scalar(theta, c, gamma, q, sizes, v, proposal=GD_TIGHT):
    """Pure-Python twin of :func:`_gd_log_acceptance` for one ``v``."""
    a = gamma + v
    lphi = _log_phi_scalar(a, c)
    n = k = 0
    log_prod = 0.0
    cols = [math.log(theta) + lphi(1)]
    for s, cnt in sizes.items():
        ls = lphi(s)
        log_prod += cnt * ls
        cols.append(math.log(cnt * s) + lphi(s + 1) - ls)
        n += cnt * s
        k += cnt
    top = max(cols)
    log_chi = (-theta * math.fsum(math.log(a + j) for j in range(1, c + 1)) + log_prod
               + top + math.log(math.fsum(math.exp(x - top) for x in cols)))
    tail = _gd_tail(theta, c, q, proposal) + q
    return log_chi + (tail + n + 1.0) * math.log1p(a) - k * math.log(c) - math.log(c * theta + n)


def _gd_u_tilde(rng, theta, c, gamma, q, sizes, proposal=GD_TIGHT):
    """Scalar rejection draw of ``U~`` for generalized Dirichlet; ``sizes`` maps size to count."""
    n = sum(s * cnt for s, cnt in sizes.items())
    a, b = n + q + 1.0, _gd_tail(theta, c, q, proposal)
    scale = gamma + 1.0
    while True:
        w = rng.beta(a, b)
        if not 0.0 < w < 1.0:
            continue
        v = scale * w / (1.0 - w)
        if math.log(rng.random()) < _gd_log_acceptance_scalar(theta, c, gamma, q, sizes, v,
                                                              proposal):
            return v


def _beta_prime(rng, a, b, scale):
    while True:
        w = rng.beta(a, b)
        if 0.0 < w < 1.0:
            return scale * w / (1.0 - w)


def _rejection(rng, propose, log_accept, size, batch=16):
    """Collect ``size`` accepted proposals, screening them in vectorized batches.

    ``propose(m)`` returns m candidates; ``log_accept`` maps candidates to log
    acceptance probabilities (None accepts everything finite and positive).
    Accepted draws keep proposal order, so the output is a deterministic
    function of the generator state.
    """
    kept = []
    got = tried = 0
    while got < size:
        v = np.asarray(propose(batch), dtype=float)
        zeta = rng.random(batch)
        ok = np.isfinite(v) & (v > 0)
        if log_accept is not None and ok.any():
            ok[ok] = np.log(zeta[ok]) < log_accept(v[ok])
        kept.append(v[ok])
        got += int(ok.sum())
        tried += batch
        rate = max(got / tried, 1e-4)
        batch = int(min(max((size - got) / rate * 1.2, 16), 1_000_000))
    return np.concatenate(kept)[:size]


def _beta_prime_proposal(rng, a, b, scale):
    def propose(m):
        w = rng.beta(a, b, size=m)
        with np.errstate(divide="ignore"):
            return scale * w / (1.0 - w)
    return propose


def _gg_u_tilde_bulk(rng, alpha, theta, bp, q, n, k, size):
    rate = theta / alpha
    w1 = (q + alpha * k) / (n + q)

    def propose(m):
        shape = k + q / alpha + (rng.random(m) < w1)
        return (rng.standard_gamma(shape) / rate) ** (1.0 / alpha)

    acc = None if bp == 0.0 else (lambda v: _ngg_log_acceptance(v, alpha, theta, bp, n, k))
    return _rejection(rng, propose, acc, size)


def _gg_u_bulk(rng, alpha, theta, bp, q, n, k, size):
    rate = theta / alpha

    def propose(m):
        return (rng.standard_gamma(k + q / alpha, size=m) / rate) ** (1.0 / alpha)

    acc = None if bp == 0.0 else (lambda v: _u_log_acceptance(v, alpha, theta, bp, n, k))
    return _rejection(rng, propose, acc, size)


def _gd_u_tilde_bulk(rng, theta, c, gamma, q, sizes_uniq, counts, size, proposal=GD_TIGHT):
    n = float(np.dot(sizes_uniq, counts))
    propose = _beta_prime_proposal(rng, n + q + 1.0, _gd_tail(theta, c, q, proposal), gamma + 1.0)

    def acc(v):
        return _gd_log_acceptance(theta, c, gamma, q, sizes_uniq, counts, v, proposal)

    return _rejection(rng, propose, acc, size)


def _wrap(values, kind, size):
    if size is None:
        return LatentU(float(values[0]) if np.ndim(values) else float(values), kind)
    return np.asarray(values, dtype=float)


def _is_pd(spec: TiltedSpec) -> bool:
    fam = spec.family
    return (isinstance(fam, GeneralizedGamma) and fam.alpha > 0 and fam.theta == 1.0
            and fam.b == 0.0 and spec.gamma == 0.0)


def sample_u_tilde_pd(alpha: float, q: float, p: Partition, rng, size=None):
    """Exact draw of ``U~_n`` for the Poisson-Dirichlet ``(alpha, q)`` process.

    With probability ``(q + alpha K) / (n + q)`` return ``G1**(1/alpha)``,
    ``G1 ~ Gamma(q/alpha + K + 1, rate 1/alpha)``; otherwise ``G2**(1/alpha)``
    with ``G2 ~ Gamma(q/alpha + K, rate 1/alpha)``.

    Returns a :class:`LatentU`, or an array of ``size`` values when ``size``
    is given (the same convention holds for every sampler below).
    """
    if not 0 < alpha < 1 or q < 0:
        raise UsageError("sample_u_tilde_pd needs 0 < alpha < 1 and q >= 0")
    _require_items(p)
    if size is None:
        return LatentU(_gg_u_tilde(rng, alpha, 1.0, 0.0, q, p.n, p.num_blocks), U_TILDE)
    return _gg_u_tilde_bulk(rng, alpha, 1.0, 0.0, q, p.n, p.num_blocks, size)


def sample_u_tilde_ngg(spec: TiltedSpec, p: Partition, rng, size=None):
    """Exact rejection draw of ``U~_n`` for generalized gamma with ``alpha > 0``.

    The proposal is the ``b' = 0`` law; ``b'`` is ``b + gamma`` and ``n + q``
    replaces ``n`` in the mixture weights. See :func:`ngg_acceptance`.
    """
    fam = spec.family
    if not isinstance(fam, GeneralizedGamma) or fam.alpha == 0:
        raise UsageError("sample_u_tilde_ngg needs a generalized gamma spec with alpha > 0")
    _require_items(p)
    args = (fam.alpha, fam.theta, spec.effective_b, spec.q, p.n, p.num_blocks)
    if size is None:
        return LatentU(_gg_u_tilde(rng, *args), U_TILDE)
    return _gg_u_tilde_bulk(rng, *args, size)


def sample_u_tilde_gd(spec: TiltedSpec, p: Partition, rng, size=None,
                      proposal: str = GD_TIGHT):
    """Exact rejection draw of ``U~_n`` for the generalized Dirichlet process.

    Proposal ``u = (gamma + 1) W / (1 - W)`` with ``W ~ Beta(n + q + 1, s)``
    and acceptance :func:`gd_acceptance`. The ``"classical"`` proposal uses
    ``s = theta - q``; its tail is heavier than the target's once ``c > 1``
    and the acceptance rate collapses (about 1e-2 at n = 10, c = 2). The
    default ``"tight"`` proposal uses ``s = c theta - q``, which matches the
    target's tail and keeps the same bound.
    """
    fam = spec.family
    if isinstance(fam, GeneralizedGamma):
        raise UsageError("sample_u_tilde_gd needs a generalized Dirichlet spec")
    _require_items(p)
    uniq, counts = np.unique(_sizes_array(p), return_counts=True)
    v = _gd_u_tilde_bulk(rng, fam.theta, fam.c, spec.gamma, spec.q, uniq,
                         counts.astype(float), 1 if size is None else size, proposal)
    return _wrap(v, U_TILDE, size)


def sample_u_tilde(spec: TiltedSpec, p: Partition, rng, size=None):
    """Exact draw of ``U~_n`` using the specialized sampler for the family."""
    _require_items(p)
    fam = spec.family
    if _is_pd(spec):
        return sample_u_tilde_pd(fam.alpha, spec.q, p, rng, size)
    if isinstance(fam, GeneralizedGamma):
        if fam.alpha > 0:
            return sample_u_tilde_ngg(spec, p, rng, size)
        a, b, scale = p.n + spec.q + 1.0, fam.theta - spec.q, spec.effective_b
        if size is None:
            return LatentU(_beta_prime(rng, a, b, scale), U_TILDE)
        return _rejection(rng, _beta_prime_proposal(rng, a, b, scale), None, size)
    return sample_u_tilde_gd(spec, p, rng, size)


def sample_u(spec: TiltedSpec, p: Partition, rng, size=None,
             cfg: QuadratureConfig | None = None):
    """Draw ``U_n`` given the partition.

    Generalized gamma uses an exact sampler: rejection from the ``b' = 0``
    law (proposal ``G**(1/alpha)``, ``G ~ Gamma(K + q/alpha, rate theta/alpha)``,
    see :func:`u_acceptance`) for ``alpha > 0`` and a beta-prime draw for
    ``alpha = 0``. Generalized Dirichlet falls back to :func:`sample_u_generic`.
    """
    _require_items(p)
    fam = spec.family
    if isinstance(fam, GeneralizedGamma):
        if fam.alpha > 0:
            args = (fam.alpha, fam.theta, spec.effective_b, spec.q, p.n, p.num_blocks)
            if size is None:
                return LatentU(_gg_u(rng, *args), U)
            return _gg_u_bulk(rng, *args, size)
        a, b, scale = p.n + spec.q, fam.theta - spec.q, spec.effective_b
        if size is None:
            return LatentU(_beta_prime(rng, a, b, scale), U)
        return _rejection(rng, _beta_prime_proposal(rng, a, b, scale), None, size)
    return sample_u_generic(spec, p, U, rng, cfg, size)


@lru_cache(maxsize=256)
def _generic_sampler(spec, sizes_key, kind, cfg):
    p = Partition.from_sizes(sizes_key)
    sizes = np.asarray(sizes_key, dtype=float)
    if kind == U:
        return numeric_inverse_cdf_sampler(lambda u: _log_joint(spec, sizes, u), cfg)
    return numeric_inverse_cdf_sampler(
        lambda u: _log_joint(spec, sizes, u) + log_tilt(spec, p, u), cfg)


def generic_sampler(spec: TiltedSpec, p: Partition, kind: str,
                    cfg: QuadratureConfig | None = None):
    """The cached :class:`~tiltcrm.core_math.InverseCDFSampler` behind :func:`sample_u_generic`."""
    if kind not in (U, U_TILDE):
        raise UsageError(f"kind must be {U!r} or {U_TILDE!r}")
    _require_items(p)
    return _generic_sampler(spec, tuple(sorted(p.block_sizes)), kind, cfg or DEFAULT_QUADRATURE)


def sample_u_generic(spec: TiltedSpec, p: Partition, kind: str, rng,
                     cfg: QuadratureConfig | None = None, size=None):
    """Draw ``U_n`` or ``U~_n`` by numerical CDF inversion.

    The tabulated sampler is cached per multiset of block sizes, so repeated
    draws for the same configuration only cost one uniform each.
    """
    sampler = generic_sampler(spec, p, kind, cfg)
    if size is None:
        return LatentU(float(sampler.draw(rng.random())), kind)
    return np.asarray(sampler.draw(rng.random(size)), dtype=float)
