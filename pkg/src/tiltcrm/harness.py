"""Sampling algorithms for the number of blocks, replication and summaries.

Four algorithms produce draws of ``K_n``, the number of blocks among ``n``
observations:

``A1``
    Sequential unconditional urn: each item is allocated with the
    predictive weights that integrate the latent variable out.
``A2``
    Sequential conditional urn: before each allocation a fresh ``U~_i`` is
    drawn given the current partition, then the conditional weights are used.
``A3``
    Gibbs sampler that reallocates every item in turn with the unconditional
    full conditionals, starting from all singletons.
``A4``
    Gibbs sampler that draws ``U_n`` given the partition once per sweep and
    then reallocates every item with the conditional full conditionals.

A1 and A2 are exact, with one independent dataset per kept draw. A3 and A4
are Markov chains that record ``K_n`` after each full sweep.

Reproducibility: every dataset (A1, A2) or chain (A3, A4) owns a generator
seeded from ``SeedSequence(seed, spawn_key=(algorithm, replicate, index))``,
so results do not depend on how the work is split across processes.

The inner loops use plain Python lists and floats; for the generalized gamma
family the predictive weights reduce to a handful of scalars, computed by the
same routines that back :mod:`tiltcrm.partition`.
"""

from __future__ import annotations

import math
from collections import Counter
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import chi2_contingency

from .core_math import DEFAULT_QUADRATURE, QuadratureConfig
from .exact import SizeDistribution
from .exceptions import NumericError, UsageError
from .latent import _beta_prime, _gd_u_tilde, _log_phi_scalar, _gg_u, _gg_u_tilde, generic_sampler, U
from .partition import Partition, gg_unconditional_moments, unconditional_urn_weights
from .process import GeneralizedGamma, TiltedSpec, validate

__all__ = [
    "ALGORITHMS",
    "RunConfig",
    "RunResult",
    "Summary",
    "run",
    "run_a1",
    "run_a2",
    "run_a3",
    "run_a4",
    "run_replicates",
    "summarize",
    "two_sample_chi2",
    "tv_distance",
    "default_workers",
    "WORKERS_ENV",
]

ALGORITHMS = ("A1", "A2", "A3", "A4")
WORKERS_ENV = "TILTCRM_THREADS"


def default_workers() -> int:
    """Worker count from the ``TILTCRM_THREADS`` environment variable (default 1)."""
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise UsageError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return value


@dataclass(frozen=True)
class RunConfig:
    """Settings of one simulation run.

    ``num_samples`` counts datasets for A1/A2 and kept sweeps for A3/A4;
    ``burn_in`` sweeps are discarded by A3/A4 only. ``init`` selects the
    starting partition of the Gibbs samplers (``"singletons"`` or
    ``"one_block"``).
    """

    spec: TiltedSpec
    n: int
    num_samples: int
    algorithm: str = "A1"
    burn_in: int = 0
    seed: int = 0
    replicate: int = 0
    init: str = "singletons"
    quadrature: QuadratureConfig = DEFAULT_QUADRATURE

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise UsageError(f"algorithm must be one of {ALGORITHMS}")
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise UsageError("n must be a positive integer")
        if not isinstance(self.num_samples, (int, np.integer)) or self.num_samples < 1:
            raise UsageError("num_samples must be at least 1")
        if not isinstance(self.burn_in, (int, np.integer)) or self.burn_in < 0:
            raise UsageError("burn_in must be nonnegative")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2 ** 64:
            raise UsageError("seed must be an integer in [0, 2**64)")
        if self.init not in ("singletons", "one_block"):
            raise UsageError("init must be 'singletons' or 'one_block'")
        validate(self.spec)

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "n": int(self.n),
                "num_samples": int(self.num_samples), "algorithm": self.algorithm,
                "burn_in": int(self.burn_in), "seed": int(self.seed),
                "replicate": int(self.replicate), "init": self.init}

    @classmethod
    def from_dict(cls, d: dict, quadrature: QuadratureConfig = DEFAULT_QUADRATURE) -> "RunConfig":
        d = dict(d)
        spec = TiltedSpec.from_dict(d.pop("spec"))
        return cls(spec=spec, quadrature=quadrature, **d)


@dataclass(frozen=True)
class RunResult:
    """Block-count draws of one run and their empirical distribution."""

    config: RunConfig
    block_count_draws: np.ndarray
    size_distribution: SizeDistribution
    standard_errors: np.ndarray
    latent_draws: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def num_samples(self) -> int:
        return int(self.block_count_draws.size)


def _rng(seed: int, algorithm: str, *key) -> np.random.Generator:
    """Independent stream for ``(seed, algorithm, *key)``.

    The algorithm is part of the spawn key, so runs of different algorithms
    with the same seed never share uniforms.
    """
    key = (ALGORITHMS.index(algorithm) + 1,) + key
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _choose(r: float, w_new: float, w_join: list) -> int:
    """Index of the chosen block, or -1 for a new block, given uniform ``r``."""
    total = w_new + math.fsum(w_join)
    t = r * total
    acc = w_new
    if t < acc:
        return -1
    for k, w in enumerate(w_join):
        acc += w
        if t < acc:
            return k
    return len(w_join) - 1 if w_join else -1


# --- predictive weight kernels ---------------------------------------------
#
# Each kernel maps the current block sizes to (new weight, join weights) on
# the linear scale, up to a common factor.

class _Unconditional:
    def __init__(self, spec: TiltedSpec, cfg: QuadratureConfig):
        self.spec = spec
        self.cfg = cfg
        fam = spec.family
        self.gg = isinstance(fam, GeneralizedGamma)
        if self.gg:
            self.alpha, self.theta, self.q = fam.alpha, fam.theta, spec.q
            self.mode = ("dirichlet" if fam.alpha == 0 else
                         "stable" if spec.effective_b == 0 else "quadrature")
        self._cache = {}

    def __call__(self, sizes: list):
        if not sizes:
            return 1.0, []
        if self.gg:
            a = self.alpha
            if self.mode == "dirichlet":
                return self.theta, [float(s) for s in sizes]
            if self.mode == "stable":
                return self.q + a * len(sizes), [s - a for s in sizes]
            key = (sum(sizes), len(sizes))
            val = self._cache.get(key)
            if val is None:
                ln_new, ln_a = gg_unconditional_moments(self.spec, key[0], key[1], self.cfg)
                val = (math.exp(ln_new - ln_a), 1.0)
                self._cache[key] = val
            return val[0], [s - a for s in sizes]
        key = tuple(sorted(sizes))
        val = self._cache.get(key)
        if val is None:
            w = unconditional_urn_weights(self.spec, Partition.from_sizes(key), self.cfg,
                                          normalize=False)
            by_size = dict(zip(key, w.log_join))
            val = (w.log_new, by_size)
            self._cache[key] = val
        ln_new, by_size = val
        return math.exp(ln_new), [math.exp(by_size[s]) for s in sizes]


class _Conditional:
    """Conditional weights at ``u`` with the common factor dropped."""

    def __init__(self, spec: TiltedSpec):
        self.spec = spec
        fam = spec.family
        self.gg = isinstance(fam, GeneralizedGamma)
        if self.gg:
            self.alpha, self.theta, self.bp = fam.alpha, fam.theta, spec.effective_b
        else:
            self.theta, self.c, self.gamma = fam.theta, fam.c, spec.gamma

    def __call__(self, sizes: list, u: float):
        if self.gg:
            a = self.alpha
            return self.theta * (u + self.bp) ** a, [s - a for s in sizes]
        lphi = _log_phi_scalar(self.gamma + u, self.c)
        ratios = {s: s * math.exp(lphi(s + 1) - lphi(s)) for s in set(sizes)}
        return self.theta * math.exp(lphi(1)), [ratios[s] for s in sizes]


def _u_tilde_draw(spec: TiltedSpec, rng, sizes: list) -> float:
    fam = spec.family
    n, k = sum(sizes), len(sizes)
    if isinstance(fam, GeneralizedGamma):
        if fam.alpha > 0:
            return _gg_u_tilde(rng, fam.alpha, fam.theta, spec.effective_b, spec.q, n, k)
        return _beta_prime(rng, n + spec.q + 1.0, fam.theta - spec.q, spec.effective_b)
    return _gd_u_tilde(rng, fam.theta, fam.c, spec.gamma, spec.q, Counter(sizes))


def _u_draw(spec: TiltedSpec, rng, sizes: list, cfg: QuadratureConfig) -> float:
    fam = spec.family
    n, k = sum(sizes), len(sizes)
    if isinstance(fam, GeneralizedGamma):
        if fam.alpha > 0:
            return _gg_u(rng, fam.alpha, fam.theta, spec.effective_b, spec.q, n, k)
        return _beta_prime(rng, n + spec.q, fam.theta - spec.q, spec.effective_b)
    sampler = generic_sampler(spec, Partition.from_sizes(sizes), U, cfg)
    return float(sampler.draw(rng.random()))


# --- single dataset / chain workers -----------------------------------------

def _a1_dataset(weights: _Unconditional, n: int, rng) -> int:
    sizes = [1]
    r = rng.random(n)
    for i in range(1, n):
        w_new, w_join = weights(sizes)
        k = _choose(r[i], w_new, w_join)
        if k < 0:
            sizes.append(1)
        else:
            sizes[k] += 1
    return len(sizes)


def _a2_dataset(spec: TiltedSpec, weights: _Conditional, n: int, rng) -> int:
    sizes = [1]
    for _ in range(1, n):
        u = _u_tilde_draw(spec, rng, sizes)
        w_new, w_join = weights(sizes, u)
        k = _choose(rng.random(), w_new, w_join)
        if k < 0:
            sizes.append(1)
        else:
            sizes[k] += 1
    return len(sizes)


def _gibbs_chain(cfg: RunConfig, conditional: bool, rng):
    spec, n = cfg.spec, cfg.n
    if cfg.init == "singletons":
        assign, sizes = list(range(n)), [1] * n
    else:
        assign, sizes = [0] * n, [n]
    uncond = None if conditional else _Unconditional(spec, cfg.quadrature)
    cond = _Conditional(spec) if conditional else None
    total = cfg.burn_in + cfg.num_samples
    draws = np.empty(cfg.num_samples, dtype=np.int64)
    latents = np.empty(cfg.num_samples) if conditional else None
    for sweep in range(total):
        if conditional:
            u = _u_draw(spec, rng, sizes, cfg.quadrature)
            if not (u > 0 and math.isfinite(u)):
                raise NumericError(f"latent draw {u!r} at sweep {sweep}")
        r = rng.random(n)
        for i in range(n):
            b = assign[i]
            sizes[b] -= 1
            if sizes[b] == 0:
                del sizes[b]
                for j in range(n):
                    if assign[j] > b:
                        assign[j] -= 1
            w_new, w_join = cond(sizes, u) if conditional else uncond(sizes)
            k = _choose(r[i], w_new, w_join)
            if k < 0:
                sizes.append(1)
                k = len(sizes) - 1
            else:
                sizes[k] += 1
            assign[i] = k
        if sweep >= cfg.burn_in:
            draws[sweep - cfg.burn_in] = len(sizes)
            if conditional:
                latents[sweep - cfg.burn_in] = u
    return draws, latents


def _dataset_chunk(args):
    cfg, start, stop = args
    spec, n = cfg.spec, cfg.n
    out = np.empty(stop - start, dtype=np.int64)
    if cfg.algorithm == "A1":
        weights = _Unconditional(spec, cfg.quadrature)
        for s in range(start, stop):
            rng = _rng(cfg.seed, cfg.algorithm, cfg.replicate, s)
            out[s - start] = _a1_dataset(weights, n, rng)
    else:
        weights = _Conditional(spec)
        for s in range(start, stop):
            rng = _rng(cfg.seed, cfg.algorithm, cfg.replicate, s)
            out[s - start] = _a2_dataset(spec, weights, n, rng)
    return out


def _chunks(total: int, workers: int):
    size = max(1, math.ceil(total / (4 * workers)))
    return [(i, min(total, i + size)) for i in range(0, total, size)]


def _result(cfg: RunConfig, draws: np.ndarray, latents=None) -> RunResult:
    counts = np.bincount(draws, minlength=cfg.n + 1)[1:cfg.n + 1]
    if counts.sum() != draws.size:
        raise NumericError("block counts outside [1, n]")
    p_hat = counts / draws.size
    se = np.sqrt(p_hat * (1.0 - p_hat) / draws.size)
    dist = SizeDistribution(cfg.n, p_hat, cfg.algorithm, cfg.spec, se)
    draws = draws.copy()
    draws.setflags(write=False)
    return RunResult(cfg, draws, dist, dist.standard_errors, latents)


def _run_datasets(cfg: RunConfig, workers: int) -> RunResult:
    chunks = _chunks(cfg.num_samples, workers)
    if workers <= 1:
        parts = [_dataset_chunk((cfg, a, b)) for a, b in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_dataset_chunk, [(cfg, a, b) for a, b in chunks]))
    return _result(cfg, np.concatenate(parts))


def run_a1(cfg: RunConfig, workers: Optional[int] = None) -> RunResult:
    """Sequential unconditional urn; one independent dataset per draw."""
    return _run_datasets(_with_algorithm(cfg, "A1"), workers or default_workers())


def run_a2(cfg: RunConfig, workers: Optional[int] = None) -> RunResult:
    """Sequential conditional urn with a fresh ``U~_i`` before every allocation.

    The first item always opens a block, so each dataset starts at ``n = 1``
    and draws ``U~_1`` given that partition.
    """
    return _run_datasets(_with_algorithm(cfg, "A2"), workers or default_workers())


def run_a3(cfg: RunConfig, workers: Optional[int] = None) -> RunResult:
    """Gibbs sampler with unconditional full conditionals; ``K_n`` recorded per sweep."""
    cfg = _with_algorithm(cfg, "A3")
    draws, _ = _gibbs_chain(cfg, False, _rng(cfg.seed, cfg.algorithm, cfg.replicate))
    return _result(cfg, draws)


def run_a4(cfg: RunConfig, workers: Optional[int] = None) -> RunResult:
    """Gibbs sampler that redraws ``U_n`` each sweep and then every allocation given it."""
    cfg = _with_algorithm(cfg, "A4")
    draws, latents = _gibbs_chain(cfg, True, _rng(cfg.seed, cfg.algorithm, cfg.replicate))
    return _result(cfg, draws, latents)


_RUNNERS = {"A1": run_a1, "A2": run_a2, "A3": run_a3, "A4": run_a4}


def _with_algorithm(cfg: RunConfig, algorithm: str) -> RunConfig:
    if cfg.algorithm == algorithm:
        return cfg
    return RunConfig(**{**cfg.__dict__, "algorithm": algorithm})


def run(cfg: RunConfig, workers: Optional[int] = None) -> RunResult:
    """Dispatch on ``cfg.algorithm``."""
    return _RUNNERS[cfg.algorithm](cfg, workers)


def _replicate_job(cfg):
    return run(cfg, 1)


def run_replicates(cfg: RunConfig, batches: int, workers: Optional[int] = None) -> list:
    """Independent batches ``replicate = 0..batches-1`` of the same configuration."""
    if batches < 1:
        raise UsageError("batches must be at least 1")
    workers = workers or default_workers()
    cfgs = [RunConfig(**{**cfg.__dict__, "replicate": r}) for r in range(batches)]
    if workers <= 1:
        return [run(c, 1) for c in cfgs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_replicate_job, cfgs))


# --- summaries and comparisons ----------------------------------------------

def tv_distance(p, q) -> float:
    """Total variation distance ``0.5 * sum |p - q|``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise UsageError("distributions must have the same length")
    return 0.5 * float(np.abs(p - q).sum())


def two_sample_chi2(draws_a, draws_b, min_expected: float = 5.0) -> tuple:
    """Chi-square test that two samples of block counts share one distribution.

    Adjacent categories are merged until every expected cell count reaches
    ``min_expected``. Returns ``(statistic, dof, p_value)``.
    """
    a = np.asarray(draws_a, dtype=np.int64)
    b = np.asarray(draws_b, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        raise UsageError("both samples must be nonempty")
    top = int(max(a.max(), b.max()))
    table = np.stack([np.bincount(a, minlength=top + 1), np.bincount(b, minlength=top + 1)])
    table = table[:, table.sum(axis=0) > 0]
    frac = np.array([a.size, b.size], dtype=float) / (a.size + b.size)
    merged, current = [], np.zeros(2)
    for col in table.T:
        current = current + col
        if (current.sum() * frac).min() >= min_expected:
            merged.append(current)
            current = np.zeros(2)
    if current.sum() > 0:
        if merged:
            merged[-1] = merged[-1] + current
        else:
            merged.append(current)
    if len(merged) < 2:
        return 0.0, 0, 1.0
    stat, pval, dof, _ = chi2_contingency(np.array(merged).T, correction=False)
    return float(stat), int(dof), float(pval)


@dataclass(frozen=True)
class Summary:
    """Per-``i`` estimates pooled over batches, with optional comparison to exact values."""

    n: int
    num_batches: int
    num_samples: int
    p_hat: np.ndarray
    se: np.ndarray
    batch_min: Optional[np.ndarray] = None
    batch_max: Optional[np.ndarray] = None
    batch_q025: Optional[np.ndarray] = None
    batch_q975: Optional[np.ndarray] = None
    exact: Optional[np.ndarray] = None
    z_scores: Optional[np.ndarray] = None
    max_abs_deviation: Optional[float] = None
    tv: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def max_abs_z(self) -> Optional[float]:
        return None if self.z_scores is None else float(np.max(np.abs(self.z_scores)))

    def passes(self, gate: float) -> bool:
        """True when every ``|p_hat_i - p_i| <= gate * sqrt(p_i (1 - p_i) / N)``."""
        if self.exact is None:
            raise UsageError("no exact distribution to compare with")
        bound = gate * np.sqrt(self.exact * (1.0 - self.exact) / self.num_samples)
        return bool(np.all(np.abs(self.p_hat - self.exact) <= bound))


def summarize(results: Sequence[RunResult] | RunResult,
              exact: Optional[SizeDistribution] = None) -> Summary:
    """Pool one or more runs and optionally compare with an exact distribution.

    With several batches the per-batch ``p_hat`` range and 2.5%/97.5%
    quantiles are included. ``se`` is ``sqrt(p_hat (1 - p_hat) / N)`` with
    ``N`` the pooled number of draws; z-scores use the exact ``p`` instead.
    """
    if isinstance(results, RunResult):
        results = [results]
    results = list(results)
    if not results:
        raise UsageError("at least one run is required")
    n = results[0].n
    if any(r.n != n for r in results):
        raise UsageError("all runs must share n")
    draws = np.concatenate([r.block_count_draws for r in results])
    total = draws.size
    p_hat = np.bincount(draws, minlength=n + 1)[1:n + 1] / total
    se = np.sqrt(p_hat * (1.0 - p_hat) / total)
    kw = {}
    if len(results) > 1:
        per = np.array([r.size_distribution.probabilities for r in results])
        kw = {"batch_min": per.min(axis=0), "batch_max": per.max(axis=0),
              "batch_q025": np.quantile(per, 0.025, axis=0),
              "batch_q975": np.quantile(per, 0.975, axis=0)}
    if exact is not None:
        if exact.n != n:
            raise UsageError("exact distribution has a different n")
        p = exact.probabilities
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (p_hat - p) / np.sqrt(p * (1.0 - p) / total)
        z = np.where(p_hat == p, 0.0, z)
        kw.update(exact=p, z_scores=z, max_abs_deviation=float(np.max(np.abs(p_hat - p))),
                  tv=tv_distance(p_hat, p))
    return Summary(n, len(results), total, p_hat, se, **kw)
