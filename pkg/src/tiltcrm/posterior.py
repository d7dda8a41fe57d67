"""Posterior structure given a partition and the latent variable.

Conditionally on ``U_n = u`` and the first ``n`` observations, the tilted
random measure is again a completely random measure: a continuous part with
intensity ``exp(-s (gamma + u)) rho(ds)`` plus one fixed atom per block, whose
jump has density proportional to ``s**n_k exp(-s (gamma + u)) rho(ds)``. The
jumps are independent of each other and of the continuous part.

For the generalized gamma family the jump law is ``Gamma(n_k - alpha, rate
gamma + u + b)``. For the generalized Dirichlet family it is a mixture of
``Gamma(n_k, rate gamma + u + 1 + j)``, ``j = 0, ..., c - 1``, with weights
proportional to ``(gamma + u + 1 + j)**(-n_k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .core_math import log_sum_exp_rows
from .exceptions import DomainError, UsageError
from .partition import Partition
from .process import GeneralizedGamma, TiltedSpec, log_tau

__all__ = [
    "PosteriorDescription",
    "JumpSample",
    "jump_law",
    "posterior_description",
    "log_jump_density",
    "log_jump_density_untilted",
    "sample_jumps",
]


def _mixture_law(n_k, shift, c):
    rates = shift + 1.0 + np.arange(c, dtype=float)
    logw = -n_k * np.log(rates)
    w = np.exp(logw - log_sum_exp_rows(logw))
    return rates, w


def jump_law(spec: TiltedSpec, n_k: int, u: Optional[float]) -> dict:
    """Parameters of the jump law of a block of size ``n_k``.

    ``u=None`` gives the u-free law (exponential shift ``b`` alone).
    """
    if n_k < 1:
        raise DomainError("block size must be at least 1")
    shift = 0.0 if u is None else spec.gamma + u
    fam = spec.family
    if isinstance(fam, GeneralizedGamma):
        rate = shift + fam.b
        if rate <= 0:
            raise DomainError("jump law is improper: rate b + gamma + u must be positive")
        return {"type": "gamma", "shape": n_k - fam.alpha, "rate": rate}
    rates, w = _mixture_law(n_k, shift, fam.c)
    return {"type": "gamma_mixture", "shape": float(n_k), "rates": rates.tolist(),
            "weights": w.tolist()}


def _gamma_logpdf(s, shape, rate):
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(s) - rate * s


def _log_density_from_law(law, s):
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise DomainError("jump sizes must be positive")
    if law["type"] == "gamma":
        out = _gamma_logpdf(s, law["shape"], law["rate"])
    else:
        rates = np.asarray(law["rates"])
        logw = np.log(np.asarray(law["weights"]))
        comps = logw + _gamma_logpdf(s[..., None], law["shape"], rates)
        out = log_sum_exp_rows(comps)
    return float(out) if np.ndim(out) == 0 else out


def log_jump_density(spec: TiltedSpec, n_k: int, u: float, s):
    """Log-density of the jump at an atom shared by ``n_k`` items, given ``U_n = u``."""
    if not u > 0:
        raise DomainError("u must be positive")
    return _log_density_from_law(jump_law(spec, n_k, u), s)


def log_jump_density_untilted(spec: TiltedSpec, n_k: int, s):
    """Log-density of ``s**n_k rho(ds)`` normalized, without the latent shift.

    For the generalized gamma family with ``b = 0`` the law is improper and a
    :class:`DomainError` is raised.
    """
    fam = spec.family
    if isinstance(fam, GeneralizedGamma) and fam.b == 0:
        raise DomainError("s**n_k rho(ds) is not integrable when b = 0")
    return _log_density_from_law(jump_law(spec, n_k, None), s)


@dataclass(frozen=True)
class JumpSample:
    """One jump per block of the conditioning partition."""

    jumps: np.ndarray

    def __post_init__(self):
        arr = np.array(self.jumps, dtype=float).reshape(-1)
        if np.any(~(arr > 0)) or np.any(~np.isfinite(arr)):
            raise DomainError("jumps must be positive and finite")
        arr.setflags(write=False)
        object.__setattr__(self, "jumps", arr)


@dataclass(frozen=True)
class PosteriorDescription:
    """Conditional posterior given the partition and ``U_n = u``.

    Attributes
    ----------
    base_spec : TiltedSpec
        The prior.
    u : float
        Conditioning value of the latent variable.
    tilted_intensity_shift : float
        ``gamma + u``; the continuous part has intensity
        ``exp(-s (gamma + u)) rho(ds)``.
    atoms : tuple of (label, size)
        One fixed atom per block.
    """

    base_spec: TiltedSpec
    u: float
    tilted_intensity_shift: float
    atoms: tuple = field(default_factory=tuple)

    @property
    def continuous_spec(self) -> Optional[TiltedSpec]:
        """For generalized gamma, the continuous part as an untilted spec with ``b + gamma + u``.

        The generalized Dirichlet family is not closed under exponential
        shifts, so None is returned there; use :meth:`log_tau_continuous`.
        """
        fam = self.base_spec.family
        if isinstance(fam, GeneralizedGamma):
            return TiltedSpec(GeneralizedGamma(fam.alpha, fam.theta,
                                               fam.b + self.tilted_intensity_shift))
        return None

    def log_tau_continuous(self, m, a):
        """``log tau_m(a)`` of the continuous part, i.e. the prior's at ``a + gamma + u``."""
        return log_tau(self.base_spec, m, np.asarray(a, dtype=float) + self.tilted_intensity_shift)

    def jump_laws(self) -> list:
        return [jump_law(self.base_spec, size, self.u) for _, size in self.atoms]

    def to_dict(self) -> dict:
        cont = self.continuous_spec
        return {
            "base_spec": self.base_spec.to_dict(),
            "u": self.u,
            "tilted_intensity_shift": self.tilted_intensity_shift,
            "continuous_part": (cont.to_dict() if cont is not None else
                                {**self.base_spec.family.__dict__,
                                 "family": self.base_spec.family.kind,
                                 "exponential_shift": self.tilted_intensity_shift}),
            "atoms": [{"label": _json_label(lab), "size": size, "jump_law": law}
                      for (lab, size), law in zip(self.atoms, self.jump_laws())],
            "structure": "normalized (continuous part + atoms); jumps independent "
                         "of each other and of the continuous part",
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PosteriorDescription":
        return posterior_description(
            TiltedSpec.from_dict(d["base_spec"]),
            Partition.from_sizes([a["size"] for a in d["atoms"]]),
            d["u"], labels=[a["label"] for a in d["atoms"]])


def _json_label(lab):
    return int(lab) if isinstance(lab, (int, np.integer)) else lab


def posterior_description(spec: TiltedSpec, p: Partition, u: float,
                          labels=None) -> PosteriorDescription:
    """Describe the posterior given the partition and ``U_n = u``."""
    if p.n < 1:
        raise UsageError("posterior_description needs at least one observation")
    if not (u > 0 and math.isfinite(u)):
        raise DomainError("u must be positive and finite")
    labels = p.labels if labels is None else tuple(labels)
    if len(labels) != p.num_blocks:
        raise UsageError("one label per block is required")
    atoms = tuple((lab, int(size)) for lab, size in zip(labels, p.block_sizes))
    return PosteriorDescription(spec, float(u), float(spec.gamma + u), atoms)


def sample_jumps(spec: TiltedSpec, p: Partition, u: float, rng, size=None):
    """Independent jump draws, one per block.

    Returns a :class:`JumpSample`, or an array of shape ``(size, K)`` when
    ``size`` is given.
    """
    if not u > 0:
        raise DomainError("u must be positive")
    m = 1 if size is None else int(size)
    cols = []
    for n_k in p.block_sizes:
        law = jump_law(spec, n_k, u)
        if law["type"] == "gamma":
            cols.append(rng.standard_gamma(law["shape"], size=m) / law["rate"])
        else:
            rates = np.asarray(law["rates"])
            comp = rng.choice(rates.size, size=m, p=np.asarray(law["weights"]))
            cols.append(rng.standard_gamma(law["shape"], size=m) / rates[comp])
    out = np.stack(cols, axis=1) if cols else np.zeros((m, 0))
    if size is None:
        return JumpSample(out[0])
    return out
