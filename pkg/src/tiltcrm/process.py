"""Process families, tilting parameters and their scalar functionals.

A normalized tilted process is described by a homogeneous jump intensity
(generalized gamma or generalized Dirichlet) together with the tilting
function ``h(x) = exp(-gamma * x) * x**(-q)``. Everything downstream only
needs four scalar functionals of the intensity:

``log_psi0``
    Laplace exponent of the total mass, pinned so that ``psi0(0) = 0``.
``log_tau`` / ``log_kappa``
    Log of ``int s**m exp(-s a) rho(ds)``. With a homogeneous intensity and a
    probability base measure the two coincide.
``log_phi``
    The finite Hurwitz-zeta difference used by the generalized Dirichlet
    family.

Functions accept scalar or array arguments for the continuous variable and
return a float for scalar input.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np
from scipy.special import gammaln

from .core_math import log_sum_exp_rows

from .exceptions import DomainError, ValidationError

__all__ = [
    "GeneralizedGamma",
    "GeneralizedDirichlet",
    "TiltedSpec",
    "NamedPreset",
    "PRESETS",
    "expand_preset",
    "validate",
    "log_psi0",
    "log_tau",
    "log_kappa",
    "log_tau_ratio",
    "log_phi",
]


@dataclass(frozen=True)
class GeneralizedGamma:
    """Intensity ``theta / Gamma(1 - alpha) * s**(-1 - alpha) * exp(-b s) ds``."""

    alpha: float
    theta: float
    b: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "theta", "b"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or math.isnan(v):
                raise ValidationError(f"{name} must be a real number")
        if not 0.0 <= self.alpha < 1.0:
            raise ValidationError("alpha must satisfy 0 <= alpha < 1")
        if not self.theta > 0:
            raise ValidationError("theta must be positive")
        if not self.b >= 0 or math.isinf(self.b):
            raise ValidationError("b must be a finite nonnegative number")
        for name in ("alpha", "theta", "b"):
            object.__setattr__(self, name, float(getattr(self, name)))

    kind = "generalized_gamma"


@dataclass(frozen=True)
class GeneralizedDirichlet:
    """Intensity ``theta * (1 - e^{-cs}) / (1 - e^{-s}) * s**-1 * e^{-s} ds``."""

    theta: float
    c: int = 1

    def __post_init__(self):
        if not isinstance(self.theta, (int, float)) or not self.theta > 0:
            raise ValidationError("theta must be positive")
        c = self.c
        if isinstance(c, float) and c.is_integer():
            object.__setattr__(self, "c", int(c))
        elif not isinstance(c, (int, np.integer)) or isinstance(c, bool):
            raise ValidationError("c must be a positive integer")
        if self.c < 1:
            raise ValidationError("c must be a positive integer")
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "c", int(self.c))

    kind = "generalized_dirichlet"


ProcessFamily = Union[GeneralizedGamma, GeneralizedDirichlet]


@dataclass(frozen=True)
class TiltedSpec:
    """A process family tilted by ``exp(-gamma x) x**(-q)``.

    Construction runs :func:`validate`, so every instance satisfies the
    finiteness condition on the tilting constant.
    """

    family: ProcessFamily
    q: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if not isinstance(self.family, (GeneralizedGamma, GeneralizedDirichlet)):
            raise ValidationError("family must be GeneralizedGamma or GeneralizedDirichlet")
        for name in ("q", "gamma"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or math.isnan(v) \
                    or math.isinf(v) or v < 0:
                raise ValidationError(f"{name} must be a finite nonnegative number")
            object.__setattr__(self, name, float(v))
        validate(self)

    @property
    def is_generalized_gamma(self) -> bool:
        return isinstance(self.family, GeneralizedGamma)

    @property
    def effective_b(self) -> float:
        """``b + gamma`` for the generalized gamma family (the exponential tilt folds into b)."""
        return self.family.b + self.gamma

    def to_dict(self) -> dict:
        return {"family": self.family.kind, **asdict(self.family), "q": self.q, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "TiltedSpec":
        d = dict(d)
        kind = d.pop("family")
        q = d.pop("q", 0.0)
        gamma = d.pop("gamma", 0.0)
        if kind == "generalized_gamma":
            fam = GeneralizedGamma(**d)
        elif kind == "generalized_dirichlet":
            fam = GeneralizedDirichlet(**d)
        else:
            raise ValidationError(f"unknown family {kind!r}")
        return cls(fam, q=q, gamma=gamma)


def validate(spec: TiltedSpec) -> TiltedSpec:
    """Check that ``E[h(total mass)]`` is finite; return the spec unchanged.

    Accepted parameter sets:

    * generalized gamma, ``alpha = 0``: needs ``b > 0`` and ``theta > q``;
    * generalized gamma, ``0 < alpha < 1``: any ``q >= 0`` (with ``b = 0``
      this is the stable / Poisson-Dirichlet case, exercised for ``q > 0``
      and ``q = 0``);
    * generalized Dirichlet: needs ``theta > q``.

    Raises
    ------
    ValidationError
        Naming the violated condition.
    """
    fam = spec.family
    if isinstance(fam, GeneralizedGamma):
        if fam.alpha == 0.0:
            if not fam.b > 0:
                raise ValidationError("generalized gamma with alpha=0 requires b > 0")
            if not fam.theta > spec.q:
                raise ValidationError(
                    f"generalized gamma with alpha=0 requires theta > q (theta={fam.theta}, q={spec.q})")
    else:
        if not fam.theta > spec.q:
            raise ValidationError(
                f"generalized Dirichlet requires theta > q (theta={fam.theta}, q={spec.q})")
    return spec


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def log_psi0(spec: TiltedSpec, lam):
    """Laplace exponent ``psi0(lam)`` of the total mass, with ``psi0(0) = 0``.

    Despite the name the value is on the natural scale of ``psi0`` (it is
    already a log-Laplace transform).
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(~(lam >= 0)):
        raise DomainError("psi0 requires lam >= 0")
    fam = spec.family
    if isinstance(fam, GeneralizedGamma):
        b = fam.b
        if fam.alpha > 0:
            out = (fam.theta / fam.alpha) * ((lam + b) ** fam.alpha - b ** fam.alpha)
        else:
            out = fam.theta * np.log1p(lam / b)
    else:
        # Gamma(lam + c + 1) / Gamma(lam + 1) = prod_{j=1}^{c} (lam + j); the
        # product form avoids cancellation between two large lgamma values.
        j = np.arange(1, fam.c + 1, dtype=float)
        out = fam.theta * np.sum(np.log1p(lam[..., None] / j), axis=-1)
    return _out(out)


def log_phi(m, x, c):
    """``log sum_{l=0}^{c-1} (x + 1 + l)**(-m)`` for a positive integer ``c``."""
    if isinstance(c, float) and c.is_integer():
        c = int(c)
    if not isinstance(c, (int, np.integer)) or isinstance(c, bool) or c < 1:
        raise DomainError("c must be a positive integer")
    m = np.asarray(m, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(~(m > 0)):
        raise DomainError("log_phi requires m > 0")
    if np.any(~(x >= 0)):
        raise DomainError("log_phi requires x >= 0")
    if c == 1:
        return _out(-m * np.log1p(x))
    ell = np.arange(c, dtype=float)
    terms = -m[..., None] * np.log(x[..., None] + 1.0 + ell)
    return _out(log_sum_exp_rows(terms, axis=-1))


def _check_m(m):
    m = np.asarray(m, dtype=float)
    if np.any(~(m > 0)):
        raise DomainError("moment order m must be positive")
    return m


def log_tau(spec: TiltedSpec, m, a):
    """``log int s**m exp(-s a) rho(ds)``.

    Generalized gamma:
    ``log theta + lgamma(m - alpha) - lgamma(1 - alpha) + (alpha - m) log(a + b)``.
    Generalized Dirichlet: ``log theta + lgamma(m) + log_phi(m, a, c)``.
    """
    m = _check_m(m)
    a = np.asarray(a, dtype=float)
    if np.any(~(a >= 0)):
        raise DomainError("tau requires a >= 0")
    fam = spec.family
    if isinstance(fam, GeneralizedGamma):
        if np.any(m <= fam.alpha):
            raise DomainError("tau requires m > alpha")
        ab = a + fam.b
        if np.any(ab <= 0):
            raise DomainError("tau_m(a) diverges when a + b = 0")
        out = (math.log(fam.theta) + gammaln(m - fam.alpha) - gammaln(1.0 - fam.alpha)
               + (fam.alpha - m) * np.log(ab))
    else:
        out = math.log(fam.theta) + gammaln(m) + log_phi(m, a, fam.c)
    return _out(out)


def log_kappa(spec: TiltedSpec, m, a):
    """Base-measure average of ``log_tau``; identical to it for homogeneous intensities."""
    return log_tau(spec, m, a)


def log_tau_ratio(spec: TiltedSpec, m, a):
    """``log tau_{m+1}(a) - log tau_m(a)`` in simplified closed form."""
    m = _check_m(m)
    a = np.asarray(a, dtype=float)
    if np.any(~(a >= 0)):
        raise DomainError("tau requires a >= 0")
    fam = spec.family
    if isinstance(fam, GeneralizedGamma):
        ab = a + fam.b
        if np.any(ab <= 0):
            raise DomainError("tau_m(a) diverges when a + b = 0")
        return _out(np.log(m - fam.alpha) - np.log(ab))
    return _out(np.log(m) + log_phi(m + 1, a, fam.c) - log_phi(m, a, fam.c))


@dataclass(frozen=True)
class NamedPreset:
    """A named special case together with its parameter values."""

    name: str
    parameters: dict = field(default_factory=dict)

    def expand(self) -> TiltedSpec:
        return expand_preset(self.name, **self.parameters)


def _pd(alpha, q=0.0):
    if not 0 < alpha < 1:
        raise ValidationError("poisson_dirichlet requires 0 < alpha < 1")
    return TiltedSpec(GeneralizedGamma(alpha, 1.0, 0.0), q=q, gamma=0.0)


def _stable(alpha, theta=1.0):
    if not 0 < alpha < 1:
        raise ValidationError("normalized_stable requires 0 < alpha < 1")
    return TiltedSpec(GeneralizedGamma(alpha, theta, 0.0))


def _ngg(alpha, theta=1.0, b=1.0, q=0.0, gamma=0.0):
    return TiltedSpec(GeneralizedGamma(alpha, theta, b), q=q, gamma=gamma)


# name -> (builder, allowed keys)
PRESETS = {
    "dirichlet": (lambda theta=1.0, b=1.0: TiltedSpec(GeneralizedGamma(0.0, theta, b)),
                  ("theta", "b")),
    "beta_gamma": (lambda theta, q, b=1.0, gamma=0.0:
                   TiltedSpec(GeneralizedGamma(0.0, theta, b), q=q, gamma=gamma),
                   ("theta", "q", "b", "gamma")),
    "poisson_dirichlet": (_pd, ("alpha", "q")),
    "normalized_stable": (_stable, ("alpha", "theta")),
    "normalized_generalized_gamma": (_ngg, ("alpha", "theta", "b", "q", "gamma")),
    "inverse_gaussian": (lambda theta=1.0, b=1.0, q=0.0, gamma=0.0:
                         TiltedSpec(GeneralizedGamma(0.5, theta, b), q=q, gamma=gamma),
                         ("theta", "b", "q", "gamma")),
    "generalized_dirichlet": (lambda theta, c=1, q=0.0, gamma=0.0:
                              TiltedSpec(GeneralizedDirichlet(theta, c), q=q, gamma=gamma),
                              ("theta", "c", "q", "gamma")),
}


def expand_preset(name: str, **params) -> TiltedSpec:
    """Expand a named special case, e.g. ``expand_preset("poisson_dirichlet", alpha=0.5, q=1)``."""
    try:
        builder, keys = PRESETS[name]
    except KeyError:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    unknown = set(params) - set(keys)
    if unknown:
        raise ValidationError(f"preset {name!r} does not take {sorted(unknown)}")
    try:
        return builder(**params)
    except TypeError as exc:
        raise ValidationError(f"preset {name!r}: {exc}") from None
