"""Log-space numerics: special functions, log-sum-exp, half-line quadrature and
a tabulated inverse-CDF sampler.

Everything here works with natural logarithms of nonnegative quantities;
``-inf`` encodes zero and NaN is always treated as an error.

The quadrature routine integrates ``exp(log_f(u))`` over ``(0, inf)``. The
half-line is mapped to the real line with ``u = exp(t)`` (or to ``(0, 1)``
with ``u = x / (1 - x)``), the integrand is shifted by its peak, and a global
adaptive Gauss-Kronrod (7, 15) rule is run on the mapped variable. Node
placement depends only on the integrand and the configuration, so results are
bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .exceptions import DomainError, NumericError, UsageError

__all__ = [
    "QuadratureConfig",
    "DEFAULT_QUADRATURE",
    "InverseCDFSampler",
    "integrate_log_density",
    "integrate_log_density_vec",
    "log_add",
    "log_gamma",
    "log_sum_exp",
    "log_sum_exp_rows",
    "numeric_inverse_cdf_sampler",
]

LOG_SUBSTITUTION = "log-substitution"
RATIONAL_SUBSTITUTION = "rational-substitution"


@dataclass(frozen=True)
class QuadratureConfig:
    """Controls for :func:`integrate_log_density`.

    Parameters
    ----------
    relative_tolerance : float
        Target relative error on the linear scale, in ``(0, 1e-3]``.
    absolute_log_tolerance : float
        Log of the absolute error floor, measured relative to the integrand's
        peak value. Regions where the integrand is below
        ``peak * exp(absolute_log_tolerance)`` may be truncated.
    max_subdivisions : int
        Maximum number of interval bisections before giving up.
    transform : str
        ``"log-substitution"`` (default) or ``"rational-substitution"``.
    """

    relative_tolerance: float = 1e-9
    absolute_log_tolerance: float = -60.0
    max_subdivisions: int = 2048
    transform: str = LOG_SUBSTITUTION

    def __post_init__(self):
        if not (0.0 < self.relative_tolerance <= 1e-3):
            raise UsageError("relative_tolerance must lie in (0, 1e-3]")
        if not self.absolute_log_tolerance < 0:
            raise UsageError("absolute_log_tolerance must be negative")
        if self.max_subdivisions < 16:
            raise UsageError("max_subdivisions must be at least 16")
        if self.transform not in (LOG_SUBSTITUTION, RATIONAL_SUBSTITUTION):
            raise UsageError(f"unknown transform {self.transform!r}")


DEFAULT_QUADRATURE = QuadratureConfig()


def log_gamma(x):
    """Natural log of the gamma function for positive arguments.

    Accepts scalars or arrays; scalar input gives a Python float.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr <= 0):
        raise DomainError("log_gamma requires x > 0")
    out = gammaln(arr)
    return float(out) if out.ndim == 0 else out


def log_sum_exp(values) -> float:
    """Return ``log(sum(exp(values)))`` using a max shift.

    All ``-inf`` input gives ``-inf``. Empty input raises :class:`UsageError`.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise UsageError("log_sum_exp of an empty sequence")
    if np.isnan(v).any():
        raise NumericError("NaN passed to log_sum_exp")
    m = v.max()
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(v - m).sum()))


def log_sum_exp_rows(x, axis: int = -1):
    """Array log-sum-exp along ``axis`` with max-shift; all ``-inf`` slices give ``-inf``.

    A lean alternative to ``scipy.special.logsumexp`` for the small arrays in
    sampler inner loops, where the scipy wrapper overhead dominates.
    """
    x = np.asarray(x, dtype=float)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis)) + np.squeeze(m, axis=axis)
    return out


def log_add(a: float, b: float) -> float:
    """``log(exp(a) + exp(b))``."""
    return float(np.logaddexp(a, b))


# Gauss-Kronrod 7/15 nodes and weights on [-1, 1] (QUADPACK qk15).
_XGK_HALF = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK_HALF = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG_HALF = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_XGK = np.concatenate([-_XGK_HALF, _XGK_HALF[-2::-1]])
_WGK = np.concatenate([_WGK_HALF, _WGK_HALF[-2::-1]])
# Gauss nodes sit at odd positions of the Kronrod set.
_GAUSS_IDX = np.array([1, 3, 5, 7, 9, 11, 13])
_WG = np.concatenate([_WG_HALF, _WG_HALF[-2::-1]])

_T_MIN, _T_MAX = -700.0, 700.0
_GRID_STEP = 0.5
_GRID_CHUNK = 40.0


def _as_vectorized(log_f: Callable, vector: bool) -> Callable:
    """Wrap ``log_f`` so it maps a 1-d array of u to an (m, K) array."""

    def call(u):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            try:
                out = np.asarray(log_f(u), dtype=float)
            except (TypeError, ValueError):
                out = None
            if out is None or (out.ndim == 0 and u.size > 1):
                out = np.array([np.asarray(log_f(float(x)), dtype=float) for x in u])
        if out.ndim == 0:
            out = np.full(u.shape, float(out))
        if not vector:
            out = out.reshape(u.shape[0], 1)
        elif out.ndim == 1:
            out = out.reshape(u.shape[0], -1) if out.size != u.shape[0] else out[:, None]
        if np.isnan(out).any():
            raise NumericError("integrand evaluated to NaN")
        if np.isposinf(out).any():
            raise NumericError("integrand evaluated to +inf")
        return out

    return call


def _mapped_integrand(call, transform):
    """Return h(t) = log integrand in the mapped variable, and the map t -> u."""
    if transform == LOG_SUBSTITUTION:

        def to_u(t):
            return np.exp(t)

        def h(t):
            return call(np.exp(t)) + t[:, None]

    else:

        def to_u(x):
            return x / (1.0 - x)

        def h(x):
            return call(x / (1.0 - x)) - 2.0 * np.log1p(-x)[:, None]

    return h, to_u


def _scan_support(h, cfg):
    """Evaluate h on a coarse grid and return (grid, values, peak, tails).

    ``tails`` holds per-side ``(log_end_value, slope)`` for exponential tail
    extrapolation, or None when the side is negligible.
    """
    thresh = cfg.absolute_log_tolerance
    if cfg.transform == RATIONAL_SUBSTITUTION:
        grid = (np.arange(1, 512) / 512.0)
        vals = h(grid)
        peak = vals.max(axis=0)
        return grid, vals, peak, (None, None)

    lo, hi = -_GRID_CHUNK, _GRID_CHUNK
    grid = np.arange(lo, hi + _GRID_STEP / 2, _GRID_STEP)
    vals = h(grid)
    while True:
        peak = vals.max(axis=0)
        live = np.isfinite(peak)
        if not live.any():
            return grid, vals, peak, (None, None)
        left_sig = np.any(vals[0, live] > peak[live] + thresh)
        right_sig = np.any(vals[-1, live] > peak[live] + thresh)
        grew = False
        if left_sig and grid[0] > _T_MIN:
            new_lo = max(_T_MIN, grid[0] - _GRID_CHUNK)
            ext = np.arange(new_lo, grid[0] - _GRID_STEP / 2, _GRID_STEP)
            grid = np.concatenate([ext, grid])
            vals = np.concatenate([h(ext), vals])
            grew = True
        if right_sig and grid[-1] < _T_MAX:
            new_hi = min(_T_MAX, grid[-1] + _GRID_CHUNK)
            ext = np.arange(grid[-1] + _GRID_STEP, new_hi + _GRID_STEP / 2, _GRID_STEP)
            grid = np.concatenate([grid, ext])
            vals = np.concatenate([vals, h(ext)])
            grew = True
        if not grew:
            break

    tails = []
    for end, nxt, sign in ((0, 1, 1.0), (-1, -2, -1.0)):
        v_end = vals[end]
        if not np.any(v_end[live] > peak[live] + thresh):
            tails.append(None)
            continue
        slope = sign * (vals[nxt] - v_end) / _GRID_STEP
        bad = live & (v_end > peak + thresh) & ~(slope < 0)
        if bad.any():
            raise NumericError("integrand does not decay on the half-line; not integrable")
        tails.append((v_end, -slope))
    return grid, vals, peak, tuple(tails)


def _gk_eval(h, a, b):
    """Evaluate h at the 15 Kronrod nodes of each interval. Returns (m, 15, K)."""
    c = 0.5 * (a + b)
    hw = 0.5 * (b - a)
    t = (c[:, None] + hw[:, None] * _XGK[None, :]).ravel()
    return h(t).reshape(a.shape[0], 15, -1)


def _gk_sums(lv, shift, a, b):
    hw = 0.5 * (b - a)
    vals = np.exp(lv - shift[None, None, :])
    k15 = hw[:, None] * np.einsum("j,mjk->mk", _WGK, vals)
    g7 = hw[:, None] * np.einsum("j,mjk->mk", _WG, vals[:, _GAUSS_IDX, :])
    return k15, np.abs(k15 - g7)


def _adaptive(h, cfg):
    """Core adaptive integrator. Returns (log_integral[K], intervals, node logs, shift, tails)."""
    grid, vals, peak, tails = _scan_support(h, cfg)
    k_dim = vals.shape[1]
    live = np.isfinite(peak)
    if not live.any():
        return np.full(k_dim, -np.inf), None

    shift = np.where(live, peak, 0.0)
    thresh = cfg.absolute_log_tolerance
    sig = np.any(vals[:, live] > peak[live] + thresh, axis=1)
    idx = np.nonzero(sig)[0]
    i0 = max(idx[0] - 1, 0)
    i1 = min(idx[-1] + 1, grid.size - 1)
    if cfg.transform == RATIONAL_SUBSTITUTION:
        left = [0.0] if i0 == 0 else []
        right = [1.0] if i1 == grid.size - 1 else []
        edges = np.concatenate([left, grid[i0:i1 + 1], right])
    else:
        edges = grid[i0:i1 + 1]
        if tails[0] is not None:
            tails = (tails[0], tails[1]) if i0 == 0 else (None, tails[1])
        if tails[1] is not None and i1 != grid.size - 1:
            tails = (tails[0], None)

    a = edges[:-1].copy()
    b = edges[1:].copy()
    lv = _gk_eval(h, a, b)
    est, err = _gk_sums(lv, shift, a, b)

    tail_mass = np.zeros(k_dim)
    for side in tails:
        if side is not None:
            v_end, rate = side
            with np.errstate(over="ignore", invalid="ignore"):
                m = np.where(live, np.exp(v_end - shift) / rate, 0.0)
            tail_mass += np.nan_to_num(m, nan=0.0, posinf=np.inf)

    abs_floor = np.exp(thresh)
    rtol = cfg.relative_tolerance
    splits = 0
    while True:
        total = est.sum(axis=0) + tail_mass
        tol = np.maximum(rtol * np.abs(total), abs_floor)
        tot_err = err.sum(axis=0)
        if np.all(tot_err[live] <= tol[live]):
            break
        share = tol / a.size
        bad = np.any((err > share[None, :]) & live[None, :], axis=1)
        nbad = int(bad.sum())
        if nbad == 0:
            bad = np.argmax((err / tol[None, :]).max(axis=1)) == np.arange(a.size)
            nbad = 1
        if splits + nbad > cfg.max_subdivisions:
            partial = shift + np.log(np.maximum(total, 1e-300))
            raise NumericError(
                f"quadrature did not converge within {cfg.max_subdivisions} subdivisions",
                partial=partial if k_dim > 1 else float(partial[0]),
            )
        splits += nbad
        mid = 0.5 * (a[bad] + b[bad])
        na = np.concatenate([a[~bad], a[bad], mid])
        nb = np.concatenate([b[~bad], mid, b[bad]])
        new_lv = _gk_eval(h, np.concatenate([a[bad], mid]), np.concatenate([mid, b[bad]]))
        new_est, new_err = _gk_sums(new_lv, shift, np.concatenate([a[bad], mid]),
                                    np.concatenate([mid, b[bad]]))
        lv = np.concatenate([lv[~bad], new_lv])
        est = np.concatenate([est[~bad], new_est])
        err = np.concatenate([err[~bad], new_err])
        order = np.argsort(na, kind="stable")
        a, b = na[order], nb[order]
        lv, est, err = lv[order], est[order], err[order]

    total = est.sum(axis=0) + tail_mass
    with np.errstate(divide="ignore"):
        out = np.where(live & (total > 0), shift + np.log(total), -np.inf)
    state = {"a": a, "b": b, "lv": lv, "est": est, "tails": tails, "shift": shift}
    return out, state


def integrate_log_density(log_f: Callable, cfg: QuadratureConfig | None = None) -> float:
    """Return ``log`` of the integral of ``exp(log_f(u))`` over ``u in (0, inf)``.

    ``log_f`` should accept a 1-d numpy array of positive ``u`` and return
    an array of the same length (a scalar-only callable also works, slowly).

    Raises
    ------
    NumericError
        If the integrand is NaN, does not decay, or the adaptive rule does
        not converge within ``cfg.max_subdivisions`` bisections.
    """
    cfg = cfg or DEFAULT_QUADRATURE
    h, _ = _mapped_integrand(_as_vectorized(log_f, vector=False), cfg.transform)
    out, _ = _adaptive(h, cfg)
    return float(out[0])


def integrate_log_density_vec(log_f: Callable, cfg: QuadratureConfig | None = None) -> np.ndarray:
    """Vector-valued version of :func:`integrate_log_density`.

    ``log_f(u)`` returns an ``(len(u), K)`` array; the K integrals share nodes
    and every component must meet the tolerance.
    """
    cfg = cfg or DEFAULT_QUADRATURE
    h, _ = _mapped_integrand(_as_vectorized(log_f, vector=True), cfg.transform)
    out, _ = _adaptive(h, cfg)
    return out


class InverseCDFSampler:
    """Tabulated inverse-CDF sampler for an unnormalized density on ``(0, inf)``.

    The density is represented on the mapped axis as a piecewise
    exponential (log-linear) function through the adaptive quadrature nodes,
    so the table is monotone and can be inverted cell by cell in closed form.
    Instances are immutable.
    """

    __slots__ = ("_knots", "_logh", "_cum", "_total", "_slopes", "_transform",
                 "_left_tail", "_right_tail", "log_normalizer")

    def __init__(self, knots, logh, transform, left_tail, right_tail, log_shift):
        dt = np.diff(knots)
        h0, h1 = logh[:-1], logh[1:]
        slopes = (h1 - h0) / dt
        e0 = np.exp(h0)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            mass = np.where(np.abs(slopes * dt) < 1e-10, e0 * dt * (1 + 0.5 * slopes * dt),
                            (np.exp(h1) - e0) / slopes)
        mass = np.where(np.isfinite(h0) | np.isfinite(h1), mass, 0.0)
        mass = np.nan_to_num(mass, nan=0.0)
        lt = 0.0 if left_tail is None else float(np.exp(logh[0]) / left_tail)
        rt = 0.0 if right_tail is None else float(np.exp(logh[-1]) / right_tail)
        cum = np.concatenate([[lt], lt + np.cumsum(mass)])
        total = cum[-1] + rt
        if not (np.isfinite(total) and total > 0):
            raise NumericError("density is not integrable or is identically zero")
        self._knots = knots
        self._logh = logh
        self._cum = cum
        self._total = total
        self._slopes = slopes
        self._transform = transform
        self._left_tail = left_tail
        self._right_tail = right_tail
        self.log_normalizer = float(log_shift + np.log(total))
        for arr in (self._knots, self._logh, self._cum, self._slopes):
            arr.setflags(write=False)

    def __setattr__(self, name, value):
        if hasattr(self, "log_normalizer") and name != "log_normalizer":
            raise AttributeError("InverseCDFSampler is immutable")
        object.__setattr__(self, name, value)

    def _to_u(self, t):
        if self._transform == LOG_SUBSTITUTION:
            return np.exp(t)
        return t / (1.0 - t)

    def cdf(self, u):
        """Tabulated CDF at ``u`` (vectorized)."""
        u = np.asarray(u, dtype=float)
        if self._transform == LOG_SUBSTITUTION:
            with np.errstate(divide="ignore"):
                t = np.log(u)
        else:
            t = u / (1.0 + u)
        k, h, c = self._knots, self._logh, self._cum
        j = np.clip(np.searchsorted(k, t, side="right") - 1, 0, k.size - 2)
        s = self._slopes[j]
        x = np.clip(t, k[0], k[-1]) - k[j]
        e0 = np.exp(h[j])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            part = np.where(np.abs(s * x) < 1e-10, e0 * x, e0 * np.expm1(s * x) / s)
        val = c[j] + np.nan_to_num(part)
        below = t < k[0]
        if below.any():
            if self._left_tail is None:
                val = np.where(below, 0.0, val)
            else:
                val = np.where(below, np.exp(h[0] + self._left_tail * (t - k[0])) / self._left_tail, val)
        above = t > k[-1]
        if above.any():
            if self._right_tail is None:
                val = np.where(above, self._total, val)
            else:
                rest = np.exp(h[-1] - self._right_tail * (t - k[-1])) / self._right_tail
                val = np.where(above, self._total - rest, val)
        out = np.clip(val / self._total, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def draw(self, uniform):
        """Map uniform(s) in ``[0, 1)`` to variate(s) of the tabulated law."""
        v = np.asarray(uniform, dtype=float)
        target = v * self._total
        k, h, c = self._knots, self._logh, self._cum
        t = np.empty_like(target)
        left = target < c[0]
        right = target > c[-1]
        mid = ~(left | right)
        if mid.any():
            tm = target[mid]
            j = np.clip(np.searchsorted(c, tm, side="right") - 1, 0, k.size - 2)
            r = tm - c[j]
            s = self._slopes[j]
            e0 = np.exp(h[j])
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                step = np.where(np.abs(s) * (k[j + 1] - k[j]) < 1e-10, r / e0,
                                np.log1p(r * s / e0) / s)
            step = np.nan_to_num(step, nan=0.0)
            t[mid] = np.clip(k[j] + step, k[j], k[j + 1])
        if left.any():
            lam = self._left_tail
            t[left] = k[0] + np.log(target[left] * lam / np.exp(h[0])) / lam
        if right.any():
            lam = self._right_tail
            rest = self._total - target[right]
            t[right] = k[-1] - np.log(np.maximum(rest, 1e-300) * lam / np.exp(h[-1])) / lam
        out = self._to_u(t)
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, size=None):
        """Draw using ``rng.random``."""
        return self.draw(rng.random(size))


def numeric_inverse_cdf_sampler(log_density_unnormalized: Callable,
                                cfg: QuadratureConfig | None = None) -> InverseCDFSampler:
    """Build an :class:`InverseCDFSampler` for an unnormalized log-density on ``(0, inf)``.

    Starts from the converged adaptive quadrature partition and places a
    uniform sub-grid in every interval, dense enough that no cell carries
    more than about 1e-4 of the mass.
    """
    cfg = cfg or DEFAULT_QUADRATURE
    call = _as_vectorized(log_density_unnormalized, vector=False)
    h, _ = _mapped_integrand(call, cfg.transform)
    out, state = _adaptive(h, cfg)
    if state is None or not np.isfinite(out[0]):
        raise NumericError("density is identically zero")
    a, b, shift = state["a"], state["b"], state["shift"][0]
    frac = state["est"][:, 0] / state["est"][:, 0].sum()
    counts = np.clip(np.ceil(frac * 1e4), 16, 4000).astype(int)
    knots = np.unique(np.concatenate(
        [np.linspace(lo, hi, c + 1) for lo, hi, c in zip(a, b, counts)]))
    logh = h(knots)[:, 0] - shift
    tails = state["tails"]
    left = None if tails[0] is None else float(tails[0][1][0])
    right = None if tails[1] is None else float(tails[1][1][0])
    return InverseCDFSampler(knots, logh, cfg.transform, left, right, shift)
