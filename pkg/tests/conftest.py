import numpy as np
import pytest

from tiltcrm import expand_preset


def binned_l1(draws, cdf, edges):
    """Sum over bins of |empirical mass - target mass|; bins split (0, inf) at ``edges``."""
    draws = np.asarray(draws)
    full = np.concatenate([[0.0], np.asarray(edges, dtype=float), [np.inf]])
    target = np.diff(np.concatenate([[0.0], cdf(np.asarray(edges, dtype=float)), [1.0]]))
    counts = np.histogram(draws, bins=full)[0] / draws.size
    return float(np.abs(counts - target).sum())


def equiprobable_edges(sampler, bins=5):
    """Interior bin edges at the ``1/bins`` quantiles of a tabulated sampler."""
    return sampler.draw(np.arange(1, bins) / bins)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def presets():
    return {
        "dirichlet": expand_preset("dirichlet", theta=1.0),
        "pd": expand_preset("poisson_dirichlet", alpha=0.5, q=1.0),
        "ngg": expand_preset("normalized_generalized_gamma", alpha=0.5, theta=1.0, b=1.0),
        "gd": expand_preset("generalized_dirichlet", theta=2.0, c=2),
    }


_ACCEPTANCE = pytest.StashKey()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for the acceptance summary and return the flag."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f": {detail}" if detail else "")
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
