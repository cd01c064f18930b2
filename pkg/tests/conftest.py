import numpy as np
import pytest
from scipy import stats

ACCEPTANCE_LINES = []


def chi2_pvalue(samples, probs, min_expected=5.0):
    """Goodness of fit of integer samples to a probability vector.

    Bins with small expectation are merged into the tail bin; mass missing
    from ``probs`` goes to the tail too.
    """
    samples = np.asarray(samples)
    n = samples.size
    probs = np.asarray(probs, dtype=float)
    observed = np.bincount(samples, minlength=probs.size).astype(float)
    expected = np.zeros(max(observed.size, probs.size))
    expected[: probs.size] = probs * n
    observed = np.pad(observed, (0, expected.size - observed.size))
    expected[-1] += max(n - expected.sum(), 0.0)

    obs_bins, exp_bins = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_bins.append(acc_o)
            exp_bins.append(acc_e)
            acc_o = acc_e = 0.0
    obs_bins[-1] += acc_o
    exp_bins[-1] += acc_e
    exp_bins = np.array(exp_bins)
    exp_bins *= n / exp_bins.sum()
    return stats.chisquare(obs_bins, exp_bins).pvalue


def batch_stderr(values, stat, batches=100):
    """Mean and standard error of ``stat`` evaluated on equal batches of ``values``."""
    parts = np.array_split(np.asarray(values), batches)
    est = np.array([stat(p) for p in parts])
    return est.mean(), est.std(ddof=1) / np.sqrt(batches)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
