import itertools

import numpy as np
import pytest
from scipy.stats import norm

from wavecomplex.dwt import WaveletTree
from wavecomplex.hmt import HmtParams

_CRITERIA = {}


def random_theta(rng, J, M=2, zero_rows=False):
    root = rng.dirichlet(np.ones(M))
    trans = rng.dirichlet(np.ones(M), size=(J - 1, M))
    if zero_rows:
        trans[trans < 0.15] = 0.0
        trans /= trans.sum(axis=2, keepdims=True)
    means = rng.normal(0.0, 1.0, (J, M))
    variances = rng.uniform(0.1, 4.0, (J, M))
    return HmtParams(root, trans, means, variances)


def random_tree(rng, J, scale=2.0):
    return WaveletTree(J, float(rng.normal()), [rng.normal(0.0, scale, 2 ** j) for j in range(J)])


def enumerate_posteriors(tree, theta):
    """Brute-force oracle: sum the joint density over every state configuration.

    Returns (gamma, xi, loglik) indexed by heap node number (index 0 unused).
    """
    d = tree.flat()
    n = 2 ** tree.J - 1
    M = theta.M
    gamma = np.zeros((n + 1, M))
    xi = np.zeros((n + 1, M, M))
    dens = np.array(
        [[norm.pdf(d[i], theta.means[i.bit_length() - 1, m],
                   np.sqrt(theta.variances[i.bit_length() - 1, m])) for m in range(M)]
         for i in range(1, n + 1)]
    )
    dens = np.vstack([np.zeros(M), dens])
    total = 0.0
    for config in itertools.product(range(M), repeat=n):
        s = (None,) + config
        p = theta.root_pmf[s[1]]
        for i in range(1, n + 1):
            j = i.bit_length() - 1
            if i > 1:
                p *= theta.trans[j - 1][s[i // 2], s[i]]
            p *= dens[i, s[i]]
        total += p
        for i in range(1, n + 1):
            gamma[i, s[i]] += p
            if i > 1:
                xi[i, s[i // 2], s[i]] += p
    return gamma / total, xi / total, float(np.log(total))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion():
    """Record an acceptance criterion outcome for the end-of-run summary."""

    def record(key, passed, detail=""):
        _CRITERIA[key] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: int(k[1:])):
        passed, detail = _CRITERIA[key]
        terminalreporter.write_line(f"{key:>4} {'PASS' if passed else 'FAIL'}  {detail}")
