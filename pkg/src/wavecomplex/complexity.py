"""Statistical complexity of a fitted hidden Markov tree.

All reported quantities are in bits.  Global complexity is the joint entropy
H(S) of the hidden states, entropy rate is the conditional differential
entropy H(D|S) of the coefficients given their states, and local complexity
is the entropy of a single node's state (identical across a scale because
parameters are tied).
"""
from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import xlogy

from .hmt import HmtParams

LOG2E = 1.0 / np.log(2.0)
BRUTE_FORCE_LIMIT = 2 ** 20


def _entropy_bits(p: np.ndarray, axis=-1) -> np.ndarray:
    return -xlogy(p, p).sum(axis=axis) * LOG2E


def scale_marginals(theta: HmtParams) -> np.ndarray:
    """Prior state distribution of one node per scale, shape (J, M)."""
    out = np.empty((theta.J, theta.M))
    out[0] = theta.root_pmf
    for j in range(1, theta.J):
        out[j] = out[j - 1] @ theta.trans[j - 1]
    return out


def global_complexity(theta: HmtParams) -> float:
    """H(S) by the nested parameter recursion.

    Working up from the finest scale, ``inner[n]`` is the entropy (with the
    sign carried along) contributed by the subtree below one node in state
    ``n``; every node has two children, hence the factor 2.
    """
    inner = np.zeros(theta.M)
    for j in range(theta.J - 1, 0, -1):
        eps = theta.trans[j - 1]
        inner = 2.0 * (xlogy(eps, eps) + eps * inner[None, :]).sum(axis=1)
    p0 = theta.root_pmf
    nats = -np.sum(xlogy(p0, p0) + p0 * inner)
    return float(nats * LOG2E)


def global_complexity_chain(theta: HmtParams) -> float:
    """H(S) via the chain rule: root entropy plus per-node conditional entropies."""
    marg = scale_marginals(theta)
    total = _entropy_bits(theta.root_pmf)
    for j in range(1, theta.J):
        total += 2 ** j * float(marg[j - 1] @ _entropy_bits(theta.trans[j - 1]))
    return float(total)


def local_complexity(theta: HmtParams) -> np.ndarray:
    return _entropy_bits(scale_marginals(theta))


def entropy_rate(theta: HmtParams) -> float:
    """H(D|S) in bits; negative whenever the state variances are small."""
    marg = scale_marginals(theta)
    h = 0.5 * np.log2(2.0 * np.pi * np.e * theta.variances)
    counts = 2.0 ** np.arange(theta.J)
    return float(counts @ (marg * h).sum(axis=1))


def monotone_run(values) -> int:
    """Length of the longest strictly increasing contiguous run."""
    values = list(values)
    if not values:
        raise ValueError("need at least one value")
    best = run = 1
    for a, b in zip(values, values[1:]):
        run = run + 1 if b > a else 1
        best = max(best, run)
    return best


def brute_force_tree_entropy(theta: HmtParams) -> float:
    """Joint state entropy by enumerating every configuration (small trees only)."""
    n_nodes = 2 ** theta.J - 1
    if theta.M ** n_nodes > BRUTE_FORCE_LIMIT:
        raise ValueError(f"{theta.M}**{n_nodes} configurations exceeds the enumeration limit")
    states = np.array(list(itertools.product(range(theta.M), repeat=n_nodes)), dtype=int)
    p = theta.root_pmf[states[:, 0]]
    for i in range(2, n_nodes + 1):
        j = i.bit_length() - 1
        p = p * theta.trans[j - 1][states[:, i // 2 - 1], states[:, i - 1]]
    return float(-xlogy(p, p).sum() * LOG2E)


@dataclass(frozen=True)
class ComplexityReport:
    J: int
    M: int
    global_C: float
    global_C_norm: float
    local_C: list
    entropy_rate: float
    entropy_rate_norm: float
    monotone_run: int
    wavelet: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def csv_header(self) -> list[str]:
        return [
            "wavelet", "J", "M", "global_C", "global_C_norm", "entropy_rate_norm",
            "monotone_run", *(f"local_C_{j}" for j in range(self.J)),
        ]

    def csv_row(self) -> list:
        return [
            self.wavelet, self.J, self.M, repr(self.global_C), repr(self.global_C_norm),
            repr(self.entropy_rate_norm), self.monotone_run, *(repr(c) for c in self.local_C),
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.csv_header())
        writer.writerow(self.csv_row())
        return buf.getvalue()


def complexity_report(theta: HmtParams, wavelet: str = "") -> ComplexityReport:
    nodes = 2 ** theta.J - 1
    c = global_complexity(theta)
    h = entropy_rate(theta)
    local = local_complexity(theta)
    return ComplexityReport(
        J=theta.J,
        M=theta.M,
        global_C=c,
        global_C_norm=float(c / (nodes * np.log2(theta.M))) if theta.M > 1 else 0.0,
        local_C=[float(v) for v in local],
        entropy_rate=h,
        entropy_rate_norm=float(h / nodes),
        monotone_run=monotone_run(local),
        wavelet=wavelet,
    )
