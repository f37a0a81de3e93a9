"""Hidden Markov tree over wavelet detail coefficients.

Every detail coefficient carries a hidden state (``0`` = small "yin",
``M - 1`` = large "yang" after fitting); states form a Markov tree that
follows the parent/child links of the coefficient tree, and each
coefficient is Gaussian given its state.  All parameters are tied within a
scale, so a model is described by

* ``root_pmf[m]``            state distribution of the single scale-0 node,
* ``trans[j - 1][m, n]``     P(child at scale j in state n | parent in state m),
* ``means[j, m]``, ``variances[j, m]``  emission parameters per scale.

Posteriors come from an upward/downward recursion in which every message is
normalized at its node; the log-likelihood is the sum of the log normalizers.
Likelihoods are in nats.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dwt import WaveletTree
from .errors import DegenerateScaleError, NumericalError

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class FitConfig:
    M: int = 2
    max_iter: int = 200
    rel_tol: float = 1e-6
    restarts: int = 1
    variance_floor: float = 1e-6        # relative to the per-scale sample variance
    variance_floor_abs: float = 1e-12
    zero_mean: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not (self.variance_floor >= 0 and self.variance_floor_abs > 0):
            raise ValueError("variance floors must be non-negative (absolute floor > 0)")


@dataclass(frozen=True, eq=False)
class HmtParams:
    root_pmf: np.ndarray        # (M,)
    trans: np.ndarray           # (J - 1, M, M); trans[j - 1] feeds scale j
    means: np.ndarray           # (J, M)
    variances: np.ndarray       # (J, M)

    def __post_init__(self):
        for name in ("root_pmf", "trans", "means", "variances"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        J, M = self.means.shape
        if self.root_pmf.shape != (M,) or self.variances.shape != (J, M):
            raise ValueError("inconsistent parameter shapes")
        if self.trans.shape != (J - 1, M, M):
            if J == 1 and self.trans.size == 0:
                object.__setattr__(self, "trans", np.zeros((0, M, M)))
            else:
                raise ValueError(f"trans must have shape {(J - 1, M, M)}, got {self.trans.shape}")

    @property
    def J(self) -> int:
        return self.means.shape[0]

    @property
    def M(self) -> int:
        return self.root_pmf.shape[0]

    def transition(self, j: int) -> np.ndarray:
        """Matrix of P(state at scale j | parent state), for ``j >= 1``."""
        if not 1 <= j < self.J:
            raise IndexError(f"no transition into scale {j}")
        return self.trans[j - 1]

    def validate(self, atol: float = 1e-9) -> None:
        probs = [self.root_pmf, *self.trans]
        for p in probs:
            if np.any(p < -atol) or np.any(p > 1 + atol):
                raise ValueError("probabilities must lie in [0, 1]")
        if abs(self.root_pmf.sum() - 1) > atol:
            raise ValueError("root_pmf must sum to 1")
        if self.trans.size and np.max(np.abs(self.trans.sum(axis=2) - 1)) > atol:
            raise ValueError("transition rows must sum to 1")
        if not np.all(self.variances > 0) or not np.all(np.isfinite(self.means)):
            raise ValueError("variances must be positive and means finite")

    def permuted(self, perm) -> "HmtParams":
        """Relabel states: new state ``a`` is old state ``perm[a]``."""
        perm = np.asarray(perm)
        return HmtParams(
            root_pmf=self.root_pmf[perm],
            trans=self.trans[:, perm][:, :, perm],
            means=self.means[:, perm],
            variances=self.variances[:, perm],
        )

    def to_dict(self) -> dict:
        return {
            "J": self.J,
            "M": self.M,
            "root_pmf": self.root_pmf.tolist(),
            "trans": self.trans.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HmtParams":
        M = int(data["M"])
        params = cls(
            root_pmf=data["root_pmf"],
            trans=np.asarray(data["trans"], dtype=float).reshape(-1, M, M),
            means=data["means"],
            variances=data["variances"],
        )
        if params.J != int(data["J"]):
            raise ValueError("J does not match the stored arrays")
        return params


@dataclass(frozen=True, eq=False)
class Posteriors:
    """Per-node state posteriors, arranged per scale like the tree.

    ``gamma[j][k, m]``      P(S = m | d) for node ``(j, k)``;
    ``xi[j][k, m, n]``      P(parent state m, own state n | d) for ``j >= 1``
                            (``xi[0]`` is ``None``).
    """

    gamma: list
    xi: list
    log_likelihood: float

    def node_gamma(self, i: int) -> np.ndarray:
        j = i.bit_length() - 1
        return self.gamma[j][i - 2 ** j]

    def node_xi(self, i: int) -> np.ndarray:
        j = i.bit_length() - 1
        if j == 0:
            raise ValueError("the root node has no parent")
        return self.xi[j][i - 2 ** j]

    def permuted(self, perm) -> "Posteriors":
        perm = np.asarray(perm)
        return Posteriors(
            gamma=[g[:, perm] for g in self.gamma],
            xi=[None] + [x[:, perm][:, :, perm] for x in self.xi[1:]],
            log_likelihood=self.log_likelihood,
        )


def _check_shapes(tree: WaveletTree, theta: HmtParams) -> None:
    if tree.J != theta.J:
        raise ValueError(f"tree has {tree.J} scales but model has {theta.J}")


def log_emissions(tree: WaveletTree, theta: HmtParams) -> list[np.ndarray]:
    """Gaussian log-densities ``log g(d_i; mu_j^m, var_j^m)`` per scale, shape (2**j, M)."""
    out = []
    for j, d in enumerate(tree.details):
        mu, var = theta.means[j], theta.variances[j]
        out.append(-0.5 * (_LOG_2PI + np.log(var)) - 0.5 * (d[:, None] - mu) ** 2 / var)
    return out


def e_step(tree: WaveletTree, theta: HmtParams) -> Posteriors:
    """Exact posteriors by an upward (likelihood) and downward (smoothing) pass.

    Upward messages ``beta[j][k]`` are proportional to f(subtree | state) and
    normalized to sum to one; the downward pass propagates marginals through
    the conditionals P(child state | parent state, child subtree).
    """
    _check_shapes(tree, theta)
    J = tree.J
    le = log_emissions(tree, theta)
    beta = [None] * J
    up = [None] * J                 # up[j][k, m] = sum_n trans_j[m, n] beta_j[k, n]
    loglik = 0.0
    with np.errstate(divide="ignore"):
        for j in range(J - 1, -1, -1):
            logb = le[j].copy()
            if j < J - 1:
                logb += np.log(up[j + 1]).reshape(2 ** j, 2, -1).sum(axis=1)
            peak = logb.max(axis=1, keepdims=True)
            if not np.all(np.isfinite(peak)):
                raise NumericalError(f"vanishing likelihood normalizer at scale {j}")
            b = np.exp(logb - peak)
            norm = b.sum(axis=1, keepdims=True)
            beta[j] = b / norm
            loglik += float(np.sum(peak + np.log(norm)))
            if j > 0:
                up[j] = beta[j] @ theta.trans[j - 1].T

    root = theta.root_pmf * beta[0][0]
    evidence = root.sum()
    if not evidence > 0:
        raise NumericalError("vanishing likelihood at the root")
    loglik += float(np.log(evidence))

    gamma = [None] * J
    xi = [None] * J
    gamma[0] = (root / evidence)[None, :]
    for j in range(1, J):
        eps = theta.trans[j - 1]
        num = eps[None, :, :] * beta[j][:, None, :]
        den = up[j][:, :, None]
        cond = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        xi[j] = np.repeat(gamma[j - 1], 2, axis=0)[:, :, None] * cond
        gamma[j] = xi[j].sum(axis=1)

    if not np.isfinite(loglik):
        raise NumericalError("non-finite log-likelihood")
    return Posteriors(gamma=gamma, xi=xi, log_likelihood=loglik)


def variance_floors(tree: WaveletTree, cfg: FitConfig) -> np.ndarray:
    return np.array(
        [max(cfg.variance_floor * float(np.var(d)), cfg.variance_floor_abs) for d in tree.details]
    )


def m_step(tree: WaveletTree, post: Posteriors, cfg: FitConfig) -> HmtParams:
    """Tied maximum-likelihood update from posteriors."""
    J = tree.J
    M = post.gamma[0].shape[1]
    if len(post.gamma) != J or any(g.shape != (2 ** j, M) for j, g in enumerate(post.gamma)):
        raise ValueError("posteriors do not match the tree")
    floors = variance_floors(tree, cfg)

    root = post.gamma[0][0].copy()
    root /= root.sum()

    trans = np.empty((J - 1, M, M))
    for j in range(1, J):
        counts = post.xi[j].sum(axis=0)
        rows = counts.sum(axis=1, keepdims=True)
        # rows with no parent mass do not affect the likelihood
        trans[j - 1] = np.divide(counts, rows, out=np.full_like(counts, 1.0 / M), where=rows > 0)

    means = np.zeros((J, M))
    variances = np.empty((J, M))
    for j, d in enumerate(tree.details):
        w = post.gamma[j]
        weight = w.sum(axis=0)
        occupied = weight > 0
        if not cfg.zero_mean:
            mu = np.divide(w.T @ d, weight, out=np.full(M, d.mean()), where=occupied)
            means[j] = mu
        resid2 = (d[:, None] - means[j]) ** 2
        fallback = np.mean(resid2, axis=0)
        var = np.divide((w * resid2).sum(axis=0), weight, out=fallback, where=occupied)
        variances[j] = np.maximum(var, floors[j])
    return HmtParams(root_pmf=root, trans=trans, means=means, variances=variances)


def _threshold_labels(mag: np.ndarray, bounds: np.ndarray, resolvable: bool = True) -> np.ndarray:
    """State labels from magnitude percentiles (0 = smallest magnitudes).

    Raises DegenerateScaleError when the magnitudes cannot be split: either
    all identical, or spread below what the variance floor can resolve.
    """
    if mag.size > 1 and (np.ptp(mag) == 0 or not resolvable):
        raise DegenerateScaleError("coefficients at this scale are indistinguishable")
    cuts = np.percentile(mag, bounds)
    return np.searchsorted(cuts, mag, side="left")


def init_params(tree: WaveletTree, cfg: FitConfig, restart: int = 0) -> HmtParams:
    """Percentile-labelling initialization.

    Coefficients at each scale are labelled yang when their magnitude exceeds
    the scale's 75th percentile (restarts draw the percentile from [60, 90]),
    emission parameters come from the labelled groups, and state
    probabilities from label counts with 0.5 pseudo-counts.  Scales the
    variance floor cannot split (constant, or variance at or below the
    absolute floor) start entirely in state 0.
    """
    J, M = tree.J, cfg.M
    if J < 2:
        raise ValueError("need at least two scales")
    rng = np.random.default_rng([cfg.seed, restart])
    q = 75.0 if restart == 0 else float(rng.uniform(60.0, 90.0))
    bounds = np.linspace(q, 100.0, M)[:-1]
    floors = variance_floors(tree, cfg)

    labels = [None] * J
    for j in range(J - 1, 0, -1):
        d = tree.details[j]
        try:
            labels[j] = _threshold_labels(
                np.abs(d), bounds, resolvable=np.var(d) > cfg.variance_floor_abs
            )
        except DegenerateScaleError:
            # A +-ulp jitter leaves the percentile cut on the upper copy, so
            # nothing lands above it: the whole scale starts in state 0.
            log.debug("scale %d is unresolvable; labelling it all-yin", j)
            labels[j] = np.zeros(d.size, dtype=int)
    # a lone root is judged against its children's cut points
    cuts1 = np.percentile(np.abs(tree.details[1]), bounds)
    labels[0] = np.searchsorted(cuts1, np.abs(tree.details[0]), side="left")

    means = np.zeros((J, M))
    variances = np.empty((J, M))
    for j, d in enumerate(tree.details):
        for m in range(M):
            group = d[labels[j] == m]
            if group.size == 0:
                group = d
            if not cfg.zero_mean:
                means[j, m] = group.mean()
            variances[j, m] = max(float(np.mean((group - means[j, m]) ** 2)), floors[j])

    root = np.full(M, 0.5)
    root[labels[0][0]] += 1.0
    root /= root.sum()
    trans = np.empty((J - 1, M, M))
    for j in range(1, J):
        counts = np.full((M, M), 0.5)
        np.add.at(counts, (np.repeat(labels[j - 1], 2), labels[j]), 1.0)
        trans[j - 1] = counts / counts.sum(axis=1, keepdims=True)
    return HmtParams(root_pmf=root, trans=trans, means=means, variances=variances)


@dataclass(frozen=True, eq=False)
class FitResult:
    params: HmtParams
    posteriors: Posteriors
    trace: list = field(default_factory=list)
    config: FitConfig = field(default_factory=FitConfig)
    restart: int = 0
    converged: bool = False

    @property
    def log_likelihood(self) -> float:
        return self.posteriors.log_likelihood

    def to_dict(self) -> dict:
        out = self.params.to_dict()
        out["log_likelihood"] = self.log_likelihood
        out["config"] = asdict(self.config)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def load_model(text: str) -> tuple[HmtParams, float, FitConfig]:
    """Parse a model written by :meth:`FitResult.to_json`."""
    data = json.loads(text)
    cfg = FitConfig(**data.get("config", {}))
    return HmtParams.from_dict(data), float(data["log_likelihood"]), cfg


def _run_em(tree, theta, cfg):
    post = e_step(tree, theta)
    trace = [post.log_likelihood]
    converged = False
    for _ in range(cfg.max_iter):
        theta = m_step(tree, post, cfg)
        post = e_step(tree, theta)
        prev, cur = trace[-1], post.log_likelihood
        trace.append(cur)
        if abs(cur - prev) < cfg.rel_tol * max(abs(prev), 1e-300):
            converged = True
            break
    return theta, post, trace, converged


def canonical_order(theta: HmtParams) -> np.ndarray:
    """State permutation sorting the finest-scale variances ascending."""
    return np.argsort(theta.variances[-1], kind="stable")


def fit(tree: WaveletTree, cfg: FitConfig | None = None) -> FitResult:
    """Fit by EM from ``cfg.restarts`` initializations; keep the most likely.

    States are relabelled afterwards so the last state has the largest
    finest-scale variance.
    """
    cfg = cfg or FitConfig()
    best = None
    for restart in range(cfg.restarts):
        theta0 = init_params(tree, cfg, restart)
        theta, post, trace, converged = _run_em(tree, theta0, cfg)
        log.debug("restart %d: loglik %.6f after %d iterations", restart, trace[-1], len(trace) - 1)
        if best is None or trace[-1] > best.trace[-1]:
            best = FitResult(theta, post, trace, cfg, restart, converged)
    perm = canonical_order(best.params)
    return replace(
        best, params=best.params.permuted(perm), posteriors=best.posteriors.permuted(perm)
    )


def sample_tree(theta: HmtParams, rng: np.random.Generator, u0: float = 0.0):
    """Draw hidden states and coefficients from the model.

    Returns ``(tree, states)`` with ``states[j]`` the integer states of scale j.
    """
    J, M = theta.J, theta.M
    states = [np.array([rng.choice(M, p=theta.root_pmf)])]
    for j in range(1, J):
        parents = np.repeat(states[-1], 2)
        cdf = np.cumsum(theta.trans[j - 1][parents], axis=1)
        u = rng.random(parents.size)[:, None]
        states.append(np.minimum((u > cdf).sum(axis=1), M - 1))
    details = [
        theta.means[j, s] + np.sqrt(theta.variances[j, s]) * rng.standard_normal(s.size)
        for j, s in enumerate(states)
    ]
    return WaveletTree(J, u0, details), states
