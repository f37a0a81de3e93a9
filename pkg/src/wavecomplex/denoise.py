"""Denoising by state-conditional shrinkage of wavelet coefficients.

With known noise variance ``s2``, a coefficient in state ``m`` at scale ``j``
is shrunk towards the state mean by the gain ``(var - s2)_+ / var``; the
estimates are averaged over the posterior state probabilities.  States whose
fitted variance does not exceed the noise variance collapse to their mean.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dwt import WaveletFilterBank, WaveletTree, filter_bank, forward, inverse
from .hmt import FitConfig, FitResult, HmtParams, Posteriors, fit

ESTIMATOR = "posterior-mean"


@dataclass(frozen=True)
class DenoiseConfig:
    noise_variance: float = 1.0
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if not self.noise_variance >= 0:
            raise ValueError("noise variance must be non-negative")


def shrink_gains(theta: HmtParams, noise_variance: float) -> np.ndarray:
    """Per-scale, per-state gains in [0, 1], shape (J, M)."""
    return np.maximum(theta.variances - noise_variance, 0.0) / theta.variances


def shrink_tree(
    tree: WaveletTree, theta: HmtParams, post: Posteriors, noise_variance: float
) -> WaveletTree:
    if tree.J != theta.J or len(post.gamma) != tree.J:
        raise ValueError("model/posteriors do not match the tree")
    if noise_variance < 0:
        raise ValueError("noise variance must be non-negative")
    gains = shrink_gains(theta, noise_variance)

    def shrink(j, d):
        g = post.gamma[j]
        if g.shape != (d.size, theta.M):
            raise ValueError(f"posterior shape mismatch at scale {j}")
        mu = theta.means[j]
        return (g * (mu + gains[j] * (d[:, None] - mu))).sum(axis=1)

    return tree.map_details(shrink)


@dataclass(frozen=True, eq=False)
class DenoiseResult:
    signal: np.ndarray
    fit: FitResult
    wavelet: str


def denoise(signal, bank: WaveletFilterBank | str, cfg: DenoiseConfig | None = None) -> DenoiseResult:
    """Forward transform, fit, shrink, inverse transform."""
    cfg = cfg or DenoiseConfig()
    if isinstance(bank, str):
        bank = filter_bank(bank)
    tree = forward(signal, bank)
    result = fit(tree, cfg.fit)
    shrunk = shrink_tree(tree, result.params, result.posteriors, cfg.noise_variance)
    return DenoiseResult(inverse(shrunk, bank), result, bank.name)


def denoise_signal(signal, bank: WaveletFilterBank | str, cfg: DenoiseConfig | None = None) -> np.ndarray:
    return denoise(signal, bank, cfg).signal


def residual_energy_density(denoised, clean) -> float:
    """Mean squared deviation from the clean reference."""
    a = np.asarray(denoised, dtype=float)
    b = np.asarray(clean, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))
