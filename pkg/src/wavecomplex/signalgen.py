"""Seeded test signals: logistic-map orbits, Lorenz trajectories, white noise."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError

DIVERGENCE_BOUND = 1e6


def logistic_series(r: float, x0: float = 0.3, n: int = 4096, burn_in: int = 1000) -> np.ndarray:
    """Iterate ``x -> r x (1 - x)``, drop ``burn_in`` iterates, keep ``n``.

    The first kept sample is ``x0`` itself when ``burn_in == 0``.
    """
    if not 0.0 <= r <= 4.0:
        raise ValueError(f"r={r} outside [0, 4]")
    if not 0.0 < x0 < 1.0:
        raise ValueError(f"x0={x0} outside (0, 1)")
    if n < 0 or burn_in < 0:
        raise ValueError("n and burn_in must be non-negative")
    x = float(x0)
    for _ in range(burn_in):
        x = r * x * (1.0 - x)
    out = np.empty(n)
    for k in range(n):
        out[k] = x
        x = r * x * (1.0 - x)
    return out


@dataclass(frozen=True)
class LorenzConfig:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0
    dt: float = 0.01
    x0: float = 1.0
    y0: float = 1.0
    z0: float = 1.0
    burn_in: int = 5000
    n: int = 4096

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.burn_in < 0 or self.n < 0:
            raise ValueError("n and burn_in must be non-negative")


def lorenz_trajectory(cfg: LorenzConfig) -> np.ndarray:
    """Classical RK4 trajectory, shape ``(n, 3)``, sampled once per step
    after ``burn_in`` steps (the first row is the state after the burn-in)."""
    s, r, b, h = cfg.sigma, cfg.rho, cfg.beta, cfg.dt

    def rhs(x, y, z):
        return s * (y - x), x * (r - z) - y, x * y - b * z

    x, y, z = cfg.x0, cfg.y0, cfg.z0
    out = np.empty((cfg.n, 3))
    for step in range(cfg.burn_in + cfg.n):
        if step >= cfg.burn_in:
            out[step - cfg.burn_in] = (x, y, z)
        k1 = rhs(x, y, z)
        k2 = rhs(x + 0.5 * h * k1[0], y + 0.5 * h * k1[1], z + 0.5 * h * k1[2])
        k3 = rhs(x + 0.5 * h * k2[0], y + 0.5 * h * k2[1], z + 0.5 * h * k2[2])
        k4 = rhs(x + h * k3[0], y + h * k3[1], z + h * k3[2])
        x += h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y += h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        z += h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        if not max(abs(x), abs(y), abs(z)) <= DIVERGENCE_BOUND:
            raise DivergenceError(f"Lorenz state diverged at step {step}")
    return out


def lorenz_series(cfg: LorenzConfig | None = None, component: str = "y") -> np.ndarray:
    cfg = cfg or LorenzConfig()
    try:
        col = "xyz".index(component)
    except ValueError:
        raise ValueError(f"component must be x, y or z, not {component!r}") from None
    return lorenz_trajectory(cfg)[:, col].copy()


def add_wgn(signal, variance: float, seed: int) -> np.ndarray:
    """Add i.i.d. N(0, variance) noise drawn from a PCG64 stream seeded by ``seed``."""
    if variance < 0:
        raise ValueError("noise variance must be non-negative")
    s = np.asarray(signal, dtype=float)
    if variance == 0:
        return s.copy()
    rng = np.random.default_rng(seed)
    return s + np.sqrt(variance) * rng.standard_normal(s.shape)
