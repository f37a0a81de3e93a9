"""Experiment drivers: optimal-wavelet selection and logistic-map sweeps.

Rows are independent and deterministic, so they may be computed in any order
or in parallel (``WAVECOMPLEX_THREADS`` caps the worker count); results are
always assembled by key.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial

import numpy as np

from .complexity import complexity_report
from .denoise import DenoiseConfig, denoise, residual_energy_density
from .dwt import WAVELETS, dyadic_level, filter_bank, forward
from .hmt import FitConfig, FitResult, fit
from .signalgen import logistic_series

log = logging.getLogger(__name__)

SWEEP_FIT = FitConfig(max_iter=200, rel_tol=1e-6, restarts=1)


def worker_count() -> int:
    raw = os.environ.get("WAVECOMPLEX_THREADS", "")
    try:
        n = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        log.warning("ignoring non-integer WAVECOMPLEX_THREADS=%r", raw)
        n = 1
    return max(1, n)


def _map(fn, items, workers: int | None = None) -> list:
    workers = worker_count() if workers is None else workers
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def row_seed(master_seed: int, key: float) -> int:
    """Deterministic per-row seed from the master seed and a numeric key."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF, int(round(key * 1e8))])
    return int(ss.generate_state(1)[0])


# -- selection ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SelectionRow:
    wavelet: str
    global_C_norm: float
    residual_energy_density: float | None = None
    entropy_rate_norm: float = math.nan
    fit: FitResult | None = None
    status: str = "ok"
    winner: bool = False


def _select_one(wavelet, signal, cfg, noise_variance, clean):
    try:
        if noise_variance is not None:
            res = denoise(signal, wavelet, DenoiseConfig(noise_variance, cfg))
            result = res.fit
            residual = None if clean is None else residual_energy_density(res.signal, clean)
        else:
            result = fit(forward(signal, filter_bank(wavelet)), cfg)
            residual = None
        rep = complexity_report(result.params, wavelet)
        return SelectionRow(
            wavelet, rep.global_C_norm, residual, rep.entropy_rate_norm, result
        )
    except (ArithmeticError, ValueError) as exc:
        log.warning("fit failed for %s: %s", wavelet, exc)
        return SelectionRow(wavelet, math.nan, None, status=f"failed: {exc}")


def select_wavelet(
    signal,
    candidates=WAVELETS,
    cfg: FitConfig | None = None,
    noise_variance: float | None = None,
    clean=None,
    workers: int | None = None,
):
    """Fit every candidate and pick the one with the largest normalized complexity.

    When ``noise_variance`` is given each candidate also denoises the signal,
    and with a ``clean`` reference the residual energy density is reported.
    Returns ``(rows, winner)`` with rows ranked by complexity (failed rows
    last); ties keep candidate order.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidate wavelets")
    for name in candidates:
        filter_bank(name)
    signal = np.asarray(signal, dtype=float)
    dyadic_level(len(signal))
    if clean is not None and noise_variance is None:
        raise ValueError("a clean reference requires the noise variance")
    cfg = cfg or FitConfig()
    rows = _map(
        partial(_select_one, signal=signal, cfg=cfg, noise_variance=noise_variance, clean=clean),
        candidates,
        workers,
    )
    order = sorted(
        range(len(rows)),
        key=lambda i: (rows[i].status != "ok", -rows[i].global_C_norm if rows[i].status == "ok" else 0.0, i),
    )
    ranked = [rows[i] for i in order]
    if ranked[0].status != "ok":
        raise ArithmeticError("every candidate wavelet failed to fit")
    ranked[0] = replace(ranked[0], winner=True)
    return ranked, ranked[0].wavelet


# -- logistic sweep -------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    r: float
    global_C_norm: float
    entropy_rate_norm: float
    monotone_run: int
    seed: int
    status: str = "ok"


@dataclass(frozen=True)
class SweepConfig:
    wavelet: str = "bior1.3"
    levels: int = 12
    x0: float = 0.3
    burn_in: int = 1000
    fit: FitConfig = SWEEP_FIT
    master_seed: int = 0


def logistic_row(r: float, cfg: SweepConfig | None = None) -> SweepRow:
    cfg = cfg or SweepConfig()
    seed = row_seed(cfg.master_seed, r)
    try:
        x = logistic_series(r, cfg.x0, 2 ** cfg.levels, cfg.burn_in)
        tree = forward(x, filter_bank(cfg.wavelet))
        result = fit(tree, replace(cfg.fit, seed=seed))
        rep = complexity_report(result.params, cfg.wavelet)
    except (ArithmeticError, ValueError) as exc:
        return SweepRow(r, math.nan, math.nan, 0, seed, f"failed: {exc}")
    return SweepRow(r, rep.global_C_norm, rep.entropy_rate_norm, rep.monotone_run, seed)


def r_grid(r_min: float, r_max: float, step: float) -> np.ndarray:
    if not 0.0 <= r_min < r_max <= 4.0:
        raise ValueError("need 0 <= r_min < r_max <= 4")
    if not step > 0:
        raise ValueError("step must be positive")
    count = int(math.floor((r_max - r_min) / step + 1e-9)) + 1
    # rounding keeps grid values stable as row keys
    return np.round(r_min + step * np.arange(count), 10)


def sweep_logistic(
    r_min: float, r_max: float, step: float, cfg: SweepConfig | None = None, workers: int | None = None
) -> list[SweepRow]:
    cfg = cfg or SweepConfig()
    filter_bank(cfg.wavelet)
    grid = r_grid(r_min, r_max, step)
    rows = _map(partial(logistic_row, cfg=cfg), [float(r) for r in grid], workers)
    return sorted(rows, key=lambda row: row.r)
