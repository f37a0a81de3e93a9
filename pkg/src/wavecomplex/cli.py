"""Command-line interface.

Subcommands: generate, fit, complexity, denoise, select, sweep.  Exit status
is 0 on success, 1 on usage or input errors and 2 on numerical failure.
Options may also come from a ``key=value`` file given with ``--config``;
command-line flags take precedence.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from contextlib import contextmanager

import numpy as np

from . import __version__
from .complexity import complexity_report
from .denoise import ESTIMATOR, DenoiseConfig, denoise, residual_energy_density
from .dwt import WAVELETS, filter_bank, forward
from .hmt import FitConfig, fit, load_model
from .orchestrate import SweepConfig, select_wavelet, sweep_logistic
from .signalgen import LorenzConfig, add_wgn, logistic_series, lorenz_series

log = logging.getLogger("wavecomplex")

_BOOL_KEYS = {"zero_mean", "verbose"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# -- io -------------------------------------------------------------------

@contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def read_signal(path: str) -> np.ndarray:
    src = sys.stdin if path == "-" else path
    data = np.loadtxt(src, delimiter=",", ndmin=1, comments="#")
    if data.ndim != 1:
        raise ValueError(f"{path}: expected one sample per line")
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: non-finite samples")
    return data


def write_signal(fh, samples) -> None:
    for v in samples:
        fh.write(f"{v:.17g}\n")


def _dyadic(x: np.ndarray, levels: int | None) -> np.ndarray:
    if levels is not None:
        n = 2 ** levels
        if len(x) < n:
            raise ValueError(f"need {n} samples for --levels {levels}, got {len(x)}")
    else:
        if len(x) < 2:
            raise ValueError("need at least two samples")
        n = 1 << (len(x).bit_length() - 1)
    if n != len(x):
        log.warning("truncating %d samples to %d", len(x), n)
    return x[:n]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


# -- config ---------------------------------------------------------------

def read_config(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key in _BOOL_KEYS:
                out[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                out[key] = value
    return out


def _fit_config(args) -> FitConfig:
    return FitConfig(
        max_iter=args.max_iter,
        rel_tol=args.tol,
        restarts=args.restarts,
        zero_mean=args.zero_mean,
        seed=args.seed,
    )


def _wavelet_list(value: str) -> list[str]:
    if value == "all":
        return list(WAVELETS)
    names = [s.strip() for s in value.split(",") if s.strip()]
    for name in names:
        if name not in WAVELETS:
            raise UsageError(f"unknown wavelet {name!r}; choose from {', '.join(WAVELETS)}")
    return names


# -- commands -------------------------------------------------------------

def cmd_generate(args) -> int:
    n = 2 ** args.levels if args.n is None else args.n
    if args.system == "logistic":
        x = logistic_series(args.r, args.x0, n, 1000 if args.burn_in is None else args.burn_in)
    else:
        cfg = LorenzConfig(
            sigma=args.sigma, rho=args.rho, beta=args.beta, dt=args.dt,
            x0=args.start[0], y0=args.start[1], z0=args.start[2],
            burn_in=5000 if args.burn_in is None else args.burn_in, n=n,
        )
        x = lorenz_series(cfg, args.component)
    if args.noise_var:
        x = add_wgn(x, args.noise_var, args.seed)
    with _open_out(args.out) as fh:
        write_signal(fh, x)
    return 0


def cmd_fit(args) -> int:
    x = _dyadic(read_signal(args.input), args.levels)
    result = fit(forward(x, filter_bank(args.wavelet)), _fit_config(args))
    payload = result.to_dict()
    payload["wavelet"] = args.wavelet
    payload["iterations"] = len(result.trace) - 1
    payload["converged"] = result.converged
    with _open_out(args.out) as fh:
        json.dump(payload, fh)
        fh.write("\n")
    return 0


def cmd_complexity(args) -> int:
    if args.model:
        with open(args.model) as fh:
            text = fh.read()
        params, _, _ = load_model(text)
        wavelet = json.loads(text).get("wavelet", "")
    elif args.input:
        x = _dyadic(read_signal(args.input), args.levels)
        params = fit(forward(x, filter_bank(args.wavelet)), _fit_config(args)).params
        wavelet = args.wavelet
    else:
        raise UsageError("complexity needs --input or --model")
    report = complexity_report(params, wavelet)
    with _open_out(args.out) as fh:
        if args.format == "json":
            fh.write(report.to_json() + "\n")
        else:
            fh.write(report.to_csv())
    return 0


def cmd_denoise(args) -> int:
    x = _dyadic(read_signal(args.input), args.levels)
    res = denoise(x, args.wavelet, DenoiseConfig(args.noise_var, _fit_config(args)))
    sidecar = {
        "wavelet": args.wavelet,
        "noise_variance": args.noise_var,
        "residual_energy_density": None,
        "global_C_norm": complexity_report(res.fit.params).global_C_norm,
        "estimator": ESTIMATOR,
        "zero_mean": args.zero_mean,
    }
    if args.clean:
        clean = read_signal(args.clean)[: len(x)]
        sidecar["residual_energy_density"] = residual_energy_density(res.signal, clean)
    with _open_out(args.out) as fh:
        write_signal(fh, res.signal)
    side_path = args.sidecar or (f"{args.out}.json" if args.out not in (None, "-") else None)
    text = json.dumps(sidecar)
    if side_path:
        with open(side_path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text, file=sys.stderr)
    return 0


SELECT_COLUMNS = [
    "wavelet", "global_C_norm", "residual_energy_density", "entropy_rate_norm", "winner", "status",
]


def cmd_select(args) -> int:
    x = _dyadic(read_signal(args.input), args.levels)
    clean = None
    if args.clean:
        clean = read_signal(args.clean)[: len(x)]
        if len(clean) != len(x):
            raise ValueError("clean reference is shorter than the input")
    rows, winner = select_wavelet(
        x,
        _wavelet_list(args.wavelets),
        _fit_config(args),
        noise_variance=args.noise_var if clean is not None else None,
        clean=clean,
    )
    log.info("winner: %s", winner)
    with _open_out(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SELECT_COLUMNS)
        for row in rows:
            writer.writerow([
                row.wavelet, _fmt(row.global_C_norm), _fmt(row.residual_energy_density),
                _fmt(row.entropy_rate_norm), int(row.winner), row.status,
            ])
    return 0


SWEEP_COLUMNS = ["r", "global_C_norm", "entropy_rate_norm", "monotone_run", "seed", "status"]


def cmd_sweep(args) -> int:
    cfg = SweepConfig(
        wavelet=args.wavelet,
        levels=args.levels or 12,
        x0=args.x0,
        burn_in=1000 if args.burn_in is None else args.burn_in,
        fit=_fit_config(args),
        master_seed=args.seed,
    )
    rows = sweep_logistic(args.rmin, args.rmax, args.step, cfg)
    with _open_out(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(getattr(row, c)) for c in SWEEP_COLUMNS])
    return 0


# -- parser ---------------------------------------------------------------

def _add_common(p, wavelet_default="dmey", noise_default=None):
    p.add_argument("--levels", type=int, default=None, help="use 2**LEVELS samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output path (default stdout)")
    if wavelet_default is not None:
        p.add_argument("--wavelet", default=wavelet_default, choices=WAVELETS)
    if noise_default is not None:
        p.add_argument("--noise-var", type=float, default=noise_default)


def _add_fit(p):
    d = FitConfig()
    p.add_argument("--tol", type=float, default=d.rel_tol, help="relative log-likelihood tolerance")
    p.add_argument("--max-iter", type=int, default=d.max_iter)
    p.add_argument("--restarts", type=int, default=d.restarts)
    p.add_argument("--zero-mean", action="store_true", default=d.zero_mean)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wavecomplex", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="key=value defaults file (may appear anywhere)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("generate", help="write a test signal as CSV")
    p.add_argument("system", choices=["logistic", "lorenz"])
    _add_common(p, wavelet_default=None, noise_default=0.0)
    p.set_defaults(levels=12)
    p.add_argument("--n", type=int, default=None, help="sample count (overrides --levels)")
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--r", type=float, default=4.0)
    p.add_argument("--x0", type=float, default=0.3)
    p.add_argument("--sigma", type=float, default=10.0)
    p.add_argument("--rho", type=float, default=28.0)
    p.add_argument("--beta", type=float, default=8.0 / 3.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--start", type=float, nargs=3, default=[1.0, 1.0, 1.0])
    p.add_argument("--component", choices=["x", "y", "z"], default="y")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", help="fit the tree model, write JSON")
    p.add_argument("--input", required=True)
    _add_common(p)
    _add_fit(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("complexity", help="complexity report for a signal or stored model")
    p.add_argument("--input")
    p.add_argument("--model")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    _add_common(p)
    _add_fit(p)
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("denoise", help="denoise with known noise variance")
    p.add_argument("--input", required=True)
    p.add_argument("--clean", help="clean reference for the residual metric")
    p.add_argument("--sidecar", help="path for the JSON summary (default OUT.json)")
    _add_common(p, noise_default=1.0)
    _add_fit(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("select", help="rank wavelets by global complexity")
    p.add_argument("--input", required=True)
    p.add_argument("--clean")
    p.add_argument("--wavelets", default="all", help="'all' or comma-separated names")
    _add_common(p, wavelet_default=None, noise_default=1.0)
    _add_fit(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("sweep", help="logistic-map complexity sweep")
    p.add_argument("--rmin", type=float, default=2.8)
    p.add_argument("--rmax", type=float, default=4.0)
    p.add_argument("--step", type=float, default=0.001)
    p.add_argument("--x0", type=float, default=0.3)
    p.add_argument("--burn-in", type=int, default=None)
    _add_common(p, wavelet_default="bior1.3")
    _add_fit(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def _apply_config(parser: argparse.ArgumentParser, values: dict) -> None:
    subparsers = next(
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    )
    for sp in subparsers.choices.values():
        known = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, value in values.items():
            action = known.get(key)
            if action is None:
                continue
            if isinstance(value, str) and action.type is not None:
                value = action.type(value)
            defaults[key] = value
        sp.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        cfg_path, argv = _split_config(argv)
        if cfg_path:
            _apply_config(parser, read_config(cfg_path))
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except ArithmeticError as exc:
        print(f"wavecomplex: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        print(f"wavecomplex: error: {exc}", file=sys.stderr)
        return 1


def _split_config(argv):
    """Pull ``--config PATH`` out of argv wherever it appears."""
    rest, path = [], None
    it = iter(argv)
    for tok in it:
        if tok == "--config":
            path = next(it, None)
            if path is None:
                raise UsageError("--config needs a path")
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
        else:
            rest.append(tok)
    return path, rest


if __name__ == "__main__":
    sys.exit(main())
