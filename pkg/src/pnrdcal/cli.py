"""Command-line interface.

Exit codes: 0 success, 1 usage or input error, 2 ambiguous estimate,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

from . import __version__
from .background import solve_loss_background_equivalence, subtract_background
from .detector_model import build_convolution_matrix
from .errors import AmbiguousEstimateError
from .estimation import (
    KlyshkoRates,
    estimate_efficiencies,
    klyshko_efficiency,
    scan_residual_landscape,
)
from .formats import (
    ConfigError,
    experiment_to_dict,
    file_digest,
    load_detector_config,
    load_experiment_config,
    parse_range,
    read_histogram,
    result_to_dict,
    write_csv,
    write_histogram,
    write_json,
)
from .simulation import simulate_clicks_exact, simulate_clicks_mc

EXIT_OK, EXIT_USAGE, EXIT_AMBIGUOUS, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("pnrdcal")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _detectors(args, hist=None):
    """Detector geometry from ``--detectors`` or else the histogram file."""
    path = getattr(args, "detectors", None)
    if path:
        return load_detector_config(path, args.truncation)
    if hist is not None and hist.detectors is not None:
        d1, d2 = hist.detectors
        if args.truncation:
            d1, d2 = d1.with_truncation(args.truncation), d2.with_truncation(args.truncation)
        return d1, d2
    raise UsageError("no detector configuration: pass --detectors or use a histogram that records one")


def cmd_simulate(args) -> int:
    cfg = load_experiment_config(args.config, seed=args.seed, truncation=args.truncation, trials=args.trials)
    detectors = (
        cfg.detector1.multiplex.with_truncation(cfg.truncation),
        cfg.detector2.multiplex.with_truncation(cfg.truncation),
    )
    meta = {"config": experiment_to_dict(cfg), "mode": "exact" if args.exact else "monte-carlo"}
    if args.exact:
        data = simulate_clicks_exact(cfg)
        data = data / data.sum()
    else:
        data = simulate_clicks_mc(cfg, workers=args.workers)
        if data.metadata["overflow_pulses"]:
            log.warning("%d pulses exceeded the truncation", data.metadata["overflow_pulses"])
    write_histogram(args.out, data, detectors, label=args.label, metadata=meta)
    return EXIT_OK


def cmd_estimate(args) -> int:
    hist = read_histogram(args.histogram)
    d1, d2 = load_detector_config(args.detectors, args.truncation)
    c1, c2 = build_convolution_matrix(d1), build_convolution_matrix(d2)
    inputs = {
        "histogram": {"path": str(args.histogram), "sha256": file_digest(args.histogram)},
        "detectors": {"path": str(args.detectors), "sha256": file_digest(args.detectors)},
    }
    start = time.perf_counter()
    code = EXIT_OK
    try:
        result = estimate_efficiencies(hist.data, c1, c2, grid=args.grid, xtol=args.tolerance, workers=args.workers)
    except AmbiguousEstimateError as exc:
        result, code = exc.result, EXIT_AMBIGUOUS
        print(f"error: {exc}", file=sys.stderr)
    timing = time.perf_counter() - start if args.timing else None
    write_json(args.out, result_to_dict(result, (d1, d2), inputs, timing))
    if code == EXIT_OK and not result.converged:
        print("error: optimizer did not converge", file=sys.stderr)
        code = EXIT_NUMERICAL
    if code == EXIT_OK:
        print(f"eta1 = {result.eta1:.6f}\neta2 = {result.eta2:.6f}\nresidual = {result.residual:.3e}")
    return code


def cmd_klyshko(args) -> int:
    hist = read_histogram(args.histogram)
    eta_s, eta_i = klyshko_efficiency(KlyshkoRates.from_clicks(hist.data))
    print(f"eta_s = {eta_s:.6f}  (detector 1)\neta_i = {eta_i:.6f}  (detector 2)")
    return EXIT_OK


def cmd_subtract(args) -> int:
    measured = read_histogram(args.measured)
    background = read_histogram(args.background)
    d1, d2 = _detectors(args, measured)
    c1, c2 = build_convolution_matrix(d1), build_convolution_matrix(d2)
    res = subtract_background(measured.data, background.data, c1, c2)
    meta = {
        "negative_mass": res.negative_mass,
        "regularized_frequencies": res.regularized_frequencies,
        "inputs": {
            "measured": {"path": str(args.measured), "sha256": file_digest(args.measured)},
            "background": {"path": str(args.background), "sha256": file_digest(args.background)},
        },
    }
    write_histogram(args.out, res.probabilities, (d1, d2), label=args.label, metadata=meta)
    if res.negative_mass > 0:
        log.warning("clipped negative mass %.3g", res.negative_mass)
    return EXIT_OK


def cmd_scan(args) -> int:
    hist = read_histogram(args.histogram)
    d1, d2 = _detectors(args, hist)
    grid = parse_range(args.grid_spec, "grid spec")
    F = scan_residual_landscape(hist.data, build_convolution_matrix(d1), build_convolution_matrix(d2), grid, args.workers)
    rows = ((grid[i], grid[j], F[i, j]) for i in range(grid.size) for j in range(grid.size))
    write_csv(args.out, ("eta1", "eta2", "residual"), rows)
    return EXIT_OK


def cmd_equivalence(args) -> int:
    alphas = parse_range(args.alpha_range, "alpha range")
    points = solve_loss_background_equivalence(args.M, alphas, args.loss_points, args.tolerance)
    rows = ((p.alpha, p.loss, p.loss_max, p.residual, int(p.solved)) for p in points)
    write_csv(args.out, ("alpha", "loss", "loss_max", "residual", "solved"), rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pnrdcal", description=__doc__.splitlines()[0] if __doc__ else None)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        return sp

    def positive_int(s):
        try:
            v = int(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer: {s!r}") from None
        if v < 1:
            raise argparse.ArgumentTypeError("must be >= 1")
        return v

    sp = add("simulate", cmd_simulate, "simulate a click histogram from an experiment config")
    sp.add_argument("config")
    sp.add_argument("out")
    sp.add_argument("--exact", action="store_true", help="write exact probabilities instead of sampling")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--trials", type=positive_int)
    sp.add_argument("--truncation", type=positive_int)
    sp.add_argument("--workers", type=positive_int, default=1)
    sp.add_argument("--label", default="")

    sp = add("estimate", cmd_estimate, "estimate both detector efficiencies")
    sp.add_argument("histogram")
    sp.add_argument("detectors", help="detector config file")
    sp.add_argument("out")
    sp.add_argument("--grid", type=positive_int, default=21, help="outer grid points per axis")
    sp.add_argument("--tolerance", type=float, default=1e-6, help="simplex size at convergence")
    sp.add_argument("--truncation", type=positive_int)
    sp.add_argument("--workers", type=positive_int, default=1)
    sp.add_argument("--timing", action="store_true", help="record wall time in the result file")

    sp = add("klyshko", cmd_klyshko, "standard Klyshko efficiencies from a histogram")
    sp.add_argument("histogram")

    sp = add("subtract", cmd_subtract, "remove measured background from click statistics")
    sp.add_argument("measured")
    sp.add_argument("background")
    sp.add_argument("out")
    sp.add_argument("--detectors")
    sp.add_argument("--truncation", type=positive_int)
    sp.add_argument("--label", default="")

    sp = add("scan", cmd_scan, "residual landscape over a grid of efficiencies (CSV)")
    sp.add_argument("histogram")
    sp.add_argument("grid_spec", help="'start:stop:num' or 'num'")
    sp.add_argument("out")
    sp.add_argument("--detectors")
    sp.add_argument("--truncation", type=positive_int)
    sp.add_argument("--workers", type=positive_int, default=1)

    sp = add("equivalence", cmd_equivalence, "loss equivalent to background (CSV)")
    sp.add_argument("M", type=positive_int, help="largest photon number")
    sp.add_argument("alpha_range", help="'start:stop:num'")
    sp.add_argument("out")
    sp.add_argument("--loss-points", type=positive_int, default=101)
    sp.add_argument("--tolerance", type=float, default=1e-8)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except AmbiguousEstimateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_AMBIGUOUS
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
