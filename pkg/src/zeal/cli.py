"""Batch experiment harness and operator interface.

Subcommands: plan, perturb, aggregate, encode, decode, audit, sweep-error,
sweep-bound, sweep-trcr, compress. Every option can also come from a flat
``key = value`` config file (--config); command-line flags override it.
Sweeps write CSV tables (and matching PNG figures next to them unless
--no-figures); all runs are byte-reproducible for a fixed seed.

Exit codes: 0 success, 2 configuration error, 3 domain/feasibility error,
4 the audit found a vulnerability.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import aggregate, audit, codec, compressmeter, fpbits, planner, report
from .errors import (
    ConfigError,
    EmptyDataset,
    InvalidEpsilon,
    InvalidRange,
    NonNumericCell,
    OutOfFeasible,
    ZealDataError,
    ZealError,
)
from .mechanism import (
    MechanismParams,
    PrivatizedDataset,
    derive_params,
    perturb_dataset,
    uniform_stream,
)

SYNTHETIC_STREAM = 0x5EED  # stream id reserved for synthetic data generation
DECADE_BIASES = [10.0 ** k for k in range(3, 22)]  # raw-bias study grid

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_VULNERABLE = 4


# --------------------------------------------------------------------------
# dataset ingestion
# --------------------------------------------------------------------------

def ingest_csv(path: str, column: str | None, feasible_min: float,
               feasible_max: float, skip_out_of_feasible: bool = False):
    """Read one numeric CSV column declared feasible on [min, max].

    Returns (data, center, half_range) with center/half_range taken from the
    declared interval, not from the data. ``column`` is a header name or a
    0-based index (default 0); with an index, a non-numeric first row is
    treated as a header. Out-of-interval rows raise unless skipped.
    """
    if not (feasible_min < feasible_max):
        raise ConfigError(
            f"feasible interval [{feasible_min!r}, {feasible_max!r}] is empty")
    center = (feasible_min + feasible_max) / 2.0
    half_range = (feasible_max - feasible_min) / 2.0
    values = _read_column(path, column)
    kept = []
    for row, value in values:
        if value < feasible_min or value > feasible_max:
            if skip_out_of_feasible:
                continue
            raise OutOfFeasible(row, f"row {row}: {value!r} outside "
                                     f"[{feasible_min!r}, {feasible_max!r}]")
        kept.append(value)
    if not kept:
        raise EmptyDataset(f"{path}: no usable rows")
    return np.asarray(kept, dtype=np.float64), center, half_range


def _read_column(path: str, column: str | None):
    """Yield (1-based row number, float) for one CSV column."""
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        rows = list(reader)
    rows = [r for r in rows if r]  # drop blank lines
    if not rows:
        raise EmptyDataset(f"{path}: empty file")

    index: int
    start = 0
    if column is None or column.lstrip("+-").isdigit():
        index = 0 if column is None else int(column)
        try:  # tolerate a header row in front of an indexed column
            float(rows[0][index])
        except (ValueError, IndexError):
            start = 1
    else:
        header = rows[0]
        if column not in header:
            raise ConfigError(f"{path}: no column named {column!r}")
        index = header.index(column)
        start = 1

    out = []
    for i, row in enumerate(rows[start:], start=start + 1):
        try:
            cell = row[index]
        except IndexError:
            raise NonNumericCell(i, f"row {i}: missing column {index}") from None
        try:
            out.append((i, float(cell)))
        except ValueError:
            raise NonNumericCell(i, f"row {i}: {cell!r} is not numeric") from None
    if not out:
        raise EmptyDataset(f"{path}: no data rows")
    return out


def synthetic_uniform(n: int, center: float, half_range: float,
                      seed: int) -> np.ndarray:
    """Uniform readings on [center - h, center + h], reproducible from seed."""
    if n < 1:
        raise ConfigError(f"synthetic size must be >= 1, got {n}")
    rng = uniform_stream(seed, stream=SYNTHETIC_STREAM)
    return rng.uniform(center - half_range, center + half_range, n)


def load_dataset(args) -> tuple[np.ndarray, float, float]:
    """Dataset plus (center, half_range) from --input or --synthetic."""
    if args.input and args.synthetic:
        raise ConfigError("--input and --synthetic are mutually exclusive")
    if args.input:
        if args.feasible_min is None or args.feasible_max is None:
            raise ConfigError("--feasible-min/--feasible-max are required with --input")
        data, center, half_range = ingest_csv(
            args.input, args.column, args.feasible_min, args.feasible_max,
            args.skip_out_of_feasible)
    elif args.synthetic:
        center, half_range = args.center, args.half_range
        if center is None or half_range is None:
            raise ConfigError("--center and --half-range are required with --synthetic")
        data = synthetic_uniform(args.synthetic, center, half_range, args.seed)
    else:
        raise ConfigError("provide --input or --synthetic")
    # explicit flags win over the feasible-derived values
    if args.center is not None:
        center = args.center
    if args.half_range is not None:
        half_range = args.half_range
    return data, center, half_range


# --------------------------------------------------------------------------
# option plumbing
# --------------------------------------------------------------------------

def _parse_epsilons(raw: str | None) -> list[float]:
    if raw is None:
        raise ConfigError("--epsilon is required")
    try:
        values = [float(tok) for tok in str(raw).split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --epsilon value {raw!r}") from exc
    if not values:
        raise ConfigError("--epsilon list is empty")
    return values


def _single_epsilon(raw: str | None) -> float:
    values = _parse_epsilons(raw)
    if len(values) != 1:
        raise ConfigError("this command takes a single --epsilon")
    return values[0]


def _parse_abar(raw: str) -> float:
    raw = raw.strip()
    if raw.lower().startswith("0x"):
        return fpbits.bits_to_float(int(raw, 16))
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad --abar value {raw!r}") from exc


def resolve_bias(args, base: MechanismParams) -> tuple[float, planner.AbarPlan | None]:
    """Bias from --abar (verbatim) or --exponent (planned); default 0."""
    if args.abar is not None and args.exponent is not None:
        raise ConfigError("--abar and --exponent are mutually exclusive")
    if args.abar is not None:
        return _parse_abar(args.abar), None
    if args.exponent is not None:
        plan_ = planner.plan(base, target_exponent=args.exponent)
        return plan_.abar, plan_
    return 0.0, None


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise ConfigError(f"--{name.replace('_', '-')} is required")


def load_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; '#' starts a comment; keys use - or _."""
    mapping: dict[str, str] = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            mapping[key.strip().replace("-", "_")] = value.strip()
    return mapping


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def apply_config(parser: argparse.ArgumentParser, mapping: dict[str, str]) -> None:
    """Turn config entries into parser defaults (flags still override)."""
    defaults = {}
    for action in parser._actions:  # noqa: SLF001 - argparse has no public hook
        if action.dest in mapping:
            raw = mapping[action.dest]
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                low = raw.lower()
                if low not in _TRUE | _FALSE:
                    raise ConfigError(f"boolean expected for {action.dest}, got {raw!r}")
                defaults[action.dest] = low in _TRUE
            elif action.type is not None:
                try:
                    defaults[action.dest] = action.type(raw)
                except ValueError as exc:
                    raise ConfigError(f"bad value for {action.dest}: {raw!r}") from exc
            else:
                defaults[action.dest] = raw
    parser.set_defaults(**defaults)


def write_csv(path: str | None, fieldnames: list[str], rows: list[dict]) -> None:
    """Write rows (already formatted as strings) to a file or stdout."""
    if path is None:
        writer = csv.DictWriter(sys.stdout, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as f:
            f.write(text)


def _maybe_figure(args, rows: list[dict], renderer) -> None:
    if args.out and not args.no_figures and rows:
        renderer(rows, report.figure_path(args.out))


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_plan(args) -> int:
    _require(args, "epsilon", "center", "half_range")
    base = derive_params(_single_epsilon(args.epsilon), args.center, args.half_range)
    plan_ = planner.plan(base, target_exponent=args.exponent, max_f=args.max_f)
    _write_text(args.out, plan_.to_text())
    return EXIT_OK


def cmd_perturb(args) -> int:
    _require(args, "epsilon")
    data, center, half_range = load_dataset(args)
    epsilon = _single_epsilon(args.epsilon)
    base = derive_params(epsilon, center, half_range)
    bias, _ = resolve_bias(args, base)
    params = derive_params(epsilon, center, half_range, bias)
    priv = perturb_dataset(params, data, args.seed, clamp=args.clamp)
    rows = [{"x_star": repr(float(v))} for v in priv.samples]
    write_csv(args.out, ["x_star"], rows)
    return EXIT_OK


def cmd_aggregate(args) -> int:
    _require(args, "input", "abar")
    samples = np.asarray([v for _, v in _read_column(args.input, args.column)])
    bias = _parse_abar(args.abar)
    star = aggregate.exact_mean(samples.tolist()) - bias
    rows = [
        {"metric": "avg_star", "value": repr(star)},
        {"metric": "n", "value": str(samples.size)},
    ]
    if args.original is not None:
        originals = np.asarray([v for _, v in _read_column(args.original, args.column)])
        if originals.size != samples.size:
            raise ConfigError(
                f"sample/original length mismatch: {samples.size} vs {originals.size}")
        avg_true = aggregate.exact_mean(originals.tolist())
        delta = star - avg_true
        rows.append({"metric": "avg_true", "value": repr(avg_true)})
        rows.append({"metric": "delta_avg", "value": repr(delta)})
        rows.append({"metric": "rel_delta_avg",
                     "value": "" if avg_true == 0.0 else repr(delta / avg_true)})
    write_csv(args.out, ["metric", "value"], rows)
    return EXIT_OK


def _load_plan(args) -> planner.AbarPlan:
    if args.plan is not None:
        with open(args.plan) as f:
            return planner.plan_from_text(f.read())
    _require(args, "epsilon", "center", "half_range", "exponent")
    base = derive_params(_single_epsilon(args.epsilon), args.center, args.half_range)
    return planner.plan(base, target_exponent=args.exponent)


def cmd_encode(args) -> int:
    _require(args, "input", "out")
    plan_ = _load_plan(args)
    samples = np.asarray([v for _, v in _read_column(args.input, args.column)])
    priv = PrivatizedDataset(samples=samples, params=plan_.params())
    frame = codec.encode(plan_, priv)
    with open(args.out, "wb") as f:
        f.write(codec.to_bytes(frame))
    return EXIT_OK


def cmd_decode(args) -> int:
    _require(args, "input")
    with open(args.input, "rb") as f:
        frame = codec.from_bytes(f.read())
    priv = codec.decode(frame)
    rows = [{"x_star": repr(float(v))} for v in priv.samples]
    write_csv(args.out, ["x_star"], rows)
    return EXIT_OK


def cmd_audit(args) -> int:
    _require(args, "epsilon", "center", "half_range")
    epsilon = _single_epsilon(args.epsilon)
    base = derive_params(epsilon, args.center, args.half_range)
    bias, _ = resolve_bias(args, base)
    params = derive_params(epsilon, args.center, args.half_range, bias)
    x_i = args.x_i if args.x_i is not None else args.center - args.half_range / 2.0
    x_j = args.x_j if args.x_j is not None else args.center + args.half_range / 2.0
    windows = {
        "x_i": audit.collect_windows(params, x_i, args.count),
        "x_j": audit.collect_windows(params, x_j, args.count),
    }
    verdict = audit.find_witness(params, x_i, x_j, count=args.count)
    _write_text(args.out, audit.render_report(params, x_i, x_j, verdict, windows))
    return EXIT_VULNERABLE if verdict.vulnerable else EXIT_OK


def cmd_sweep_error(args) -> int:
    _require(args, "epsilon")
    if args.trials < 1:
        raise ConfigError(f"--trials must be >= 1, got {args.trials}")
    data, center, half_range = load_dataset(args)
    epsilons = sorted(_parse_epsilons(args.epsilon))

    rows = []
    block = 0
    for epsilon in epsilons:
        base = derive_params(epsilon, center, half_range)
        if args.abar_mode == "zero":
            biases = [0.0]
        elif args.abar_mode == "planned":
            biases = [planner.plan(base, target_exponent=args.exponent).abar]
        else:  # sweep: unbiased, reachability-safe, and a larger binade
            e_min = planner.minimal_vulnerability_free_exponent(base)
            biases = [0.0,
                      planner.plan(base, target_exponent=e_min).abar,
                      planner.plan(base, target_exponent=e_min + 8).abar]
        for bias in sorted(biases):
            params = derive_params(epsilon, center, half_range, bias)
            for trial in range(args.trials):
                priv = perturb_dataset(params, data, args.seed,
                                       stream=block * args.trials + trial)
                rep = aggregate.error_metrics(priv, data)
                rows.append({
                    "epsilon": repr(epsilon),
                    "abar": repr(bias),
                    "trial": str(trial),
                    "rel_delta_avg": "" if rep.rel_delta_avg is None
                                     else repr(rep.rel_delta_avg),
                })
            block += 1
    write_csv(args.out, ["epsilon", "abar", "trial", "rel_delta_avg"], rows)
    _maybe_figure(args, rows, report.render_error_sweep)
    return EXIT_OK


def cmd_sweep_bound(args) -> int:
    _require(args, "epsilon")
    data, center, half_range = load_dataset(args)
    epsilon = _single_epsilon(args.epsilon)
    base = derive_params(epsilon, center, half_range)
    bias, _ = resolve_bias(args, base)
    params = derive_params(epsilon, center, half_range, bias)
    grid = aggregate.default_lambda_grid(params, args.lambda_points)
    table = aggregate.empirical_bound_check(params, data, grid,
                                            trials=args.trials, seed=args.seed)
    rows = [row.as_csv_dict() for row in table]
    write_csv(args.out, ["lambda", "empirical_p", "bound_abs", "bound_rel"], rows)
    _maybe_figure(args, rows, report.render_bound_check)
    return EXIT_OK


def cmd_sweep_trcr(args) -> int:
    _require(args, "epsilon")
    data, center, half_range = load_dataset(args)
    epsilon = _single_epsilon(args.epsilon)
    base = derive_params(epsilon, center, half_range)
    e_min = planner.minimal_vulnerability_free_exponent(base)
    top = min(e_min + args.exponent_span, 1022)

    entries: list[tuple[float, planner.AbarPlan | None]] = [(0.0, None)]
    for exponent in range(e_min, top + 1, args.exponent_step):
        plan_ = planner.plan(base, target_exponent=exponent)
        entries.append((plan_.abar, plan_))
    if not args.skip_decades:
        entries.extend((bias, None) for bias in DECADE_BIASES)

    rows = []
    for bias, plan_ in entries:
        params = derive_params(epsilon, center, half_range, bias)
        priv = perturb_dataset(params, data, args.seed)
        if plan_ is not None:
            codec.encode(plan_, priv)  # exercises the wire path and the prefix check
            gamma = plan_.gamma_min
            tr = plan_.tr
            exponent = plan_.chosen_exponent
            f_estimate = plan_.f_estimate
        else:
            gamma = tr = None
            exponent = fpbits.exponent_region(params.out_max)
            f_estimate = planner.finite_precision_estimate(params)
        rep = aggregate.error_metrics(priv, data)
        cr = compressmeter.compression_ratio(priv.samples)
        rows.append({
            "abar": repr(bias),
            "exponent": str(exponent),
            "gamma_min": "" if gamma is None else str(gamma),
            "tr": "" if tr is None else repr(tr),
            "cr_priv": repr(cr),
            "f_estimate": repr(f_estimate),
            "rel_delta_avg": "" if rep.rel_delta_avg is None
                             else repr(rep.rel_delta_avg),
        })
    rows.sort(key=lambda r: (int(r["exponent"]), float(r["abar"])))
    write_csv(args.out,
              ["abar", "exponent", "gamma_min", "tr", "cr_priv", "f_estimate",
               "rel_delta_avg"], rows)
    _maybe_figure(args, rows, report.render_trcr_sweep)
    return EXIT_OK


def cmd_compress(args) -> int:
    _require(args, "epsilon")
    data, center, half_range = load_dataset(args)
    epsilon = _single_epsilon(args.epsilon)
    base = derive_params(epsilon, center, half_range)
    bias, _ = resolve_bias(args, base)
    params = derive_params(epsilon, center, half_range, bias)
    priv = perturb_dataset(params, data, args.seed)
    rep = compressmeter.measure(data, priv.samples, external=args.external)
    rows = [{
        "cr_original": repr(rep.cr_original),
        "cr_privatized": repr(rep.cr_privatized),
        "method": rep.method,
        "improvement": repr(rep.improvement),
    }]
    write_csv(args.out, ["cr_original", "cr_privatized", "method", "improvement"], rows)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value option file")
    p.add_argument("--seed", type=int, default=0, help="master random seed")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--no-figures", action="store_true",
                   help="skip PNG rendering next to CSV outputs")


def _add_mech(p: argparse.ArgumentParser, multi: bool = False) -> None:
    p.add_argument("--epsilon",
                   help="privacy budget" + (" (comma-separated list)" if multi else ""))
    p.add_argument("--center", type=float, help="midpoint of the feasible interval")
    p.add_argument("--half-range", type=float, dest="half_range",
                   help="half-width of the feasible interval")


def _add_bias(p: argparse.ArgumentParser) -> None:
    p.add_argument("--abar", help="explicit bias (decimal or 0x bit pattern)")
    p.add_argument("--exponent", type=int,
                   help="plan the bias into this binade instead")
    p.add_argument("--max-f", type=float, default=planner.DEFAULT_MAX_F,
                   dest="max_f", help="precision-estimate budget for auto plans")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="CSV file of readings")
    p.add_argument("--column", help="column name or 0-based index (default 0)")
    p.add_argument("--feasible-min", type=float, dest="feasible_min")
    p.add_argument("--feasible-max", type=float, dest="feasible_max")
    p.add_argument("--skip-out-of-feasible", action="store_true",
                   help="drop out-of-interval rows instead of failing")
    p.add_argument("--synthetic", type=int,
                   help="generate this many uniform readings instead")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="zeal",
        description="Privacy-preserving collection of doubles with "
                    "compressible, truncated transmission.")
    sub = parser.add_subparsers(dest="command", required=True)
    commands: dict[str, argparse.ArgumentParser] = {}

    def new(name: str, func, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        _add_common(p)
        commands[name] = p
        return p

    p = new("plan", cmd_plan, "derive a bias plan")
    _add_mech(p)
    p.add_argument("--exponent", type=int, help="pin the binade")
    p.add_argument("--max-f", type=float, default=planner.DEFAULT_MAX_F, dest="max_f")

    p = new("perturb", cmd_perturb, "privatize a dataset")
    _add_mech(p)
    _add_bias(p)
    _add_data(p)
    p.add_argument("--clamp", action="store_true",
                   help="clamp out-of-domain readings instead of failing")

    p = new("aggregate", cmd_aggregate, "bias-corrected average of samples")
    p.add_argument("--input", help="CSV of privatized samples")
    p.add_argument("--column", help="column name or index (default 0)")
    p.add_argument("--abar", help="public bias (decimal or 0x bit pattern)")
    p.add_argument("--original", help="CSV of original readings for error metrics")

    p = new("encode", cmd_encode, "pack samples into a wire frame")
    _add_mech(p)
    p.add_argument("--exponent", type=int)
    p.add_argument("--plan", help="plan text file (alternative to flags)")
    p.add_argument("--input", help="CSV of privatized samples")
    p.add_argument("--column")

    p = new("decode", cmd_decode, "unpack a wire frame")
    p.add_argument("--input", help="frame file")

    p = new("audit", cmd_audit, "reachability audit of the sampler")
    _add_mech(p)
    _add_bias(p)
    p.add_argument("--x-i", type=float, dest="x_i", help="first reading")
    p.add_argument("--x-j", type=float, dest="x_j", help="second reading")
    p.add_argument("--count", type=int, default=audit.DEFAULT_WINDOW,
                   help="probabilities per scan window")

    p = new("sweep-error", cmd_sweep_error, "relative error vs budget and bias")
    _add_mech(p, multi=True)
    _add_data(p)
    p.add_argument("--abar-mode", choices=["zero", "planned", "sweep"],
                   default="sweep", dest="abar_mode")
    p.add_argument("--exponent", type=int, help="binade for --abar-mode planned")
    p.add_argument("--trials", type=int, default=100)

    p = new("sweep-bound", cmd_sweep_bound, "empirical vs analytic error bounds")
    _add_mech(p)
    _add_bias(p)
    _add_data(p)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--lambda-points", type=int, default=30, dest="lambda_points")

    p = new("sweep-trcr", cmd_sweep_trcr, "transmission/compression vs bias")
    _add_mech(p)
    _add_data(p)
    p.add_argument("--exponent-step", type=int, default=4, dest="exponent_step")
    p.add_argument("--exponent-span", type=int, default=56, dest="exponent_span")
    p.add_argument("--skip-decades", action="store_true",
                   help="omit the raw power-of-ten bias rows")

    p = new("compress", cmd_compress, "compression ratios before/after privatization")
    _add_mech(p)
    _add_bias(p)
    _add_data(p)
    p.add_argument("--external", help="external compressor executable (stdin->stdout)")

    return parser, commands


def main(argv=None) -> int:
    parser, commands = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            apply_config(commands[args.command], load_config(args.config))
            args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, InvalidEpsilon, InvalidRange) as exc:
        print(f"zeal: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ZealDataError, FileNotFoundError) as exc:
        print(f"zeal: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ZealError as exc:
        print(f"zeal: {exc}", file=sys.stderr)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
