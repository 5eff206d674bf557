"""Command-line interface.

Exit codes: 0 success, 1 I/O or malformed input, 2 usage or config error,
3 numerical divergence. Results go to stdout as ``key=value`` lines; progress
and errors go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from sik import __version__
from sik.config import DESK_PRESET, ConfigError, SweepConfig, parse_config
from sik.errors import DivergenceError
from sik.files import (
    ParseError,
    read_image,
    write_image,
    write_manifest,
    write_profiles_csv,
)
from sik.harness import (
    SweepGrid,
    build_problem,
    extract_profiles,
    iterations_to_within,
    mae,
    phantom_problem,
    run_sweep,
)
from sik.operators import BOUNDARIES
from sik.simulation import DegradationSpec, degrade, shepp_logan
from sik.solvers import SolverConfig, Strategy, solve

log = logging.getLogger("sik")

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3

# Best hyperparameters reported for the 256x256, sigma = 1e-2 experiment.
PAPER_SETTINGS = {
    Strategy.ISTA: {"beta": 1e-3},
    Strategy.WLP: {"beta": 1e-5, "delta": 1e-3},
    Strategy.NW4: {"beta": 1e-5, "delta": 1e-3},
    Strategy.IRL1: {"beta": 1e-5, "delta": 1e-3},
    Strategy.ERIWSTA: {"beta": 1e2, "gamma": 1e-2},
}


class UsageError(Exception):
    pass


def _emit(**pairs):
    for k, v in pairs.items():
        print(f"{k}={v}")


def _with_suffix(prefix: Path, suffix: str) -> Path:
    return prefix.with_name(prefix.name + suffix)


def _ensure_parent(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)


def cmd_phantom(args) -> int:
    if args.size < 16:
        raise UsageError(f"--size must be >= 16, got {args.size}")
    out = Path(args.out)
    _ensure_parent(out)
    img = shepp_logan(args.size, args.size, modified=args.modified)
    outputs, scaling = write_image(out, img)
    manifest = _with_suffix(out, ".manifest.json")
    write_manifest(
        manifest,
        "phantom",
        args.argv,
        {"size": args.size, "modified": args.modified},
        {},
        outputs,
        {},
        {"pgm_scaling": scaling},
    )
    _emit(csv=outputs[0], pgm=outputs[1], manifest=manifest)
    return EXIT_OK


def cmd_degrade(args) -> int:
    try:
        spec = DegradationSpec(args.kernel, args.boundary, args.sigma, args.seed)
    except ValueError as err:
        raise UsageError(str(err)) from None
    img = read_image(args.input)
    if min(img.shape) < args.kernel:
        raise UsageError(f"image {img.shape} is smaller than the {args.kernel}x{args.kernel} kernel")
    out = Path(args.out)
    _ensure_parent(out)
    degraded = degrade(img, spec)
    outputs, scaling = write_image(out, degraded)
    manifest = _with_suffix(out, ".manifest.json")
    write_manifest(
        manifest,
        "degrade",
        args.argv,
        {"kernel_size": spec.kernel_size, "boundary": spec.boundary, "sigma": spec.sigma},
        {"image": args.input},
        outputs,
        {"noise": spec.seed},
        {"pgm_scaling": scaling, "rng": "numpy.random.default_rng (PCG64)"},
    )
    _emit(csv=outputs[0], pgm=outputs[1], manifest=manifest)
    return EXIT_OK


def _solver_config(args) -> SolverConfig:
    strategy = Strategy(args.strategy)
    if args.gamma is not None and not strategy.uses_gamma:
        raise UsageError(f"--gamma does not apply to {strategy}")
    if args.delta is not None and not strategy.uses_delta:
        raise UsageError(f"--delta does not apply to {strategy}")
    if args.p is not None and not strategy.uses_p:
        raise UsageError(f"--p does not apply to {strategy}")
    if strategy.uses_gamma and args.gamma is None:
        raise UsageError(f"--gamma is required for {strategy}")
    if strategy.uses_delta and args.delta is None:
        raise UsageError(f"--delta is required for {strategy}")
    try:
        return SolverConfig(
            strategy=strategy,
            beta=args.beta,
            gamma=args.gamma if args.gamma is not None else 1.0,
            delta=args.delta if args.delta is not None else 1.0,
            p=args.p if args.p is not None else 0.5,
            max_iters=args.iters,
            rel_change_tol=args.tol,
            seed=args.seed,
            x0=args.x0,
        )
    except ValueError as err:
        raise UsageError(str(err)) from None


def cmd_restore(args) -> int:
    config = _solver_config(args)
    if args.trace_stride < 1:
        raise UsageError("--trace-stride must be >= 1")
    observed = read_image(args.input)
    truth = read_image(args.truth) if args.truth else None
    if truth is not None and truth.shape != observed.shape:
        raise UsageError(f"truth shape {truth.shape} differs from input {observed.shape}")
    try:
        dp = build_problem(observed, truth, args.kernel, args.boundary, args.levels, seed=args.seed)
    except ValueError as err:
        raise UsageError(str(err)) from None

    out = Path(args.out)
    _ensure_parent(out)
    trace_path = _with_suffix(out, ".trace.csv")
    manifest = _with_suffix(out, ".manifest.json")
    run_config = {
        **config.as_dict(),
        "kernel_size": args.kernel,
        "boundary": args.boundary,
        "levels": args.levels,
        "lipschitz": dp.L,
        "trace_stride": args.trace_stride,
    }
    inputs = {"observed": args.input}
    if args.truth:
        inputs["truth"] = args.truth

    try:
        res = solve(dp.problem, config, truth=truth, L=dp.L, trace_stride=args.trace_stride)
    except DivergenceError as err:
        trace_path.write_text(err.trace.to_csv())
        write_manifest(manifest, "restore", args.argv, run_config, inputs, [trace_path],
                       {"power_iteration": args.seed}, {"status": "diverged"})
        print(f"error: {err}", file=sys.stderr)
        _emit(status="diverged", iterations=len(err.trace))
        return EXIT_DIVERGED

    img = dp.image(res.x)
    outputs, scaling = write_image(out, img)
    trace_path.write_text(res.trace.to_csv())
    prof = extract_profiles(img)
    columns = {"restored_row": prof["central_row"], "restored_col": prof["central_col"]}
    if truth is not None:
        tprof = extract_profiles(truth)
        columns.update(truth_row=tprof["central_row"], truth_col=tprof["central_col"])
    profiles_path = write_profiles_csv(_with_suffix(out, ".profiles.csv"), columns)
    outputs += [trace_path, profiles_path]
    write_manifest(manifest, "restore", args.argv, run_config, inputs, outputs,
                   {"power_iteration": args.seed}, {"pgm_scaling": scaling, "status": "ok"})

    cost = config.cost(res.x, config.weights(res.x), dp.problem)
    _emit(iterations=res.iterations, cost=repr(cost.total), fidelity=repr(cost.fidelity))
    if truth is not None:
        _emit(mae=repr(mae(img, truth)))
    _emit(output=outputs[0], manifest=manifest)
    return EXIT_OK


def _load_sweep_config(args) -> tuple[SweepConfig, str]:
    if args.preset:
        return parse_config(DESK_PRESET), "preset:desk"
    if not args.config:
        raise UsageError("sweep needs --config or --preset")
    text = Path(args.config).read_text()
    return parse_config(text), args.config


def cmd_sweep(args) -> int:
    try:
        cfg, source = _load_sweep_config(args)
    except ConfigError as err:
        raise UsageError(f"config error: {err}") from None
    workers = args.workers or cfg.workers
    spec = DegradationSpec(cfg.kernel, cfg.boundary, cfg.sigma, cfg.seed)
    if cfg.observed:
        observed, truth = read_image(cfg.observed), read_image(cfg.truth)
        dp = build_problem(observed, truth, cfg.kernel, cfg.boundary, cfg.levels, seed=cfg.seed)
    else:
        dp = phantom_problem(cfg.size, spec, cfg.levels, cfg.modified)
    grid = SweepGrid(cfg.beta, cfg.gamma, cfg.delta, cfg.strategies, cfg.iters, cfg.p)

    log.info("running %d cells", len(grid.cells()))
    result = run_sweep(
        dp, grid, workers=workers, trace_stride=cfg.trace_stride,
        metadata={"degradation": {"kernel_size": spec.kernel_size, "boundary": spec.boundary,
                                  "sigma": spec.sigma, "seed": spec.seed},
                  "config_source": source},
    )
    out = Path(args.out)
    outputs = result.write(out, timing=cfg.record_timing)
    write_manifest(out / "manifest.json", "sweep", args.argv, cfg.as_dict(), {"config": source},
                   [p.relative_to(out) for p in outputs], {"noise": cfg.seed, "power_iteration": cfg.seed})
    _emit(cells=len(result.cells), observed_mae=repr(result.metadata["observed_mae"]))
    for s, c in result.best().items():
        pairs = {f"best.{s}.beta": repr(c.beta)}
        if c.gamma is not None:
            pairs[f"best.{s}.gamma"] = repr(c.gamma)
        if c.delta is not None:
            pairs[f"best.{s}.delta"] = repr(c.delta)
        pairs[f"best.{s}.final_mae"] = repr(c.final_mae)
        _emit(**pairs)
    _emit(results=out / "results.csv")
    return EXIT_OK


def _read_best_cells(path) -> dict:
    best = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["diverged"] == "1" or not row["final_mae"]:
                continue
            s = Strategy(row["strategy"])
            m = float(row["final_mae"])
            if s not in best or m < best[s][0]:
                settings = {"beta": float(row["beta"])}
                if row["gamma"]:
                    settings["gamma"] = float(row["gamma"])
                if row["delta"]:
                    settings["delta"] = float(row["delta"])
                best[s] = (m, settings)
    return {s: v[1] for s, v in best.items()}


def cmd_compare(args) -> int:
    settings = {s: dict(v) for s, v in PAPER_SETTINGS.items()}
    if args.from_sweep:
        settings.update(_read_best_cells(args.from_sweep))
    for item in args.param or []:
        try:
            lhs, value = item.split("=", 1)
            name, key = lhs.split(".", 1)
            settings.setdefault(Strategy(name), {})[key] = float(value)
        except ValueError:
            raise UsageError(f"--param expects strategy.key=value, got {item!r}") from None
    strategies = [Strategy(s) for s in args.strategies]

    observed = read_image(args.input)
    truth = read_image(args.truth)
    if truth.shape != observed.shape:
        raise UsageError(f"truth shape {truth.shape} differs from input {observed.shape}")
    dp = build_problem(observed, truth, args.kernel, args.boundary, args.levels, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    outputs = []
    tprof = extract_profiles(truth)
    rows = {"truth_row": tprof["central_row"]}
    cols = {"truth_col": tprof["central_col"]}
    summary = ["strategy,beta,gamma,delta,final_mae,iters_to_5pct"]
    status = EXIT_OK
    for s in strategies:
        st = settings.get(s, {})
        try:
            config = SolverConfig(strategy=s, beta=st.get("beta", 1e-3), gamma=st.get("gamma", 1e-2),
                                  delta=st.get("delta", 1e-3), p=args.p, max_iters=args.iters,
                                  seed=args.seed)
        except ValueError as err:
            raise UsageError(f"{s}: {err}") from None
        try:
            res = solve(dp.problem, config, truth=truth, L=dp.L)
        except DivergenceError as err:
            print(f"error: {s} diverged: {err}", file=sys.stderr)
            path = out / f"{s}.trace.csv"
            path.write_text(err.trace.to_csv())
            outputs.append(path)
            status = EXIT_DIVERGED
            continue
        img = dp.image(res.x)
        paths, _ = write_image(out / f"{s}", img)
        path = out / f"{s}.trace.csv"
        path.write_text(res.trace.to_csv())
        outputs += paths + [path]
        prof = extract_profiles(img)
        rows[f"{s}_row"] = prof["central_row"]
        cols[f"{s}_col"] = prof["central_col"]
        final = mae(img, truth)
        summary.append(",".join([
            s.value, repr(config.beta),
            repr(config.gamma) if s.uses_gamma else "",
            repr(config.delta) if s.uses_delta else "",
            repr(final), str(iterations_to_within(res.trace.costs)),
        ]))
        _emit(**{f"{s}.final_mae": repr(final)})
    outputs.append(write_profiles_csv(out / "profiles_row.csv", rows))
    outputs.append(write_profiles_csv(out / "profiles_col.csv", cols))
    summary_path = out / "summary.csv"
    summary_path.write_text("\n".join(summary) + "\n")
    outputs.append(summary_path)
    write_manifest(out / "manifest.json", "compare", args.argv,
                   {"settings": {s.value: v for s, v in settings.items()}, "iters": args.iters,
                    "kernel_size": args.kernel, "boundary": args.boundary, "levels": args.levels,
                    "p": args.p, "lipschitz": dp.L},
                   {"observed": args.input, "truth": args.truth},
                   [p.relative_to(out) for p in outputs], {"power_iteration": args.seed})
    _emit(observed_mae=repr(mae(observed, truth)), summary=summary_path)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sik", description="Sparse deblurring with weighted shrinkage-thresholding."
    )
    parser.add_argument("--version", action="version", version=f"sik {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="render a Shepp-Logan phantom")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--modified", action="store_true", help="high-contrast variant")
    p.set_defaults(func=cmd_phantom)

    def add_geometry(p):
        p.add_argument("--kernel", type=int, default=5, help="odd blur kernel size")
        p.add_argument("--boundary", choices=BOUNDARIES, default="circular")

    p = sub.add_parser("degrade", help="blur an image and add Gaussian noise")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--sigma", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output prefix")
    add_geometry(p)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("restore", help="deblur an image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--truth", help="ground truth for MAE")
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default="eriwsta")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--gamma", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=0.0, help="relative-change stopping tolerance")
    p.add_argument("--x0", choices=("zero", "adjoint"), default="zero")
    p.add_argument("--seed", type=int, default=0, help="power-iteration seed")
    p.add_argument("--levels", type=int, default=2, help="Haar decomposition levels")
    p.add_argument("--trace-stride", type=int, default=1)
    p.add_argument("--out", required=True, help="output prefix")
    add_geometry(p)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("sweep", help="hyperparameter sweep from a config file")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config")
    src.add_argument("--preset", choices=("desk",))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, help="override SIK_WORKERS / config")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="run every strategy on one observation")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--strategies", nargs="+", default=[s.value for s in Strategy],
                   choices=[s.value for s in Strategy])
    p.add_argument("--from-sweep", help="results.csv whose best cells set the hyperparameters")
    p.add_argument("--param", action="append", metavar="STRATEGY.KEY=VALUE")
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--iters", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--levels", type=int, default=2)
    p.add_argument("--out", required=True, help="output directory")
    add_geometry(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"sik {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ParseError) as err:
        print(f"sik {args.command}: error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
