"""Command-line entry point: ``fox <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import regression
from ._files import atomic_write, write_csv
from .annealer import AnnealConfig, InfeasibleConstraint, search, search_all_sizes
from .data_io import generate_synthetic, load_bank, load_dataset, save_bank, save_dataset
from .oracle import PlantedModel, brute_force_search
from .predictor_bank import (DEFAULT_CAP, DEFAULT_FLOOR, guidance_weights, predict_performance,
                             suggest_adjustment, train_bank)
from .search_space import Architecture, ParamWeights, load_spec, validate

log = logging.getLogger("foxnas")


def _default_seed() -> int:
    raw = os.environ.get("FOX_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"fox: FOX_SEED must be an integer, got {raw!r}")


def _describe(arch: Architecture) -> str:
    lines = [f"  image size: {arch.image_size}"]
    for j, u in enumerate(arch.units, start=1):
        lines.append(f"  unit {j}: depth {u.depth}, kernels {list(u.active_kernels)}, "
                     f"expansions {list(u.active_expansions)}")
    return "\n".join(lines)


def _anneal_config(args) -> AnnealConfig:
    return AnnealConfig(initial_temperature=args.t0, boltzmann=args.k,
                        rejections_per_cool=args.n, cooling_factor=args.alpha,
                        min_temperature=args.t_min, max_evaluations=args.max_evals,
                        phase_switch_count=args.phase_switch, seed=args.seed,
                        literal_acceptance=args.literal_acceptance)


def cmd_gen(args) -> int:
    spec = load_spec(args.spec)
    rng = np.random.default_rng(args.seed)
    if args.planted == "random":
        planted = PlantedModel.random(spec, rng, seed=args.seed)
    else:
        planted = PlantedModel.default(spec, rng, seed=args.seed)
    planted = planted.with_noise(args.noise_acc, args.noise_lat)
    records = generate_synthetic(spec, planted, args.per_size, rng)
    save_dataset(args.out, records, spec)
    if args.truth:
        atomic_write(args.truth, planted.to_json())
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _write_report(report: Path, bank) -> None:
    report.mkdir(parents=True, exist_ok=True)
    summary = []
    for size in bank.trained_sizes:
        pair = bank.pair(size)
        for tag, model, diag in (("accuracy", pair.accuracy, pair.accuracy_diagnostics),
                                 ("latency", pair.latency, pair.latency_diagnostics)):
            stem = report / f"{tag}_{size}"
            regression.write_coefficient_csv(f"{stem}_coefficients.csv", model)
            if diag is not None:
                regression.write_residual_csv(f"{stem}_residuals.csv", diag)
                regression.write_qq_csv(f"{stem}_qq.csv", diag)
            summary.append([size, tag, model.n, model.k, repr(model.r_squared),
                            repr(model.adjusted_r_squared), repr(model.sse),
                            repr(diag.max_abs_residual if diag is not None else float("nan"))])
    write_csv(report / "summary.csv", ["image_size", "target", "n", "k", "r_squared",
                                       "adjusted_r_squared", "sse", "max_abs_residual"], summary)


def cmd_fit(args) -> int:
    spec = load_spec(args.spec)
    records = load_dataset(args.data, spec)
    bank = train_bank(records, spec)
    save_bank(args.out, bank)
    if args.report:
        _write_report(Path(args.report), bank)
    for size in bank.trained_sizes:
        p = bank.pair(size)
        print(f"image size {size}: n={p.accuracy.n}  accuracy adj R^2={p.accuracy.adjusted_r_squared:.4f}"
              f"  latency adj R^2={p.latency.adjusted_r_squared:.4f}")
    if bank.untrained_sizes:
        print(f"untrained image sizes: {bank.untrained_sizes}")
    return 0


def cmd_inspect(args) -> int:
    spec = load_spec(args.spec)
    bank = load_bank(args.bank, spec)
    sizes = [args.image_size] if args.image_size else bank.trained_sizes
    for size in sizes:
        pair = bank.pair(size)
        for model in (pair.accuracy, pair.latency):
            t = regression.t_values(model)
            p = regression.p_values(t, model.df)
            print(f"== image size {size} / {model.target_label}: n={model.n} k={model.k} "
                  f"R^2={model.r_squared:.4f} adj R^2={model.adjusted_r_squared:.4f}")
            print(f"{'term':<14}{'coef':>12}{'std err':>12}{'t':>10}{'p':>11}")
            for row in zip(model.names, model.coefficients, model.standard_errors, t, p):
                flag = " *" if row[4] < regression.SIGNIFICANCE else ""
                print(f"{row[0]:<14}{row[1]:>12.5g}{row[2]:>12.4g}{row[3]:>10.3g}{row[4]:>11.3g}{flag}")
    return 0


def _guidance(args) -> dict:
    return {"floor": args.guidance_floor,
            "cap": args.guidance_cap if args.guidance_cap > 0 else None}


def cmd_search(args) -> int:
    spec = load_spec(args.spec)
    bank = load_bank(args.bank, spec)
    config = _anneal_config(args)
    if args.image_size is None:
        result, per_size = search_all_sizes(bank, spec, args.latency, config, **_guidance(args))
        for size, r in per_size.items():
            state = "infeasible" if r is None else f"acc {r.accuracy:.4f} % / lat {r.latency:.4f} ms"
            print(f"image size {size}: {state}")
    else:
        weights = guidance_weights(bank, spec, args.image_size, **_guidance(args))
        result = search(bank, spec, args.latency, config, args.image_size, weights=weights)
    print(f"best architecture {result.architecture.key()}")
    print(_describe(result.architecture))
    print(f"predicted accuracy {result.accuracy:.6f} %  latency {result.latency:.6f} ms  "
          f"({result.trace.evaluations} evaluations)")
    if args.trace:
        result.trace.write_csv(args.trace)
    return 0


def cmd_brute(args) -> int:
    spec = load_spec(args.spec)
    bank = load_bank(args.bank, spec)
    res = brute_force_search(bank, spec, args.latency, args.image_size, cap=args.cap)
    if res.infeasible:
        print(f"constraint infeasible: minimum predicted latency {res.latency:.6f} ms "
              f"over {res.evaluated} architectures")
        return 1
    print(f"optimal architecture {res.architecture.key()}")
    print(_describe(res.architecture))
    print(f"predicted accuracy {res.accuracy:.6f} %  latency {res.latency:.6f} ms  "
          f"({res.feasible} of {res.evaluated} feasible)")
    return 0


def cmd_adjust(args) -> int:
    spec = load_spec(args.spec)
    bank = load_bank(args.bank, spec)
    arch = Architecture.from_key(spec, args.arch)
    problems = validate(arch, spec)
    if problems:
        raise ValueError("; ".join(problems))
    report = suggest_adjustment(bank, arch, args.latency)
    acc, lat = predict_performance(bank, arch)
    print(f"predicted accuracy {acc:.4f} %  latency {lat:.4f} ms  budget {args.latency} ms")
    if not len(report) and not report.insufficient:
        print("within budget; no adjustment needed")
        return 0
    if report.insufficient:
        print("insufficient single-step moves: no single change closes the gap")
    print(f"{'slot':<12}{'change':>10}{'d latency':>12}{'d accuracy':>12}{'p lat':>10}{'p acc':>10}")
    for a in report.adjustments[: args.top]:
        print(f"{a.slot:<12}{f'{a.old_value}->{a.new_value}':>10}{a.latency_delta:>12.4f}"
              f"{a.accuracy_delta:>12.4f}{a.latency_p:>10.2g}{a.accuracy_p:>10.2g}")
    return 0


def cmd_compare(args) -> int:
    spec = load_spec(args.spec)
    bank = load_bank(args.bank, spec)
    config = _anneal_config(args)
    guided = guidance_weights(bank, spec, args.image_size, **_guidance(args))
    uniform = (ParamWeights.uniform(spec), ParamWeights.uniform(spec))
    out = {}
    for label, weights, path in (("guided", guided, args.trace_guided),
                                 ("uniform", uniform, args.trace_uniform)):
        res = search(bank, spec, args.latency, config, args.image_size, weights=weights)
        first = res.trace.evaluations_to_reach(res.accuracy)
        out[label] = res
        print(f"{label:>8}: best acc {res.accuracy:.6f} %  lat {res.latency:.6f} ms  "
              f"first reached after {first} of {res.trace.evaluations} evaluations")
        if path:
            res.trace.write_csv(path)
    return 0


def _add_anneal_flags(p) -> None:
    d = AnnealConfig()
    p.add_argument("--t0", type=float, default=d.initial_temperature, help="initial temperature")
    p.add_argument("--k", type=float, default=d.boltzmann, help="Boltzmann constant")
    p.add_argument("--n", type=int, default=d.rejections_per_cool, help="cooling gate period")
    p.add_argument("--alpha", type=float, default=d.cooling_factor, help="cooling factor")
    p.add_argument("--t-min", type=float, default=d.min_temperature, help="stopping temperature")
    p.add_argument("--max-evals", type=int, default=None, help="predictor evaluation budget")
    p.add_argument("--phase-switch", type=int, default=None,
                   help="iteration at which guided weights give way to uniform (default 2n)")
    p.add_argument("--guidance-floor", type=float, default=DEFAULT_FLOOR,
                   help="smallest early-phase slot weight")
    p.add_argument("--guidance-cap", type=float, default=DEFAULT_CAP,
                   help="largest early-phase slot weight (0 disables the cap)")
    p.add_argument("--literal-acceptance", action="store_true",
                   help="use the inverted acceptance test r > exp(-delta/kT) (ablation only)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fox", description="Explainable NAS predictors and "
                                     "latency-constrained simulated-annealing search.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    seed = _default_seed()

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--spec", default="cpu", help="preset name (cpu, tpu) or JSON config path")
        p.add_argument("--seed", type=int, default=seed, help="random seed (default $FOX_SEED or 0)")
        p.set_defaults(func=func)
        return p

    p = add("gen", cmd_gen, "generate a synthetic measurement dataset")
    p.add_argument("--per-size", type=int, default=300)
    p.add_argument("--noise-acc", type=float, default=0.1)
    p.add_argument("--noise-lat", type=float, default=0.5)
    p.add_argument("--planted", choices=["default", "random"], default="default")
    p.add_argument("--truth", help="also write the planted model as JSON")
    p.add_argument("--out", required=True)

    p = add("fit", cmd_fit, "train the predictor bank from a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="directory for coefficient/residual/Q-Q CSVs")

    p = add("inspect", cmd_inspect, "print coefficient, t, p and R^2 tables")
    p.add_argument("--bank", required=True)
    p.add_argument("--image-size", type=int)

    p = add("search", cmd_search, "simulated-annealing search under a latency limit")
    p.add_argument("--bank", required=True)
    p.add_argument("--latency", type=float, required=True)
    p.add_argument("--image-size", type=int)
    p.add_argument("--trace")
    _add_anneal_flags(p)

    p = add("brute", cmd_brute, "exhaustive search (small spaces only)")
    p.add_argument("--bank", required=True)
    p.add_argument("--latency", type=float, required=True)
    p.add_argument("--image-size", type=int, required=True)
    p.add_argument("--cap", type=int, default=10**6)

    p = add("adjust", cmd_adjust, "suggest single-step changes to meet a latency budget")
    p.add_argument("--bank", required=True)
    p.add_argument("--latency", type=float, required=True)
    p.add_argument("--arch", required=True, help="slot values joined by '-' (as printed by search)")
    p.add_argument("--top", type=int, default=10)

    p = add("compare", cmd_compare, "guided vs uniform-weight search with identical seeds")
    p.add_argument("--bank", required=True)
    p.add_argument("--latency", type=float, required=True)
    p.add_argument("--image-size", type=int, required=True)
    p.add_argument("--trace-guided")
    p.add_argument("--trace-uniform")
    _add_anneal_flags(p)
    return parser


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, InfeasibleConstraint, OSError, KeyError) as exc:
        print(f"fox {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
