"""
RACR-MIL - Command-Line Entry Point

Rank-aware, context-reasoning multiple instance learning for ordinal tumour
grading. Every stage of the pipeline is one subcommand:

    racr synth      Generate a planted synthetic dataset
    racr ingest     Turn an RGB raster into a bag via a feature provider
    racr graph      Build and cache hybrid latent/spatial graphs
    racr train      Train one cross-validation fold
    racr eval       Score a checkpoint (or every fold checkpoint) on its test split
    racr heatmap    Attention and probability heatmaps of one bag
    racr gradcheck  Finite-difference check of every parameter gradient
    racr ablate     Graph / loss ablations over several seeds

Usage:
    python main.py <command> --help
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from bagio import (
    GradeScheme,
    SynthSpec,
    generate_synthetic_dataset,
    load_dataset,
    read_bag,
    stratified_kfold,
    write_bag,
    write_dataset,
)
from graphbuild import build_graph_cache, build_hybrid_graph
from graphbuild.visualize import draw_latent_refinement
from ingest import CommandFeatureProvider, IngestConfig, decode_image, image_to_bag
from trainer import ConfigError, TrainConfig, resolve_config, run_gradcheck, train
from trainer.config import DATASET_PRESETS, GRAPH_VARIANTS
from evalkit import (
    VARIANTS,
    EvalOptions,
    EvalReport,
    evaluate,
    evaluate_folds,
    find_checkpoints,
    heatmap_for_bag,
    run_ablation,
)

logger = logging.getLogger("racr")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
# Domain errors derive from ValueError or RuntimeError.
LIBRARY_ERRORS = (ValueError, RuntimeError, OSError)


# ============================================================================
# CONSOLE OUTPUT
# ============================================================================

def print_banner(title: str):
    print("\n" + "=" * 80)
    print(f"  {title}")
    print("=" * 80)


def print_report(report: EvalReport, title: str):
    print_banner(title)
    print(f"Bags evaluated: {report.bag_count}")
    for name, value in report.scalar_metrics().items():
        print(f"  {name:<28} {value:.4f}")
    if report.kappa_degenerate or report.mcc_degenerate:
        print("  (kappa / MCC degenerate on this split, reported as 0)")
    print("\nConfusion matrix (rows true, columns predicted):")
    width = max(len(n) for n in report.class_names) + 2
    print(" " * width + "".join(f"{n:>{width}}" for n in report.class_names))
    for name, row in zip(report.class_names, report.confusion):
        print(f"{name:<{width}}" + "".join(f"{int(v):>{width}}" for v in row))


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_synth(args) -> int:
    spec = SynthSpec.from_json(args.spec) if args.spec else SynthSpec().validate()
    seed = args.seed if args.seed is not None else 0
    bags = generate_synthetic_dataset(spec, seed=seed, jobs=args.jobs)
    write_dataset(bags, args.out)
    print_banner("SYNTHETIC DATASET")
    print(f"Bags written: {len(bags)} to {args.out} (seed {seed})")
    for code, count in enumerate(spec.class_counts):
        print(f"  grade {code}: {count} bags")
    return 0


def cmd_ingest(args) -> int:
    config = IngestConfig.from_json(args.config) if args.config else IngestConfig()
    if args.tile_size is not None:
        config.tile_size = args.tile_size
    scheme = GradeScheme(args.scheme)
    bag_id = args.bag_id or Path(args.image).stem
    provider = CommandFeatureProvider(args.provider_cmd, args.feature_dim)
    bag = image_to_bag(decode_image(args.image), bag_id, args.grade, provider, config, scheme)
    path = write_bag(bag, args.out)
    print_banner("INGEST")
    print(f"Bag {bag.bag_id}: {bag.num_patches} patches, d_f {bag.feature_dim}, written to {path}")
    return 0


def _graph_config(args) -> TrainConfig:
    return resolve_config(overrides={
        "alpha": args.alpha,
        "delta": args.delta,
        "top_m": args.topm,
        "k_latent": args.k_latent,
        "k_spatial": args.k_spatial,
        "weight_mode": args.weight_mode,
    })


def cmd_graph(args) -> int:
    bags = load_dataset(args.input)
    diffusion = _graph_config(args).diffusion_config()
    paths = build_graph_cache(bags, args.out, diffusion, args.jobs)
    print_banner("GRAPH CACHE")
    print(f"Graphs cached: {len(paths)} in {args.out}")
    if args.plot:
        for bag in bags:
            figure = Path(args.out) / "figures" / f"{bag.bag_id}_latent.png"
            draw_latent_refinement(bag, build_hybrid_graph(bag, diffusion), figure)
        print(f"Latent graph figures written to {Path(args.out) / 'figures'}")
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args.preset, args.graph_mode, args.config,
                         {"seed": args.seed, "max_epochs": args.epochs})
    bags = load_dataset(args.data)
    folds = stratified_kfold(bags, cfg.split_spec(), cfg.seed)
    if not 0 <= args.fold < len(folds):
        raise ConfigError(f"--fold {args.fold} outside [0, {len(folds) - 1}]")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.to_json(out / "config.json")

    result = train(bags, folds[args.fold], cfg, out, args.graphs, progress=not args.quiet)
    print_banner(f"TRAINING - FOLD {args.fold}")
    print(f"Best epoch:            {result.best_epoch}")
    print(f"Validation macro-F1:   {result.best_val_f1:.4f}")
    print(f"Epochs run:            {len(result.log)}")
    print(f"Checkpoint:            {result.checkpoint_dir}")
    return 0


def _parse_fold(value: str):
    if value == "all":
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"fold must be an integer or 'all', got {value!r}")


def cmd_eval(args) -> int:
    bags = load_dataset(args.data)
    options = EvalOptions(roi_mode=args.roi_mode, min_overlap=args.min_overlap, heatmaps=not args.no_heatmaps)
    checkpoints = find_checkpoints(args.checkpoint)
    if len(checkpoints) > 1:
        reports, summary = evaluate_folds(args.checkpoint, bags, args.out, args.graphs, options)
        for checkpoint, report in zip(checkpoints, reports):
            print_report(report, f"EVALUATION - {checkpoint.parent.name.upper()}")
        print_banner(f"FOLD AVERAGE OVER {len(reports)} CHECKPOINTS")
        for name, (mean, std) in summary.items():
            print(f"  {name:<28} {mean:.4f} +/- {std:.4f}")
        return 0

    all_bags = args.fold == "all"
    report = evaluate(checkpoints[0], bags, args.out, fold=None if all_bags else args.fold,
                      all_bags=all_bags, graph_cache=args.graphs, options=options)
    print_report(report, "EVALUATION")
    print(f"\nReport written to {args.out}")
    return 0


def cmd_heatmap(args) -> int:
    paths = heatmap_for_bag(args.checkpoint, read_bag(args.bag), args.out)
    print_banner("HEATMAPS")
    for path in paths:
        print(f"  {path}")
    return 0


def cmd_gradcheck(args) -> int:
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    if not modes:
        raise ConfigError("--modes names no loss mode")
    seed = args.seed if args.seed is not None else 0
    report = run_gradcheck(instances=args.instances, seed=seed, modes=modes)
    print_banner("GRADIENT CHECK")
    frame = report.to_frame()
    worst = frame.groupby(["mode", "name"])["max_rel_err"].max()
    for (mode, name), err in worst.items():
        print(f"  {mode:<8} {name:<40} max rel err {err:.2e}")
    print(f"\n{len(report.checks)} tensor checks: {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def cmd_ablate(args) -> int:
    base = resolve_config(args.preset, None, args.config, {"max_epochs": args.epochs})
    first = args.seed if args.seed is not None else base.seed
    bags = load_dataset(args.data)
    variants = args.variants.split(",") if args.variants else None
    result = run_ablation(bags, args.out, base, seeds=list(range(first, first + args.seeds)),
                          fold_index=args.fold, variants=variants, graph_cache=args.graphs,
                          jobs=args.jobs, progress=not args.quiet)
    print_banner("ABLATION")
    print(result.summary.to_string(float_format=lambda v: f"{v:.4f}"))
    print(f"\nF1 ordering dual+rank+div >= dual >= single >= none: "
          f"{'holds' if result.ordering_holds else 'violated'}")
    if result.attention_gain:
        print(f"Planted attention gain from ranking per seed: "
              f"{', '.join(f'{g:+.4f}' for g in result.attention_gain)} "
              f"(mean {result.mean_attention_gain:+.4f})")
    return 0


# ============================================================================
# ARGUMENT PARSING
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed of every random draw")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS, help="debug logging")
    common.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="warnings only, no progress bars")

    parser = argparse.ArgumentParser(prog="racr", description=__doc__.split("\n\n")[1], parents=[common],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("synth", parents=[common], help="generate a planted synthetic dataset")
    p.add_argument("--spec", type=Path, help="SynthSpec JSON (defaults when omitted)")
    p.add_argument("--out", type=Path, required=True, help="dataset directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="convert an RGB image into a bag")
    p.add_argument("--image", type=Path, required=True, help="PNG/PPM raster at working resolution")
    p.add_argument("--out", type=Path, required=True, help="dataset directory receiving the bag")
    p.add_argument("--grade", type=int, required=True, help="slide-level grade code")
    p.add_argument("--provider-cmd", required=True, help="feature extractor command line")
    p.add_argument("--feature-dim", type=int, required=True, help="d_f produced by the provider")
    p.add_argument("--bag-id", help="bag identifier (image stem by default)")
    p.add_argument("--config", type=Path, help="IngestConfig JSON")
    p.add_argument("--tile-size", type=int, help="tile edge in pixels")
    p.add_argument("--scheme", choices=[s.value for s in GradeScheme], default="skin")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("graph", parents=[common], help="build and cache hybrid graphs")
    p.add_argument("--in", dest="input", type=Path, required=True, help="dataset directory")
    p.add_argument("--out", type=Path, required=True, help="graph cache directory")
    p.add_argument("--alpha", type=float, help="PageRank restart probability")
    p.add_argument("--delta", type=float, help="diffused weight threshold")
    p.add_argument("--topm", type=int, help="neighbours kept per node after diffusion")
    p.add_argument("--k-latent", type=int, help="initial latent kNN size")
    p.add_argument("--k-spatial", type=int, help="spatial neighbour count")
    p.add_argument("--weight-mode", choices=["similarity", "distance"])
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p.add_argument("--plot", action="store_true", help="draw latent graph refinement figures")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("train", parents=[common], help="train one cross-validation fold")
    p.add_argument("--config", type=Path, help="TrainConfig JSON")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--fold", type=int, required=True, help="fold index")
    p.add_argument("--out", type=Path, required=True, help="run directory")
    p.add_argument("--preset", choices=sorted(DATASET_PRESETS), help="dataset hyperparameter preset")
    p.add_argument("--graph-mode", choices=GRAPH_VARIANTS, help="graph variant")
    p.add_argument("--epochs", type=int, help="maximum epochs")
    p.add_argument("--graphs", type=Path, help="graph cache directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint or a set of fold runs")
    p.add_argument("--checkpoint", type=Path, required=True,
                   help="checkpoint, run directory, or parent of several run directories")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--out", type=Path, required=True, help="report directory")
    p.add_argument("--fold", type=_parse_fold, help="test fold to score, or 'all' (default: training fold)")
    p.add_argument("--graphs", type=Path, help="graph cache directory")
    p.add_argument("--roi-mode", choices=["max_non_normal", "predicted"], default="max_non_normal")
    p.add_argument("--min-overlap", type=float, default=0.0, help="region fraction an ROI must cover")
    p.add_argument("--no-heatmaps", action="store_true", help="skip per-bag figures")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("heatmap", parents=[common], help="heatmaps of one bag")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--bag", type=Path, required=True, help="bag directory")
    p.add_argument("--out", type=Path, required=True, help="figure directory")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--instances", type=int, default=5, help="random instances per loss mode")
    p.add_argument("--modes", default="default,literal", help="comma-separated loss modes")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", parents=[common], help="graph and loss ablations over seeds")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--out", type=Path, required=True, help="ablation directory")
    p.add_argument("--seeds", type=int, default=3, help="number of consecutive seeds")
    p.add_argument("--fold", type=int, default=0, help="fold index")
    p.add_argument("--epochs", type=int, help="maximum epochs")
    p.add_argument("--preset", choices=sorted(DATASET_PRESETS))
    p.add_argument("--config", type=Path, help="TrainConfig JSON")
    p.add_argument("--variants", help=f"comma-separated subset of {','.join(VARIANTS)}")
    p.add_argument("--graphs", type=Path, help="graph cache directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel graph workers")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for flag in ("seed", "verbose", "quiet"):
        if not hasattr(args, flag):
            setattr(args, flag, None if flag == "seed" else False)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)

    try:
        return args.func(args)
    except LIBRARY_ERRORS as exc:
        logger.error("%s failed: %s", args.command, exc)
        logger.debug("traceback", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
