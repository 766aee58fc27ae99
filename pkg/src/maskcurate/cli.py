"""Command-line front end.

Subcommands: ``gen``, ``stats``, ``loss``, ``filter``, ``hardness``,
``manifest``, ``plan``, ``report``. Exit codes: 0 success, 1 domain or
validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from maskcurate.assemble import (
    SamplingManifest,
    build_manifest,
    joint_training_plan,
    pretrain_plan,
)
from maskcurate.core_io import (
    CurationConfig,
    list_mask_ids,
    load_config_file,
    read_prob_map,
    read_label_map,
    scan_dataset,
    write_loss_map,
)
from maskcurate.errors import ConfigError, CurationError
from maskcurate.filtering import FilterReport, filter_dataset
from maskcurate.hardness import load_csv, save_csv, score_masks
from maskcurate.report import report
from maskcurate.stats import DEFAULT_EPSILON, ClassStatsTable, compute_loss_map, compute_stats
from maskcurate.synthgen import SceneSpec, scene_suite, write_dataset

logger = logging.getLogger("maskcurate")


def _resolve_config(args: argparse.Namespace, stats_classes: Optional[int] = None,
                    fallback_classes: Optional[int] = None) -> CurationConfig:
    """Config file values, overridden by any flags given on the command line.

    ``stats_classes`` must agree with any explicit K; ``fallback_classes`` is
    used only when K is given nowhere.
    """
    overrides = {
        "num_classes": getattr(args, "classes", None),
        "alpha": getattr(args, "alpha", None),
        "n_max": getattr(args, "n_max", None),
        "ignore_value": getattr(args, "ignore_value", None),
        "base_seed": getattr(args, "seed", None),
    }
    data = load_config_file(args.config) if args.config else {}
    data.update({k: v for k, v in overrides.items() if v is not None})
    if "num_classes" not in data:
        default = stats_classes if stats_classes is not None else fallback_classes
        if default is None:
            raise ConfigError("number of classes unknown: pass --classes or a config file")
        data["num_classes"] = default
    elif stats_classes is not None and data["num_classes"] != stats_classes:
        raise ConfigError(f"K={data['num_classes']} disagrees with the stats table (K={stats_classes})")
    return CurationConfig.from_mapping(data)


def cmd_gen(args: argparse.Namespace) -> None:
    base = SceneSpec(
        width=args.width or args.size,
        height=args.height or args.size,
        num_classes=args.classes or 8,
        noise_fraction=args.noise_fraction,
        noise_multiplier=args.noise_multiplier,
        seed=args.seed or 0,
    )
    ids = write_dataset(args.out, scene_suite(args.scenes, base), with_probs=args.with_probs,
                        with_losses=not args.no_losses)
    logger.info("wrote %d scenes to %s", len(ids), args.out)


def cmd_stats(args: argparse.Namespace) -> None:
    config = _resolve_config(args)
    index = scan_dataset(args.root, config)
    table = compute_stats(index, config, provenance=args.provenance, epsilon=args.epsilon,
                          deterministic=args.deterministic)
    table.save(args.out)


def cmd_loss(args: argparse.Namespace) -> None:
    config = _resolve_config(args)
    out_root = Path(args.out or args.root)
    (out_root / "losses").mkdir(parents=True, exist_ok=True)
    probs_dir = Path(args.root) / "probs"
    for sid in list_mask_ids(args.root):
        prob_path = probs_dir / f"{sid}.npy"
        if not prob_path.is_file():
            raise CurationError(f"sample {sid!r}: missing {prob_path}")
        labels = read_label_map(Path(args.root) / "masks" / f"{sid}.png", config)
        probs = read_prob_map(prob_path, labels.shape, config.num_classes)
        write_loss_map(compute_loss_map(probs, labels, args.epsilon, config.ignore_value),
                       out_root / "losses" / f"{sid}.npy")


def cmd_filter(args: argparse.Namespace) -> None:
    stats = ClassStatsTable.load(args.stats)
    config = _resolve_config(args, stats.num_classes)
    index = scan_dataset(args.root, config)
    out = Path(args.out)
    result = filter_dataset(index, stats, config.alpha, out, config, epsilon=args.epsilon)
    result.save(out / "report.json")


def cmd_hardness(args: argparse.Namespace) -> None:
    stats = ClassStatsTable.load(args.stats)
    config = _resolve_config(args, stats.num_classes)
    masks = [(sid, Path(args.root) / "masks" / f"{sid}.png") for sid in list_mask_ids(args.root)]
    ranked = score_masks(masks, stats, config, mean_per_pixel=args.mean_per_pixel)
    save_csv(ranked, args.out)


def cmd_manifest(args: argparse.Namespace) -> None:
    ranked, _ = load_csv(args.hardness)
    config = _resolve_config(args, fallback_classes=1)
    manifest = build_manifest(ranked, config)
    manifest.save(args.out)
    if args.table_out:
        save_csv(ranked, args.table_out, [e.count for e in manifest.entries])


def _real_ids(args: argparse.Namespace) -> list[str]:
    if args.real_ids:
        with open(args.real_ids, "r", encoding="utf-8") as fh:
            return [line.strip() for line in fh if line.strip()]
    if args.root:
        return list_mask_ids(args.root)
    raise ConfigError("plan needs --root or --real-ids")


def cmd_plan(args: argparse.Namespace) -> None:
    manifest = SamplingManifest.load(args.manifest)
    real = _real_ids(args)
    if args.mode == "joint":
        plan = joint_training_plan(real, manifest, shuffle_seed=args.seed or 0)
    else:
        plan = pretrain_plan(real, manifest)
    plan.save(args.out)


def cmd_report(args: argparse.Namespace) -> None:
    stats = ClassStatsTable.load(args.stats) if args.stats else None
    ranked = load_csv(args.hardness)[0] if args.hardness else None
    freport = FilterReport.load(args.filter_report) if args.filter_report else None
    if stats is None and ranked is None and freport is None:
        raise ConfigError("report needs at least one of --stats, --hardness, --filter-report")
    report(stats, ranked, freport, args.out, n_max=args.n_max or 20)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with CurationConfig fields; flags override it")
    common.add_argument("--classes", type=int, help="number of classes K")
    common.add_argument("--ignore-value", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--deterministic", action="store_true",
                        help="merge per-image statistics in sample-id order")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="maskcurate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="write a synthetic dataset with planted noise")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=64)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--noise-fraction", type=float, default=0.03)
    p.add_argument("--noise-multiplier", type=float, default=5.0)
    p.add_argument("--with-probs", action="store_true", help="also write probs/ maps")
    p.add_argument("--no-losses", action="store_true", help="skip losses/ (use with --with-probs)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("stats", parents=[common], help="class-wise mean losses")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--provenance", default="synthetic")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("loss", parents=[common], help="derive losses/ from probs/")
    p.add_argument("--root", required=True)
    p.add_argument("--out", help="dataset root receiving losses/ (default: --root)")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("filter", parents=[common], help="ignore pixels whose loss exceeds the class threshold")
    p.add_argument("--root", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("hardness", parents=[common], help="score and rank masks")
    p.add_argument("--root", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mean-per-pixel", action="store_true")
    p.set_defaults(func=cmd_hardness)

    p = sub.add_parser("manifest", parents=[common], help="per-mask synthesis counts and seeds")
    p.add_argument("--hardness", required=True)
    p.add_argument("--n-max", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--table-out", help="also write the hardness table with counts filled")
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("plan", parents=[common], help="joint or pretrain/finetune training plan")
    p.add_argument("--manifest", required=True)
    p.add_argument("--root", help="real dataset root; ids come from masks/")
    p.add_argument("--real-ids", help="text file with one real sample id per line")
    p.add_argument("--mode", choices=["joint", "pretrain"], default="joint")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("report", parents=[common], help="CSV summaries and SVG histograms")
    p.add_argument("--stats")
    p.add_argument("--hardness")
    p.add_argument("--filter-report")
    p.add_argument("--n-max", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CurationError, OSError) as exc:
        print(f"maskcurate {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
