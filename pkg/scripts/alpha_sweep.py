"""Print precision, recall and filtered fraction against planted noise over a range of alpha."""

import argparse

import numpy as np

from maskcurate.filtering import filter_image
from maskcurate.stats import ClassAccumulator, accumulate_image, finalize
from maskcurate.synthgen import SceneSpec, evaluate_filter, generate_scene, scene_suite


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenes", type=int, default=64)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--classes", type=int, default=8)
    ap.add_argument("--noise-fraction", type=float, default=0.03)
    ap.add_argument("--noise-multiplier", type=float, default=5.0)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--alphas", type=float, nargs="+", default=list(np.round(np.arange(1.0, 2.01, 0.125), 3)))
    args = ap.parse_args(argv)

    base = SceneSpec(width=args.size, height=args.size, num_classes=args.classes,
                     noise_fraction=args.noise_fraction, noise_multiplier=args.noise_multiplier,
                     seed=args.seed)
    scenes = [generate_scene(s) for s in scene_suite(args.scenes, base)]
    acc = ClassAccumulator.empty(args.classes)
    for labels, losses, _ in scenes:
        acc = accumulate_image(acc, labels, losses)
    stats = finalize(acc)

    print(f"{'alpha':>7} {'precision':>10} {'recall':>8} {'filtered':>9}")
    for alpha in args.alphas:
        score = report = None
        for labels, losses, truth in scenes:
            out, r = filter_image(labels, losses, stats, alpha)
            s = evaluate_filter(out, labels, truth)
            score = s if score is None else score + s
            report = r if report is None else report + r
        fmt = lambda v: "n/a" if v is None else f"{v:.4f}"
        print(f"{alpha:7.3f} {fmt(score.precision):>10} {fmt(score.recall):>8} {report.filtered_fraction:9.4f}")


if __name__ == "__main__":
    main()
