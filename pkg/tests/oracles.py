"""Naive reference implementations, deliberately written as plain pixel loops.

They share no code with the package beyond the data containers, so a test
comparing against them checks the vectorized path independently.
"""

import math

import numpy as np


def naive_class_stats(pairs, num_classes, ignore_value=255):
    """Per-class (sum, count, mean|None) over every pixel of every (labels, losses) pair."""
    sums = [0.0] * num_classes
    counts = [0] * num_classes
    for labels, losses in pairs:
        lab = labels.tolist()
        val = losses.tolist()
        for row_l, row_v in zip(lab, val):
            for j, s in zip(row_l, row_v):
                if j == ignore_value:
                    continue
                sums[j] += float(s)
                counts[j] += 1
    means = [sums[j] / counts[j] if counts[j] else None for j in range(num_classes)]
    return sums, counts, means


def naive_noisy_pixels(labels, losses, means, alpha, ignore_value=255):
    """Set of flat indices where the strict criterion ``s > h * alpha`` holds."""
    out = set()
    flat_l = labels.ravel().tolist()
    flat_v = losses.ravel().tolist()
    for k, (j, s) in enumerate(zip(flat_l, flat_v)):
        if j == ignore_value or means[j] is None:
            continue
        if s > means[j] * alpha:
            out.add(k)
    return out


def naive_hardness(labels, means, ignore_value=255):
    total, valid, unknown = 0.0, 0, 0
    for j in labels.ravel().tolist():
        if j == ignore_value:
            continue
        valid += 1
        if means[j] is None:
            unknown += 1
        else:
            total += means[j]
    return total, valid, unknown


def closed_form_counts(n, n_max):
    return [math.ceil(n_max * (n - p) / n) for p in range(n)]


def splitmix64_numpy(xs):
    """Vectorized SplitMix64 on uint64 arrays (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = np.asarray(xs, dtype=np.uint64) + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))
