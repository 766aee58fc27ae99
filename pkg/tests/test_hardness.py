import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given
from hypothesis.extra.numpy import arrays
from oracles import closed_form_counts, naive_hardness

from maskcurate.core_io import CurationConfig, LabelMap, write_label_map
from maskcurate.errors import ConfigError, ValidationError
from maskcurate.hardness import (
    HardnessRecord,
    RankedMasks,
    load_csv,
    mask_hardness,
    rank_masks,
    sample_count,
    save_csv,
    score_masks,
)
from maskcurate.stats import ClassStatsTable

K = 5


def _table(means):
    counts = tuple(0 if m is None else 1 for m in means)
    sums = tuple(0.0 if m is None else float(m) for m in means)
    return ClassStatsTable(counts=counts, loss_sums=sums, means=tuple(means), provenance="real")


means_strategy = st.lists(st.one_of(st.none(), st.floats(0, 10)), min_size=K, max_size=K)
label_strategy = arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9)),
                        elements=st.sampled_from(list(range(K)) + [255]))


def test_uniform_mask():
    rec = mask_hardness(LabelMap(np.full((2, 2), 2, np.uint8)), _table([0.1, 0.1, 0.5, 0.1, 0.1]))
    assert rec.hardness == 2.0 and rec.valid_pixels == 4


def test_hand_example():
    rec = mask_hardness(LabelMap(np.array([[0, 1], [1, 255]], np.uint8)), _table([0.3, 0.9, 0, 0, 0]))
    assert rec.hardness == pytest.approx(2.1, rel=1e-15)
    assert rec.valid_pixels == 3 and rec.unknown_class_pixels == 0


def test_all_ignore():
    rec = mask_hardness(LabelMap(np.full((3, 3), 255, np.uint8)), _table([1.0] * K))
    assert rec.hardness == 0 and rec.valid_pixels == 0


def test_unknown_class_contributes_zero():
    rec = mask_hardness(LabelMap(np.array([[0, 3, 3]], np.uint8)), _table([0.5, 1, 1, None, 1]))
    assert rec.hardness == 0.5 and rec.unknown_class_pixels == 2 and rec.valid_pixels == 3


def test_mean_per_pixel_mode():
    labels = LabelMap(np.array([[0, 1], [1, 255]], np.uint8))
    rec = mask_hardness(labels, _table([0.3, 0.9, 0, 0, 0]), mean_per_pixel=True)
    assert rec.hardness == pytest.approx(0.7)


def test_k_mismatch():
    with pytest.raises(ConfigError):
        mask_hardness(LabelMap(np.array([[7]], np.uint8)), _table([1.0] * K))


@given(label_strategy, means_strategy)
def test_matches_naive_loop(grid, means):
    rec = mask_hardness(LabelMap(grid), _table(means))
    total, valid, unknown = naive_hardness(grid, means)
    assert rec.valid_pixels == valid and rec.unknown_class_pixels == unknown
    assert abs(rec.hardness - total) <= 1e-12 * max(abs(total), 1e-300) or rec.hardness == total


@given(label_strategy, label_strategy, means_strategy)
def test_additive_over_disjoint_regions(a, b, means):
    stats = _table(means)
    joined = np.full((max(a.shape[0], b.shape[0]), a.shape[1] + b.shape[1]), 255, np.uint8)
    joined[: a.shape[0], : a.shape[1]] = a
    joined[: b.shape[0], a.shape[1]:] = b
    whole = mask_hardness(LabelMap(joined), stats).hardness
    parts = mask_hardness(LabelMap(a), stats).hardness + mask_hardness(LabelMap(b), stats).hardness
    assert whole == pytest.approx(parts, rel=1e-12, abs=1e-300)


class TestRank:
    def test_tie_rule(self):
        recs = [HardnessRecord("a", 2.0, 1), HardnessRecord("b", 5.0, 1), HardnessRecord("c", 2.0, 1)]
        ranked = rank_masks(recs)
        assert ranked.mask_ids == ["b", "a", "c"]
        assert [p for p, _ in ranked] == [0, 1, 2]

    def test_single(self):
        assert rank_masks([HardnessRecord("x", 1.0, 1)]).entries[0][0] == 0

    def test_all_equal_by_id(self):
        recs = [HardnessRecord(i, 1.0, 1) for i in ["d", "b", "a", "c"]]
        assert rank_masks(recs).mask_ids == ["a", "b", "c", "d"]

    def test_duplicates_rejected(self):
        with pytest.raises(ValidationError):
            rank_masks([HardnessRecord("a", 1.0, 1), HardnessRecord("a", 2.0, 1)])

    def test_ranked_invariants_checked(self):
        a, b = HardnessRecord("a", 1.0, 1), HardnessRecord("b", 2.0, 1)
        with pytest.raises(ValidationError):
            RankedMasks(((0, a), (1, b)))
        with pytest.raises(ValidationError):
            RankedMasks(((0, b), (2, a)))

    @given(st.lists(st.one_of(st.just(0.0), st.floats(1e-200, 100)), min_size=1, max_size=30), st.sampled_from([0.25, 0.5, 2.0, 8.0]))
    def test_positive_scaling_keeps_order(self, hs, c):
        recs = [HardnessRecord(f"m{i:02d}", h, 1) for i, h in enumerate(hs)]
        scaled = [HardnessRecord(r.mask_id, r.hardness * c, 1) for r in recs]
        assert rank_masks(recs).mask_ids == rank_masks(scaled).mask_ids


class TestSampleCount:
    def test_top_rank_gets_n_max(self):
        for n in (1, 2, 7, 1000):
            assert sample_count(0, n, 6) == 6

    def test_hand_example(self):
        assert [sample_count(p, 4, 6) for p in range(4)] == [6, 5, 3, 2]

    def test_last_ade20k_rank(self):
        assert sample_count(20209, 20210, 20) == 1

    def test_out_of_range(self):
        with pytest.raises(ValidationError):
            sample_count(4, 4, 6)
        with pytest.raises(ValidationError):
            sample_count(-1, 4, 6)

    @given(st.integers(1, 3000), st.integers(1, 40))
    def test_properties(self, n, n_max):
        counts = [sample_count(p, n, n_max) for p in range(n)]
        assert counts == closed_form_counts(n, n_max)
        assert counts[0] == n_max and counts[-1] >= 1
        assert all(a >= b for a, b in zip(counts, counts[1:]))
        assert n <= sum(counts) <= n * n_max


def test_csv_round_trip_and_header(tmp_path):
    ranked = rank_masks([HardnessRecord("a", 2.0 / 3, 3, 1), HardnessRecord("b", 5.0, 4)])
    save_csv(ranked, tmp_path / "h.csv")
    first = (tmp_path / "h.csv").read_text().splitlines()[0]
    assert first == "mask_id,rank,hardness,valid_pixels,unknown_class_pixels,count"
    back, counts = load_csv(tmp_path / "h.csv")
    assert back == ranked and counts == [None, None]
    save_csv(ranked, tmp_path / "h2.csv", [6, 3])
    assert load_csv(tmp_path / "h2.csv")[1] == [6, 3]


def test_score_masks_from_files(tmp_path):
    stats = _table([0.3, 0.9, 0.1, 0.2, 0.4])
    grids = {"x": [[1, 1]], "y": [[0, 255]], "z": [[1, 1]]}
    paths = []
    for mid, g in grids.items():
        write_label_map(LabelMap(np.array(g, np.uint8)), tmp_path / f"{mid}.png")
        paths.append((mid, tmp_path / f"{mid}.png"))
    ranked = score_masks(paths, stats, CurationConfig(num_classes=K), threads=2)
    assert ranked.mask_ids == ["x", "z", "y"]
