from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framesift.background import BackgroundModel, BackgroundParams
from framesift.media_io import DetectionRecord, Frame, ManifestEntry, SampleManifest, VideoSource
from framesift.sampling import (
    CategoryStats, DuplicateFilterParams, audit_annotations, average_hash, category_stats, compute_sample_plan,
    expected_selection_count, filter_duplicates, find_runs, format_gap_report, hamming, inject_negatives,
    select_frames, split_manifest, stride_for,
)
from framesift.scene import SceneCategory

N, F, D = SceneCategory.NIGHT, SceneCategory.FOG, SceneCategory.DAY


def src(vid, frames, fps=10):
    return VideoSource(vid, None, Fraction(fps), frames, 4, 4)


def stats(**totals):
    return [CategoryStats(SceneCategory(k), 1, (Fraction(10),), v) for k, v in totals.items()]


def runs_manifest(run_sizes, stride=1, seed=0):
    entries, vid = [], 1
    for size in run_sizes:
        entries += [ManifestEntry(vid, i * stride, "day", stride=stride) for i in range(size)]
        vid += 1
    return SampleManifest(seed, "balanced", tuple(entries))


class TestPlan:
    def test_paper_mode_single_category(self):
        plan = compute_sample_plan(400, [CategoryStats(D, 10, (Fraction(10),) * 10, 2000)], "paper")
        assert plan.rates[D] == 0.2

    def test_paper_mode_global_rate(self):
        plan = compute_sample_plan(300, stats(night=2000, fog=1000, day=100), "paper")
        assert set(plan.rates.values()) == {300 / 3100}

    def test_balanced_example(self):
        plan = compute_sample_plan(300, stats(night=2000, fog=1000, day=100), "balanced")
        assert {c: plan.quotas[c] for c in (N, F, D)} == {N: 100, F: 100, D: 100}
        assert plan.rates == {N: 0.05, F: 0.1, D: 1.0}
        assert sum(plan.quotas.values()) <= 300 + 3

    def test_clamp_warns(self):
        plan = compute_sample_plan(500, stats(day=100), "balanced")
        assert plan.rates[D] == 1.0 and plan.warnings
        assert compute_sample_plan(500, stats(day=100), "paper").rates[D] == 1.0

    def test_empty_categories_ignored(self):
        plan = compute_sample_plan(10, stats(night=0, day=50))
        assert list(plan.rates) == [D] and plan.quotas[D] == 10

    @pytest.mark.parametrize("args", [(0, stats(day=5)), (5, stats(day=0)), (5, [])])
    def test_errors(self, args):
        with pytest.raises(ValueError):
            compute_sample_plan(*args)

    def test_unknown_mode(self):
        with pytest.raises(ValueError, match="mode"):
            compute_sample_plan(5, stats(day=10), "random")

    def test_category_stats(self):
        s = category_stats([src(1, 200), src(2, 100), src(3, 50)], {1: D, 2: D, 3: N})
        assert [(x.category, x.n_videos, x.total_frames) for x in s] == [(N, 1, 50), (D, 2, 300)]


class TestSelect:
    def test_stride_rounding(self):
        assert [stride_for(r) for r in (1.0, 0.2, 0.4, 0.3, 0.05)] == [1, 5, 3, 3, 20]

    def test_rate_point_two(self):
        plan = compute_sample_plan(40, stats(day=200))
        m = select_frames(plan, [(src(1, 200), D)], seed=3)
        idx = [e.frame_index for e in m.entries]
        assert len(idx) == 40 and idx[0] < 5 and set(np.diff(idx)) == {5}
        assert all(e.provenance.startswith("stride-sample") and e.stride == 5 for e in m.entries)

    def test_rate_one_takes_all(self):
        plan = compute_sample_plan(50, stats(day=30))
        assert [e.frame_index for e in select_frames(plan, [(src(1, 30), D)], 0).entries] == list(range(30))

    def test_same_seed_same_bytes_other_seed_other_phase(self):
        plan = compute_sample_plan(20, stats(night=400))
        vids = [(src(i, 100), N) for i in range(1, 5)]
        a = select_frames(plan, vids, 7).dumps()
        assert a == select_frames(plan, vids[::-1], 7).dumps()
        phases = {tuple(e.frame_index for e in select_frames(plan, vids, s).entries[:1]) for s in range(8)}
        assert len(phases) > 1

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(1, 300), min_size=1, max_size=5), st.integers(1, 500), st.integers(0, 2**32))
    def test_conservation(self, counts, n, seed):
        sources = [src(i + 1, c) for i, c in enumerate(counts)]
        plan = compute_sample_plan(n, stats(day=sum(counts)))
        m = select_frames(plan, [(s, D) for s in sources], seed)
        stride = stride_for(plan.rates[D])
        total = 0
        for s in sources:
            mine = [e.frame_index for e in m.entries if e.video_id == s.video_id]
            if mine:
                phase = mine[0]
                assert mine == list(range(phase, s.frame_count, stride))
                total += expected_selection_count(s.frame_count, stride, phase)
            else:
                assert s.frame_count <= stride - 1
        assert len(m.entries) == total


def block_frame(bits_on, value=200, size=64) -> np.ndarray:
    img = np.zeros((size, size), np.uint8)
    cell = size // 8
    for b in bits_on:
        r, c = divmod(b, 8)
        img[r * cell:(r + 1) * cell, c * cell:(c + 1) * cell] = value
    return img


def brute_hash(img) -> int:
    H, W = img.shape
    means = []
    for r in range(8):
        for c in range(8):
            block = [int(img[y, x]) for y in range(r * H // 8, (r + 1) * H // 8)
                     for x in range(c * W // 8, (c + 1) * W // 8)]
            means.append(Fraction(sum(block), len(block)))
    avg = sum(means) / 64
    return int("".join("1" if m > avg else "0" for m in means), 2)


def manifest_of(n, vid=1, seed=0):
    return SampleManifest(seed, "balanced", tuple(ManifestEntry(vid, i, "day") for i in range(n)))


class TestHash:
    def test_block_pattern(self):
        assert average_hash(block_frame([0])) == 1 << 63
        assert average_hash(block_frame([63, 62])) == 0b11

    def test_constant_image_zero(self):
        assert average_hash(np.full((9, 9), 77, np.uint8)) == 0

    def test_tiny_image(self):
        assert average_hash(np.array([[0, 255]], np.uint8)) == int("00001111" * 8, 2)

    def test_noise_copy_far(self, rng):
        # flat base: the perturbation decides every block mean
        base = np.full((64, 64), 128, np.uint8)
        noisy = np.clip(base.astype(int) + rng.choice([-120, 120], base.shape), 0, 255).astype(np.uint8)
        assert average_hash(base) == brute_hash(base) and average_hash(noisy) == brute_hash(noisy)
        assert hamming(brute_hash(base), brute_hash(noisy)) > 5

    @settings(max_examples=50, deadline=None)
    @given(st.integers(8, 30), st.integers(8, 30), st.integers(0, 2**32))
    def test_matches_brute_force(self, H, W, seed):
        img = np.random.default_rng(seed).integers(0, 256, (H, W), dtype=np.uint8)
        assert average_hash(img) == brute_hash(img)

    def test_params(self):
        with pytest.raises(ValueError):
            DuplicateFilterParams(8, 65)


class TestDedup:
    def run(self, frames, threshold=5):
        m = manifest_of(len(frames))
        return filter_duplicates(m, lambda v, i: Frame(frames[i]), DuplicateFilterParams(8, threshold))

    def test_identical_collapse(self, rng):
        a = rng.integers(0, 256, (16, 16), dtype=np.uint8)
        res = self.run([a, a.copy()])
        assert [e.frame_index for e in res.manifest.entries] == [0]
        assert res.removed[0]["cluster"] == 0 and res.removed[0]["distance_to_kept"] == 0

    def test_transitive_chain(self):
        a, b, c = block_frame([0, 1, 2, 3]), block_frame([0, 1, 2, 3, 4, 5, 6]), block_frame(range(10))
        ha, hb, hc = (average_hash(x) for x in (a, b, c))
        assert hamming(ha, hb) <= 5 and hamming(hb, hc) <= 5 and hamming(ha, hc) > 5
        assert len(self.run([a, b, c]).manifest.entries) == 1

    def test_distinct_kept(self):
        assert len(self.run([block_frame([0]), block_frame(range(32, 40))]).manifest.entries) == 2

    def test_within_video_only(self, rng):
        a = rng.integers(0, 256, (8, 8), dtype=np.uint8)
        m = SampleManifest(0, "paper", (ManifestEntry(1, 0, "day"), ManifestEntry(2, 0, "day")))
        assert len(filter_duplicates(m, lambda v, i: Frame(a)).manifest.entries) == 2

    def test_unreadable_dropped(self, rng):
        def load(v, i):
            if i == 1:
                raise OSError("gone")
            return Frame(rng.integers(0, 256, (8, 8), dtype=np.uint8))
        res = filter_duplicates(manifest_of(3), load)
        assert [e.frame_index for e in res.manifest.entries] == [0, 2] and "gone" in res.unreadable[0]

    def test_negatives_pass_through(self):
        m = SampleManifest(0, "paper", (ManifestEntry(1, 0, "day"), ManifestEntry(1, 0, "day", "train", True)))
        res = filter_duplicates(m, lambda v, i: Frame(np.zeros((4, 4), np.uint8)))
        assert res.manifest == m

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.lists(st.integers(0, 63), max_size=12), min_size=1, max_size=10), st.integers(0, 12))
    def test_idempotent_and_monotone(self, patterns, t):
        frames = [block_frame(p) for p in patterns]
        load = lambda v, i: Frame(frames[i])  # noqa: E731
        m = manifest_of(len(frames))
        once = filter_duplicates(m, load, DuplicateFilterParams(8, t)).manifest
        assert filter_duplicates(once, load, DuplicateFilterParams(8, t)).manifest == once
        higher = filter_duplicates(m, load, DuplicateFilterParams(8, t + 1)).manifest
        assert len(higher.entries) <= len(once.entries)

    def test_thread_count_irrelevant(self, rng):
        frames = [rng.integers(0, 256, (8, 8), dtype=np.uint8) for _ in range(12)]
        frames += frames[:4]
        m = manifest_of(len(frames))
        a = filter_duplicates(m, lambda v, i: Frame(frames[i]), jobs=1)
        b = filter_duplicates(m, lambda v, i: Frame(frames[i]), jobs=4)
        assert a.manifest == b.manifest and a.removed == b.removed


def bg_models(vids):
    frame = Frame(np.full((6, 8), 90, np.uint8))
    return {v: BackgroundModel(frame, BackgroundParams(seed=v), (0, 1, 2), (0, 3)) for v in vids}


class TestNegatives:
    def base(self):
        return SampleManifest(5, "balanced", tuple(ManifestEntry(v, 0, "fog") for v in (1, 2, 3)))

    def test_counts(self):
        out, warn = inject_negatives(self.base(), bg_models([1, 2, 3]), 2)
        assert len(out.negatives) == 9 and not warn
        assert all(e.split == "train" for e in out.negatives)
        assert len(inject_negatives(self.base(), bg_models([1, 2, 3]), 0)[0].negatives) == 3

    def test_variants_use_safe_ops(self):
        out, _ = inject_negatives(self.base(), bg_models([1, 2, 3]), 4)
        for e in out.negatives:
            if e.frame_index:
                op = e.provenance.split(";aug=")[1].split("(")[0]
                assert op in ("hflip", "blur", "color")

    def test_missing_background_warns(self):
        out, warn = inject_negatives(self.base(), bg_models([1, 3]), 1)
        assert {e.video_id for e in out.negatives} == {1, 3} and "video 2" in warn[0]

    def test_rerun_replaces(self):
        once, _ = inject_negatives(self.base(), bg_models([1, 2, 3]), 2)
        twice, _ = inject_negatives(once, bg_models([1, 2, 3]), 2)
        assert twice == once

    def test_never_val_after_split(self):
        out, _ = inject_negatives(self.base(), bg_models([1, 2, 3]), 2)
        res = split_manifest(out, 0.5)
        assert all(e.split == "train" for e in res.manifest.negatives)


class TestSplit:
    def test_ten_runs_of_ten(self):
        res = split_manifest(runs_manifest([10] * 10, stride=3), 0.7, seed=1)
        assert (res.runs, res.train_frames, res.val_frames) == (10, 70, 30)
        assert not res.warnings

    def test_one_big_run(self):
        res = split_manifest(runs_manifest([100]), 0.7)
        assert res.train_frames == 100 and res.val_frames == 0 and "unattainable" in res.warnings[0]

    def test_runs_break_on_gap(self):
        entries = [ManifestEntry(1, i, "day", stride=5) for i in (0, 5, 10, 20, 25)]
        runs = find_runs(entries)
        assert [[e.frame_index for e in r] for r in runs] == [[0, 5, 10], [20, 25]]

    def test_deterministic(self):
        m = runs_manifest([3, 5, 2, 7, 1, 4])
        assert split_manifest(m, seed=4).manifest == split_manifest(m, seed=4).manifest

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            split_manifest(SampleManifest(0, "paper", ()))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(1, 12), min_size=1, max_size=15), st.integers(0, 2**32),
           st.floats(0.05, 0.95))
    def test_partition_and_ratio(self, sizes, seed, ratio):
        m = runs_manifest(sizes, stride=2, seed=seed)
        res = split_manifest(m, ratio)
        splits = {(e.video_id, e.frame_index): e.split for e in res.manifest.entries}
        assert set(splits.values()) <= {"train", "val"}
        for run in find_runs(m.entries):
            assert len({splits[(e.video_id, e.frame_index)] for e in run}) == 1
        assert abs(res.train_fraction - ratio) <= max(sizes) / sum(sizes) + 1e-12

    def test_input_order_irrelevant(self):
        m = runs_manifest([3, 1, 4, 1, 5])
        rev = m.replace_entries(m.entries[::-1])
        a = {e.key: e.split for e in split_manifest(m).manifest.entries}
        b = {e.key: e.split for e in split_manifest(rev).manifest.entries}
        assert a == b


def gt(vid, fid, box, cls=1):
    return DetectionRecord(vid, fid, *box, cls)


class TestAudit:
    def test_gap_flagged_constant(self):
        gaps = audit_annotations([gt(1, 1, (10, 10, 20, 20)), gt(1, 3, (10, 10, 20, 20))])
        assert [(g.frame_id, g.box) for g in gaps] == [(2, (10, 10, 20, 20))]

    def test_interpolated_box(self):
        gaps = audit_annotations([gt(1, 1, (10, 10, 20, 20)), gt(1, 3, (14, 10, 20, 20))])
        assert gaps[0].box == (12, 10, 20, 20)

    def test_present_not_flagged(self):
        boxes = [gt(1, t, (10, 10, 20, 20)) for t in (1, 2, 3)]
        assert audit_annotations(boxes) == []

    def test_unlinked_not_flagged(self):
        assert audit_annotations([gt(1, 1, (0, 0, 5, 5)), gt(1, 3, (50, 50, 5, 5))]) == []

    def test_other_class_does_not_fill(self):
        recs = [gt(1, 1, (0, 0, 10, 10)), gt(1, 3, (0, 0, 10, 10)), gt(1, 2, (0, 0, 10, 10), cls=2)]
        assert len(audit_annotations(recs)) == 1

    def test_empty_and_report(self):
        assert audit_annotations([]) == []
        text = format_gap_report(audit_annotations([gt(2, 4, (1, 2, 3, 4)), gt(2, 6, (1, 2, 3, 4))]))
        assert text == "video_id,frame_id,class_id,bb_left,bb_top,bb_width,bb_height\n2,5,1,1,2,3,4\n"
