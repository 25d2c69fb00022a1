import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dataset
from mvfd.data import (
    CorruptionSpec,
    FeatureMaskSet,
    MultiViewDataset,
    apply_masks,
    from_csv,
    from_mat,
    load_dataset,
    sample_feature_masks,
    save_dataset,
    simulate_incompleteness,
)
from mvfd.errors import ValidationError


def complete_dataset(n=10, dims=(4, 3), c=2, seed=0):
    rng = np.random.default_rng(seed)
    y = (rng.random((n, c)) > 0.5).astype(float)
    return MultiViewDataset(
        views=[rng.standard_normal((n, d)) for d in dims],
        labels=y,
        view_indicator=np.ones((n, len(dims))),
        label_indicator=np.ones((n, c)),
    )


def assert_same(a: MultiViewDataset, b: MultiViewDataset):
    assert a.m == b.m and a.view_names == b.view_names
    for x, z in zip(a.views, b.views):
        assert x.tobytes() == z.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()
    assert a.view_indicator.tobytes() == b.view_indicator.tobytes()
    assert a.label_indicator.tobytes() == b.label_indicator.tobytes()


class TestContainer:
    def test_round_trip(self, tmp_path, small_ds):
        save_dataset(small_ds, tmp_path / "d")
        assert_same(small_ds, load_dataset(tmp_path / "d"))

    def test_single_row_round_trip(self, tmp_path):
        ds = random_dataset(n=1)
        save_dataset(ds, tmp_path / "d")
        assert_same(ds, load_dataset(tmp_path / "d"))

    def test_manifest_fields(self, tmp_path, small_ds):
        save_dataset(small_ds, tmp_path / "d")
        man = json.loads((tmp_path / "d" / "manifest.json").read_text())
        assert man["dtype"] == "f64" and man["endianness"] == "little" and man["layout"] == "row-major"
        assert man["d_v"] == [5, 4, 3] and (man["n"], man["m"], man["c"]) == (12, 3, 3)
        raw = np.fromfile(tmp_path / "d" / "view_0.bin", dtype="<f8")
        assert raw.size == 12 * 5

    def test_empty_views_rejected(self):
        with pytest.raises(ValidationError):
            MultiViewDataset(views=[], labels=np.zeros((2, 1)), view_indicator=np.zeros((2, 0)),
                             label_indicator=np.ones((2, 1)))

    def test_width_mismatch_vs_manifest(self, tmp_path, small_ds):
        save_dataset(small_ds, tmp_path / "d")
        man_path = tmp_path / "d" / "manifest.json"
        man = json.loads(man_path.read_text())
        man["d_v"][0] = 6
        man_path.write_text(json.dumps(man))
        with pytest.raises(ValidationError, match="view_0"):
            load_dataset(tmp_path / "d")

    def test_zero_indicator_row_names_row(self, tmp_path, small_ds):
        save_dataset(small_ds, tmp_path / "d")
        w = small_ds.view_indicator.copy()
        w[4] = 0
        w.astype("<f8").tofile(tmp_path / "d" / "W.bin")
        # the zero-fill check must not trip first
        for v in range(small_ds.m):
            x = small_ds.views[v].copy()
            x[4] = 0
            x.astype("<f8").tofile(tmp_path / "d" / f"view_{v}.bin")
        with pytest.raises(ValidationError, match="row 4"):
            load_dataset(tmp_path / "d")

    def test_missing_file(self, tmp_path, small_ds):
        save_dataset(small_ds, tmp_path / "d")
        (tmp_path / "d" / "G.bin").unlink()
        with pytest.raises(OSError):
            load_dataset(tmp_path / "d")

    def test_corrupt_manifest(self, tmp_path, small_ds):
        save_dataset(small_ds, tmp_path / "d")
        (tmp_path / "d" / "manifest.json").write_text("{not json")
        with pytest.raises(OSError):
            load_dataset(tmp_path / "d")

    def test_missing_view_must_be_zero_filled(self, small_ds):
        views = [x.copy() for x in small_ds.views]
        i = int(np.flatnonzero(small_ds.view_indicator[:, 0] == 0)[0])
        views[0][i, 0] = 1.0
        with pytest.raises(ValidationError, match="zero-filled"):
            MultiViewDataset(views, small_ds.labels, small_ds.view_indicator, small_ds.label_indicator)

    def test_non_binary_labels(self, small_ds):
        y = small_ds.labels.copy()
        y[0, 0] = 0.5
        with pytest.raises(ValidationError):
            MultiViewDataset(small_ds.views, y, small_ds.view_indicator, small_ds.label_indicator)


class TestSimulate:
    def test_no_corruption_is_split_only(self):
        ds = complete_dataset(n=10)
        tr, te = simulate_incompleteness(ds, CorruptionSpec(0.0, 0.0, 0.7, seed=3))
        assert tr.n == 7 and te.n == 3
        for part in (tr, te):
            assert np.all(part.view_indicator == 1) and np.all(part.label_indicator == 1)

    def test_exact_view_counts_small(self):
        # n=4, m=2, rate 0.5: the only admissible W matrices have two zeros per
        # column and no empty row; enumerate them and check the output is one.
        admissible = []
        for col0 in itertools.combinations(range(4), 2):
            for col1 in itertools.combinations(range(4), 2):
                w = np.ones((4, 2))
                w[list(col0), 0] = 0
                w[list(col1), 1] = 0
                if np.all(w.sum(1) >= 1):
                    admissible.append(w)
        assert len(admissible) == 6
        for seed in range(50):
            ds = complete_dataset(n=4)
            tr, _ = simulate_incompleteness(ds, CorruptionSpec(0.5, 0.0, 1.0, seed=seed))
            assert any(np.array_equal(tr.view_indicator, w) for w in admissible)

    def test_label_counts(self):
        ds = complete_dataset(n=10, c=2, seed=1)
        tr, _ = simulate_incompleteness(ds, CorruptionSpec(0.0, 0.5, 1.0, seed=0))
        assert np.all((tr.label_indicator == 0).sum(axis=0) == 5)
        assert np.all(tr.labels[tr.label_indicator == 0] == 0)

    def test_label_removal_is_stratified(self):
        rng = np.random.default_rng(0)
        y = np.zeros((100, 1))
        y[rng.choice(100, 30, replace=False)] = 1
        ds = MultiViewDataset([rng.standard_normal((100, 2))], y, np.ones((100, 1)), np.ones((100, 1)))
        tr, _ = simulate_incompleteness(ds, CorruptionSpec(0.0, 0.5, 1.0, seed=0))
        removed = tr.label_indicator[:, 0] == 0
        assert removed.sum() == 50
        assert y[removed, 0].sum() == 15

    def test_test_split_keeps_complete_labels(self):
        ds = complete_dataset(n=40, c=3)
        tr, te = simulate_incompleteness(ds, CorruptionSpec(0.5, 0.5, 0.5, seed=0))
        assert np.all(te.label_indicator == 1)
        assert te.n == 20
        assert (te.view_indicator == 0).any()

    def test_rate_one_rejected(self):
        with pytest.raises(ValidationError):
            simulate_incompleteness(complete_dataset(), CorruptionSpec(1.0, 0.0, 1.0))

    def test_requires_complete_input(self, small_ds):
        with pytest.raises(ValidationError):
            simulate_incompleteness(small_ds, CorruptionSpec())

    def test_reproducible(self):
        ds = complete_dataset(n=30, dims=(3, 3, 2))
        a = simulate_incompleteness(ds, CorruptionSpec(0.4, 0.3, 0.6, seed=11))
        b = simulate_incompleteness(ds, CorruptionSpec(0.4, 0.3, 0.6, seed=11))
        for x, y in zip(a, b):
            assert_same(x, y)

    @settings(max_examples=1000, deadline=None)
    @given(
        n=st.integers(1, 30),
        m=st.integers(1, 4),
        view_rate=st.floats(0.0, 0.99),
        label_rate=st.floats(0.0, 0.99),
        seed=st.integers(0, 2**31),
    )
    def test_every_row_keeps_a_view(self, n, m, view_rate, label_rate, seed):
        ds = complete_dataset(n=n, dims=(2,) * m)
        tr, te = simulate_incompleteness(ds, CorruptionSpec(view_rate, label_rate, 1.0, seed=seed))
        assert np.all(tr.view_indicator.sum(1) >= 1)
        for v in range(m):
            assert np.all(tr.views[v][tr.view_indicator[:, v] == 0] == 0)
        # per-view counts are exact whenever they are jointly feasible
        k = int(np.floor(n * view_rate))
        if m >= 2 and k * m <= n * (m - 1):
            assert np.all((tr.view_indicator == 0).sum(0) == k)


class TestMasks:
    def test_zero_ratio(self, small_ds):
        fm = sample_feature_masks(small_ds, 0.0, seed=1)
        assert all(np.all(mk == 1) for mk in fm.masks)

    def test_full_ratio(self, small_ds):
        fm = sample_feature_masks(small_ds, 1.0, seed=1)
        assert all(np.all(mk == 0) for mk in fm.masks)
        assert all(np.all(p == 0) for p in fm.starts)

    def test_contiguous_runs_over_seeds(self):
        ds = random_dataset(n=20, dims=(10,), c=2)
        for seed in range(100):
            mk = sample_feature_masks(ds, 0.3, seed).masks[0]
            for row in mk:
                zeros = np.flatnonzero(row == 0)
                assert zeros.size == 3
                assert np.all(np.diff(zeros) == 1)

    def test_out_of_range(self, small_ds):
        for bad in (-0.1, 1.1):
            with pytest.raises(ValidationError):
                sample_feature_masks(small_ds, bad, 0)

    def test_deterministic(self, small_ds):
        a = sample_feature_masks(small_ds, 0.4, 7)
        b = sample_feature_masks(small_ds, 0.4, 7)
        assert all(np.array_equal(x, y) for x, y in zip(a.masks, b.masks))

    def test_start_positions_cover_range(self):
        ds = random_dataset(n=400, dims=(10,), c=2, missing=0.0)
        starts = sample_feature_masks(ds, 0.3, 0).starts[0]
        assert set(starts.tolist()) == set(range(8))

    @settings(max_examples=200, deadline=None)
    @given(d=st.integers(1, 40), ratio=st.floats(0.0, 1.0), seed=st.integers(0, 10_000))
    def test_mask_row_structure(self, d, ratio, seed):
        ds = random_dataset(n=5, dims=(d,), c=2, missing=0.0)
        fm = sample_feature_masks(ds, ratio, seed)
        length = int(np.floor(d * ratio + 1e-9))
        for row, p in zip(fm.masks[0], fm.starts[0]):
            zeros = np.flatnonzero(row == 0)
            assert zeros.size == length
            if length:
                assert zeros[0] == p and zeros[-1] == p + length - 1
            assert 0 <= p <= d - length

    def test_apply_identity_and_zero(self, small_ds):
        ones = FeatureMaskSet([np.ones_like(x) for x in small_ds.views], 0.0, 0)
        zeros = FeatureMaskSet([np.zeros_like(x) for x in small_ds.views], 1.0, 0)
        for x, y in zip(small_ds.views, apply_masks(small_ds, ones)):
            assert np.array_equal(x, y)
        assert all(np.all(y == 0) for y in apply_masks(small_ds, zeros))

    def test_apply_hadamard(self):
        fm = FeatureMaskSet([np.array([[1.0, 0, 0, 1]])], 0.5, 0)
        out = apply_masks([np.array([[1.0, 2, 3, 4]])], fm)
        assert out[0].tolist() == [[1, 0, 0, 4]]

    def test_apply_shape_mismatch(self, small_ds):
        fm = FeatureMaskSet([np.ones((2, 2))] * small_ds.m, 0.0, 0)
        with pytest.raises(ValidationError):
            apply_masks(small_ds, fm)


class TestConverters:
    def test_csv(self, tmp_path):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((6, 3)), rng.standard_normal((6, 2))
        y = np.array([[1, -1], [-1, 1]] * 3)
        for name, arr in (("a", a), ("b", b), ("y", y)):
            np.savetxt(tmp_path / f"{name}.csv", arr, delimiter=",")
        ds = from_csv([tmp_path / "a.csv", tmp_path / "b.csv"], tmp_path / "y.csv")
        assert ds.dims == [3, 2] and ds.c == 2
        assert np.allclose(ds.views[0], a)
        assert set(np.unique(ds.labels)) == {0.0, 1.0}

    def test_mat_layout(self, tmp_path):
        import scipy.io

        rng = np.random.default_rng(0)
        views = np.empty((1, 2), dtype=object)
        views[0, 0] = rng.standard_normal((4, 8))  # stored transposed: d x n
        views[0, 1] = rng.standard_normal((8, 3))
        label = (rng.random((8, 5)) > 0.5).astype(float)
        scipy.io.savemat(tmp_path / "toy.mat", {"X": views, "label": label})
        ds = from_mat(str(tmp_path / "toy.mat"))
        assert ds.n == 8 and ds.dims == [4, 3] and ds.c == 5
        assert np.allclose(ds.views[0], views[0, 0].T)
