import math

import numpy as np
import pytest

from spatialdg.dataio import (
    coefficient_field,
    dataset_to_csv,
    load_csv,
    save_csv,
    standardize,
    synth_generate,
)
from spatialdg.downstream import CLASSIFICATION
from spatialdg.errors import (
    BadCount,
    EmptyFile,
    MissingColumn,
    NonBinaryLabel,
    UnparsableNumber,
)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadCsv:
    def test_groups_by_exact_text(self, tmp_path):
        p = _write(tmp_path, "lat,lon,a,y\n1.0,2.0,5,1\n1.0,2.0,6,2\n1.00,2.0,7,3\n")
        ds = load_csv(p)
        assert len(ds.domains) == 2
        assert ds.domains[0].n == 2 and ds.domains[1].n == 1
        assert ds.domains[0].location.coord == (2.0, 1.0)
        assert ds.domains[1].key == ("1.00", "2.0")
        np.testing.assert_array_equal(ds.domains[0].xs, [[5.0], [6.0]])

    def test_first_appearance_order(self, tmp_path):
        p = _write(tmp_path, "lat,lon,a,y\n3,3,0,0\n1,1,0,0\n3,3,0,0\n")
        ds = load_csv(p)
        assert [d.key for d in ds.domains] == [("3", "3"), ("1", "1")]
        assert [d.location.id for d in ds.domains] == [0, 1]

    def test_feature_selection(self, tmp_path):
        p = _write(tmp_path, "y,b,lon,a,lat\n1,2,0,3,0\n")
        ds = load_csv(p, feature_cols=["a"])
        assert ds.feature_names == ["a"]
        assert ds.domains[0].xs.tolist() == [[3.0]]
        assert load_csv(p).feature_names == ["b", "a"]

    def test_missing_column(self, tmp_path):
        p = _write(tmp_path, "lat,lon,a\n1,2,3\n")
        with pytest.raises(MissingColumn):
            load_csv(p)

    def test_unparsable_names_row_and_column(self, tmp_path):
        p = _write(tmp_path, "lat,lon,a,y\n1,2,3,4\n1,2,oops,4\n")
        with pytest.raises(UnparsableNumber) as exc:
            load_csv(p)
        assert exc.value.row == 2 and exc.value.column == "a" and exc.value.value == "oops"

    @pytest.mark.parametrize("text", ["", "lat,lon,a,y\n"])
    def test_empty(self, tmp_path, text):
        with pytest.raises(EmptyFile):
            load_csv(_write(tmp_path, text))

    def test_empty_file_exit_code(self):
        assert EmptyFile("x").exit_code == 4

    def test_non_binary_label(self, tmp_path):
        p = _write(tmp_path, "lat,lon,a,y\n1,2,3,0.5\n")
        with pytest.raises(NonBinaryLabel):
            load_csv(p, kind=CLASSIFICATION)

    def test_nan_rejected(self, tmp_path):
        with pytest.raises(UnparsableNumber):
            load_csv(_write(tmp_path, "lat,lon,a,y\nnan,2,3,0\n"))

    def test_round_trip(self, tmp_path):
        ds = synth_generate(7, 3, 3, seed=4)
        p = tmp_path / "s.csv"
        save_csv(ds, p)
        back = load_csv(p)
        assert len(back.domains) == 7
        for a, b in zip(ds.domains, back.domains):
            assert a.location.coord == b.location.coord
            np.testing.assert_array_equal(a.xs, b.xs)
            np.testing.assert_array_equal(a.ys, b.ys)
        assert dataset_to_csv(back) == p.read_text()


class TestStandardize:
    def test_train_stats_only(self):
        ds = synth_generate(6, 10, 2, seed=0)
        out = standardize(ds, [0, 1, 2])
        pooled = np.concatenate([d.xs for d in out.domains[:3]])
        np.testing.assert_allclose(pooled.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(pooled.std(axis=0), 1.0, atol=1e-12)
        held = np.concatenate([d.xs for d in out.domains[3:]])
        assert np.abs(held.mean(axis=0)).max() > 1e-6

    def test_constant_column(self):
        ds = synth_generate(3, 4, 2, seed=0)
        for d in ds.domains:
            d.xs[:, 1] = 7.0
        out = standardize(ds, [0, 1, 2])
        assert np.all(out.domains[0].xs[:, 1] == 0.0)
        assert out.stats.std[1] == 1e-8


class TestSynth:
    def test_shapes(self):
        ds = synth_generate(10, 4, 3, seed=1)
        assert len(ds.domains) == 10
        assert all(d.xs.shape == (4, 3) and d.ys.shape == (4,) for d in ds.domains)
        c = ds.coords
        assert c.min() >= 0.0 and c.max() <= 1.0

    def test_noise_free_targets(self):
        ds = synth_generate(8, 5, 6, noise_std=0.0, seed=2)
        w, b = coefficient_field(ds.coords, 6)
        for i, d in enumerate(ds.domains):
            np.testing.assert_allclose(d.ys, d.xs @ w[i] + b[i], atol=1e-12)

    def test_field_examples(self):
        w, b = coefficient_field([(0.25, 0.0)], 4)
        np.testing.assert_allclose(w[0], [1.0, 1.0, math.sin(math.pi / 4) * math.cos(math.pi / 4),
                                          math.cos(math.pi / 4)], atol=1e-15)
        assert b[0] == pytest.approx(math.sin(math.pi / 4))

    def test_constant_field(self):
        w, b = coefficient_field(np.random.default_rng(0).uniform(size=(5, 2)), 4, field="constant")
        assert np.all(w == w[0]) and np.all(b == b[0])
        np.testing.assert_allclose(w[0], [0.0, -1.0, 0.0, 1.0], atol=1e-15)
        assert b[0] == pytest.approx(0.0, abs=1e-15)

    def test_deterministic(self):
        a = dataset_to_csv(synth_generate(5, 3, 2, seed=9))
        assert a == dataset_to_csv(synth_generate(5, 3, 2, seed=9))
        assert a != dataset_to_csv(synth_generate(5, 3, 2, seed=10))

    def test_classification_labels(self):
        ds = synth_generate(20, 10, 3, kind=CLASSIFICATION, seed=0)
        ys = np.concatenate([d.ys for d in ds.domains])
        assert set(np.unique(ys)) == {0.0, 1.0}

    @pytest.mark.parametrize("args", [(0, 1, 2), (1, 0, 2), (1, 1, 1)])
    def test_bad_counts(self, args):
        with pytest.raises(BadCount):
            synth_generate(*args)

    def test_spatial_smoothness(self):
        # nearby locations carry closer coefficients than random pairs
        rng = np.random.default_rng(0)
        a = rng.uniform(size=(2000, 2))
        near = np.clip(a + rng.normal(0, 0.01, size=a.shape), 0, 1)
        far = rng.uniform(size=a.shape)
        wa, _ = coefficient_field(a, 4)
        d_near = np.abs(coefficient_field(near, 4)[0] - wa).mean()
        d_far = np.abs(coefficient_field(far, 4)[0] - wa).mean()
        assert d_near < 0.1 * d_far
