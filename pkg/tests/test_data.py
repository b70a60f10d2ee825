import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from domainfusion import data
from domainfusion.errors import (
    BadMagicError,
    DimensionError,
    InsufficientClassError,
    LabelRangeError,
    TruncatedFileError,
)


def make_set(n=6, c=1, h=8, w=8, k=3, seed=0, name="t"):
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(n, c, h, w), dtype=np.uint8)
    labels = (np.arange(n) % k).astype(np.uint16)
    return data.LabeledImageSet(pixels=pixels, labels=labels, num_classes=k, name=name)


class TestDfds:
    def test_roundtrip_bitwise(self, tmp_path):
        ds = make_set()
        path = tmp_path / "set.dfds"
        data.save_dfds(ds, path)
        back = data.load_dfds(path)
        assert np.array_equal(ds.pixels, back.pixels)
        assert np.array_equal(ds.labels, back.labels)
        assert back.num_classes == ds.num_classes

    @settings(max_examples=40, deadline=None)
    @given(
        n=st.integers(1, 6),
        c=st.sampled_from([1, 3]),
        h=st.integers(1, 9),
        w=st.integers(1, 9),
        k=st.integers(1, 5),
        seed=st.integers(0, 10_000),
    )
    def test_roundtrip_property(self, tmp_path_factory, n, c, h, w, k, seed):
        rng = np.random.default_rng(seed)
        ds = data.LabeledImageSet(
            pixels=rng.integers(0, 256, size=(n, c, h, w), dtype=np.uint8),
            labels=rng.integers(0, k, size=n, dtype=np.uint16),
            num_classes=k,
        )
        path = tmp_path_factory.mktemp("dfds") / "x.dfds"
        data.save_dfds(ds, path)
        back = data.load_dfds(path)
        assert np.array_equal(ds.pixels, back.pixels)
        assert np.array_equal(ds.labels, back.labels)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.dfds"
        path.write_bytes(b"XXXX" + bytes(40))
        with pytest.raises(BadMagicError):
            data.load_dfds(path)

    def test_file_size_formula(self, tmp_path):
        ds = data.LabeledImageSet(
            pixels=np.zeros((1, 1, 8, 8), dtype=np.uint8),
            labels=np.zeros(1, dtype=np.uint16),
            num_classes=1,
        )
        path = tmp_path / "one.dfds"
        data.save_dfds(ds, path)
        # magic(4) + version(1) + N u32(4) + C,H,W,K u16(8) + labels(2N) + pixels
        assert path.stat().st_size == 17 + 2 + 64

    def test_truncated(self, tmp_path):
        ds = make_set()
        path = tmp_path / "set.dfds"
        data.save_dfds(ds, path)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(TruncatedFileError):
            data.load_dfds(path)

    def test_label_out_of_range(self, tmp_path):
        ds = make_set(k=3)
        path = tmp_path / "set.dfds"
        data.save_dfds(ds, path)
        blob = bytearray(path.read_bytes())
        blob[5:9] = int(6).to_bytes(4, "little")  # keep N, but shrink K below labels
        blob[15:17] = int(1).to_bytes(2, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(LabelRangeError):
            data.load_dfds(path)


class TestSynthDomain:
    def test_deterministic(self):
        spec = data.SynthDomainSpec(kind="solid-shapes")
        a = data.synth_domain(spec, n_per_class=10, seed=5)
        b = data.synth_domain(spec, n_per_class=10, seed=5)
        assert np.array_equal(a.pixels, b.pixels)
        assert np.array_equal(a.labels, b.labels)

    def test_uniform_class_histogram(self):
        spec = data.SynthDomainSpec(kind="striped-noise")
        ds = data.synth_domain(spec, n_per_class=7, seed=1)
        counts = np.bincount(ds.labels, minlength=spec.classes)
        assert np.array_equal(counts, np.full(spec.classes, 7))

    def test_solid_brighter_than_outline_per_class(self):
        solid = data.synth_domain(
            data.SynthDomainSpec(kind="solid-shapes", noise_sigma=0), 20, seed=3
        )
        outline = data.synth_domain(
            data.SynthDomainSpec(kind="outline-shapes", noise_sigma=0), 20, seed=3
        )
        for label in range(4):
            s_mean = solid.pixels[solid.labels == label].mean()
            o_mean = outline.pixels[outline.labels == label].mean()
            assert s_mean > o_mean

    def test_all_kinds_valid_invariants(self):
        for kind in data.DOMAIN_KINDS:
            ds = data.synth_domain(data.SynthDomainSpec(kind=kind), 3, seed=9)
            assert len(ds) == 12
            assert ds.pixels.dtype == np.uint8
            assert int(ds.labels.max()) < ds.num_classes

    def test_fixed_phase_reduces_diversity(self):
        fixed = data.synth_domain(
            data.SynthDomainSpec(kind="striped-noise", fixed_phase=True, noise_sigma=4),
            10,
            seed=2,
        )
        free = data.synth_domain(
            data.SynthDomainSpec(kind="striped-noise", fixed_phase=False, noise_sigma=4),
            10,
            seed=2,
        )
        # within-class pixel variance across images collapses when frozen
        var_fixed = fixed.pixels[fixed.labels == 0].astype(float).var(axis=0).mean()
        var_free = free.pixels[free.labels == 0].astype(float).var(axis=0).mean()
        assert var_fixed < var_free


class TestResize:
    def test_identity_same_size(self):
        ds = make_set()
        out = data.resize_bilinear(ds, 8, 8)
        assert np.array_equal(out.pixels, ds.pixels)

    def test_constant_image_any_size(self):
        ds = data.LabeledImageSet(
            pixels=np.full((1, 1, 5, 7), 93, dtype=np.uint8),
            labels=np.zeros(1, dtype=np.uint16),
            num_classes=1,
        )
        out = data.resize_bilinear(ds, 11, 3)
        assert np.all(out.pixels == 93)

    def test_hand_evaluated_2x2_to_4x4(self):
        ds = data.LabeledImageSet(
            pixels=np.array([[[[0, 255], [0, 255]]]], dtype=np.uint8),
            labels=np.zeros(1, dtype=np.uint16),
            num_classes=1,
        )
        out = data.resize_bilinear(ds, 4, 4)
        expected_row = np.array([0, 64, 191, 255], dtype=np.uint8)
        for r in range(4):
            assert np.array_equal(out.pixels[0, 0, r], expected_row)

    def test_no_overshoot_property(self):
        rng = np.random.default_rng(8)
        ds = data.LabeledImageSet(
            pixels=rng.integers(0, 256, size=(3, 1, 9, 6), dtype=np.uint8),
            labels=np.zeros(3, dtype=np.uint16),
            num_classes=1,
        )
        out = data.resize_bilinear(ds, 13, 17)
        src = ds.pixels.astype(np.float64)
        h, w = 9, 6
        for oy in range(13):
            sy = (oy + 0.5) * h / 13 - 0.5
            y0 = int(np.floor(sy))
            y0c, y1c = np.clip([y0, y0 + 1], 0, h - 1)
            for ox in range(17):
                sx = (ox + 0.5) * w / 17 - 0.5
                x0 = int(np.floor(sx))
                x0c, x1c = np.clip([x0, x0 + 1], 0, w - 1)
                for i in range(3):
                    neigh = src[i, 0][[y0c, y0c, y1c, y1c], [x0c, x1c, x0c, x1c]]
                    val = out.pixels[i, 0, oy, ox]
                    assert neigh.min() - 0.5 <= val <= neigh.max() + 0.5


class TestBalanceSubsample:
    def test_full_draw_is_permutation(self):
        ds = make_set(n=9, k=3)
        out = data.balance_subsample(ds, 9, seed=4)
        key = lambda s: sorted(map(bytes, s.pixels.reshape(len(s), -1)))
        assert key(out) == key(ds)

    def test_exact_histogram(self):
        spec = data.SynthDomainSpec(kind="solid-shapes")
        ds = data.synth_domain(spec, 20, seed=0)
        out = data.balance_subsample(ds, 40, seed=1)
        assert np.array_equal(np.bincount(out.labels, minlength=4), [10, 10, 10, 10])

    def test_insufficient_population_names_class(self):
        ds = make_set(n=9, k=3)  # 3 per class
        with pytest.raises(InsufficientClassError, match="class 0"):
            data.balance_subsample(ds, 30, seed=0)

    def test_non_divisible_total(self):
        ds = make_set(n=9, k=3)
        with pytest.raises(DimensionError):
            data.balance_subsample(ds, 8, seed=0)

    def test_seed_changes_draw_not_counts(self):
        spec = data.SynthDomainSpec(kind="solid-shapes")
        ds = data.synth_domain(spec, 30, seed=0)
        a = data.balance_subsample(ds, 40, seed=1)
        b = data.balance_subsample(ds, 40, seed=2)
        assert not np.array_equal(a.pixels, b.pixels)
        assert np.array_equal(
            np.bincount(a.labels, minlength=4), np.bincount(b.labels, minlength=4)
        )


class TestMergeDomains:
    def test_classwise_offsets(self):
        target = make_set(n=8, k=4, seed=1)
        outer = make_set(n=6, k=3, seed=2, name="o")
        pair = data.merge_domains(target, outer)
        assert pair.combined_classes == 7
        orig = make_set(n=6, k=3, seed=2, name="o")
        assert np.array_equal(
            pair.outer.labels.astype(int), orig.labels.astype(int) + 4
        )

    def test_collapse_mode(self):
        target = make_set(n=8, k=4, seed=1)
        outer = make_set(n=6, k=3, seed=2)
        pair = data.merge_domains(target, outer, collapse_outer=True)
        assert pair.combined_classes == 5
        assert np.all(pair.outer.labels == 4)

    def test_disjoint_label_ranges(self):
        target = make_set(n=8, k=4, seed=1)
        outer = make_set(n=6, k=3, seed=2)
        pair = data.merge_domains(target, outer)
        t_range = set(np.unique(pair.target.labels).tolist())
        o_range = set(np.unique(pair.outer.labels).tolist())
        assert not (t_range & o_range)


class TestPgm:
    def test_header_and_size(self, tmp_path):
        ds = make_set(n=5, h=4, w=6)
        path = tmp_path / "grid.pgm"
        data.write_pgm_grid(ds, path, columns=8)
        blob = path.read_bytes()
        header = b"P5\n48 4\n255\n"
        assert blob.startswith(header)
        assert len(blob) == len(header) + 48 * 4
