import numpy as np
import pytest
from scipy import stats

from chanaug.augment import (ChannelAugmentPolicy, ChannelSubset, SpecAugmentPolicy, ca_freq_dependent,
                             ca_sample_subset, ca_slice, ca_zero, channel_augment, make_rng,
                             spawn_rngs, spec_augment)
from chanaug.spectral import ComplexSpectrum, stft

from conftest import crandn


def slice_policy(lo, hi):
    return ChannelAugmentPolicy("freq_independent_slice", lo, hi)


class TestPolicy:
    def test_validation(self):
        with pytest.raises(ValueError):
            ChannelAugmentPolicy("freq_independent_slice", 0, 4)
        with pytest.raises(ValueError):
            ChannelAugmentPolicy("freq_independent_slice", 5, 4)
        with pytest.raises(ValueError):
            ChannelAugmentPolicy("freq_dependent", p_keep=0)
        with pytest.raises(ValueError):
            ChannelAugmentPolicy("dropout", 1, 2)
        with pytest.raises(ValueError):
            SpecAugmentPolicy(f_max=-1)

    def test_c_max_above_channel_count(self, rng):
        with pytest.raises(ValueError, match="exceeds"):
            ca_sample_subset(4, slice_policy(2, 5), rng)

    def test_summary(self):
        assert slice_policy(4, 4).summary() == "slice:4-4"
        assert ChannelAugmentPolicy("freq_dependent", p_keep=0.25).summary() == "fd:p=0.25"


class TestSubsetSampling:
    def test_subsets_sorted_distinct_in_range(self, rng):
        for _ in range(500):
            z = ca_sample_subset(16, slice_policy(4, 16), rng)
            assert 4 <= len(z) <= 16
            assert list(z.kept) == sorted(set(z.kept))
            assert 0 <= z.kept[0] and z.kept[-1] < 16

    def test_fixed_cardinality(self, rng):
        assert {len(ca_sample_subset(16, slice_policy(4, 4), rng)) for _ in range(100)} == {4}
        z = ca_sample_subset(8, slice_policy(8, 8), rng)
        assert z.kept == tuple(range(8))

    def test_cardinality_uniform(self):
        rng = make_rng(0)
        sizes = [len(ca_sample_subset(16, slice_policy(4, 16), rng)) for _ in range(13000)]
        counts = np.bincount(sizes, minlength=17)[4:]
        assert stats.chisquare(counts).pvalue > 0.01

    def test_channel_membership_uniform(self):
        rng = make_rng(1)
        hits = np.zeros(8)
        for _ in range(8000):
            hits[list(ca_sample_subset(8, slice_policy(2, 2), rng).kept)] += 1
        assert stats.chisquare(hits).pvalue > 0.01

    def test_seed_reproducible(self):
        a = [ca_sample_subset(16, slice_policy(4, 16), make_rng(9)).kept for _ in range(3)]
        assert len(set(a)) == 1
        s1, s2 = spawn_rngs(3, 2)
        assert s1.random() != s2.random()

    def test_channel_subset_checks(self):
        with pytest.raises(ValueError):
            ChannelSubset((), 4)
        with pytest.raises(ValueError):
            ChannelSubset((1, 1), 4)
        with pytest.raises(ValueError):
            ChannelSubset((4,), 4)
        assert ChannelSubset((3, 0), 4).kept == (0, 3)


class TestApply:
    def test_zero_and_slice(self, rng):
        X = crandn(rng, 3, 5, 6)
        z = ChannelSubset((1, 4), 6)
        Z = ca_zero(X, z)
        assert Z.shape == X.shape
        np.testing.assert_array_equal(Z[:, :, [0, 2, 3, 5]], 0)
        np.testing.assert_array_equal(Z[:, :, [1, 4]], X[:, :, [1, 4]])
        np.testing.assert_array_equal(ca_slice(X, z), X[:, :, [1, 4]])

    def test_wrapper_preserved(self, rng):
        X = stft(rng.standard_normal((4, 1000)))
        out = ca_slice(X, ChannelSubset((0, 2), 4))
        assert isinstance(out, ComplexSpectrum) and out.shape[-1] == 2 and out.length == 1000

    def test_mismatched_subset(self, rng):
        with pytest.raises(ValueError):
            ca_zero(crandn(rng, 2, 2, 3), ChannelSubset((0,), 4))

    def test_frequency_dependent(self, rng):
        X = crandn(rng, 4, 2000, 16)
        Y, mask = ca_freq_dependent(X, 0.25, rng)
        assert mask.shape == (2000, 16) and mask.dtype == bool
        np.testing.assert_array_equal(Y, X * mask)
        kept = mask.sum(axis=1)
        assert kept.mean() == pytest.approx(4.0, abs=0.15)
        assert kept.var() == pytest.approx(3.0, abs=0.4)
        assert np.all(ca_freq_dependent(X, 1.0, rng)[1])

    def test_mvdr_restrictions(self, rng):
        X = crandn(rng, 2, 3, 4)
        with pytest.raises(ValueError, match="zeroing"):
            channel_augment(X, ChannelAugmentPolicy("freq_independent_zero", 2, 2), rng, "mvdr")
        with pytest.raises(ValueError):
            channel_augment(X, ChannelAugmentPolicy("freq_dependent", p_keep=0.5), rng, "mvdr")
        Y, z = channel_augment(X, slice_policy(2, 3), rng, "mvdr")
        assert Y.shape[-1] == len(z)


class TestSpecAugment:
    def test_regions_are_zeroed_and_rest_untouched(self, rng):
        feat = rng.standard_normal((100, 80)) + 5
        out, fr, tr = spec_augment(feat, SpecAugmentPolicy(15, 2, 20, 2), rng, return_regions=True)
        mask = np.ones_like(feat, dtype=bool)
        for s, w in fr:
            assert 0 <= w <= 15 and s + w <= 80
            mask[:, s:s + w] = False
        for s, w in tr:
            assert 0 <= w <= 20 and s + w <= 100
            mask[s:s + w] = False
        np.testing.assert_array_equal(out[~mask], 0)
        np.testing.assert_array_equal(out[mask], feat[mask])

    def test_width_distribution_uniform(self):
        rng = make_rng(4)
        feat = np.ones((10, 80))
        widths = [spec_augment(feat, SpecAugmentPolicy(15, 1), rng, True)[1][0][1] for _ in range(8000)]
        assert stats.chisquare(np.bincount(widths, minlength=16)).pvalue > 0.01

    def test_f_max_too_large(self, rng):
        with pytest.raises(ValueError):
            spec_augment(np.ones((5, 10)), SpecAugmentPolicy(f_max=11, m_f=1), rng)

    def test_time_width_clipped(self, rng):
        out = spec_augment(np.ones((3, 10)), SpecAugmentPolicy(0, 0, 50, 5), rng)
        assert out.shape == (3, 10)

    def test_noop_policy(self, rng):
        feat = rng.standard_normal((7, 9))
        np.testing.assert_array_equal(spec_augment(feat, SpecAugmentPolicy(0, 0, 0, 0), rng), feat)
