import numpy as np
import pytest

from tvseg import datagen
from tvseg.datagen import PRESETS, SyntheticSpec, generate, separation
from tvseg.errors import InvalidInputError
from tvseg.tvs import neighborhoods_from_eq


class TestSpecValidation:
    def test_min_length_budget(self):
        with pytest.raises(InvalidInputError):
            SyntheticSpec(10, 3, 8, 2, 4, 0.0)

    def test_orthogonal_dimension_budget(self):
        with pytest.raises(InvalidInputError):
            SyntheticSpec(20, 4, 8, 3, 5, 0.0, orthogonal=True)

    def test_preset_s1_valid(self):
        spec = PRESETS["S1"]
        assert spec.n_frames == 300
        assert spec.n_segments == 4
        assert spec.min_segment_len * spec.n_segments <= spec.n_frames


class TestGenerate:
    def test_noiseless_exact_membership(self):
        spec = SyntheticSpec(60, 3, 12, 2, 10, 0.0, rng_seed=0)
        inst = generate(spec)
        for g in range(3):
            basis = inst.bases[g]
            cols = inst.x[:, inst.labels == g]
            residual = cols - basis @ (basis.T @ cols)
            assert np.abs(residual).max() <= 1e-12

    def test_single_segment(self):
        spec = SyntheticSpec(20, 1, 6, 2, 5, 0.01, rng_seed=1)
        inst = generate(spec)
        assert np.all(inst.eq_true.eq == 1)
        assert len(set(inst.labels.tolist())) == 1

    def test_s1_bases_pairwise_orthogonal(self):
        inst = generate(PRESETS["S1"].with_(rng_seed=2))
        for g in range(4):
            for h in range(g + 1, 4):
                gram = inst.bases[g].T @ inst.bases[h]
                assert np.abs(gram).max() <= 1e-12

    def test_segment_lengths_respect_minimum(self):
        inst = generate(PRESETS["S1"].with_(rng_seed=3))
        assert np.all(inst.segment_lengths >= 50)
        assert inst.segment_lengths.sum() == 300

    def test_eq_zero_exactly_at_boundaries(self):
        inst = generate(PRESETS["S1"].with_(rng_seed=4))
        cuts = np.flatnonzero(inst.eq_true.eq == 0)
        boundaries = np.flatnonzero(np.diff(inst.labels) != 0)
        assert np.array_equal(cuts, boundaries)

    def test_deterministic(self):
        a = generate(PRESETS["S1"].with_(rng_seed=5))
        b = generate(PRESETS["S1"].with_(rng_seed=5))
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.labels, b.labels)

    def test_roundtrip_runs_match_segments(self):
        inst = generate(PRESETS["S1"].with_(rng_seed=6))
        structure = neighborhoods_from_eq(inst.eq_true)
        # every run is exactly one true segment
        starts = np.unique(structure.bounds[:, 0])
        seg_starts = np.concatenate(([0], np.cumsum(inst.segment_lengths)[:-1]))
        assert np.array_equal(starts, seg_starts)

    def test_noise_std_recovered(self):
        spec = PRESETS["S1"].with_(rng_seed=7)
        inst = generate(spec)
        total = 0.0
        dof = 0
        for g in range(4):
            basis = inst.bases[g]
            cols = inst.x[:, inst.labels == g]
            residual = cols - basis @ (basis.T @ cols)
            total += float(np.sum(residual**2))
            dof += cols.shape[1] * (spec.ambient_dim - spec.subspace_dim)
        estimate = np.sqrt(total / dof)
        assert abs(estimate / spec.noise_std - 1.0) <= 0.1


class TestSeparation:
    def test_orthogonal_is_one(self):
        inst = generate(PRESETS["S1"].with_(rng_seed=8))
        assert separation(inst) == pytest.approx(1.0, abs=1e-12)

    def test_identical_bases_zero(self):
        inst = generate(SyntheticSpec(30, 2, 10, 2, 10, 0.0, rng_seed=9))
        shared = inst.bases[0]
        rigged = datagen.GeneratedSequence(
            x=inst.x,
            labels=inst.labels,
            eq_true=inst.eq_true,
            bases=(shared, shared),
            segment_lengths=inst.segment_lengths,
        )
        assert separation(rigged) == pytest.approx(0.0, abs=1e-12)

    def test_matches_svd_oracle(self):
        spec = SyntheticSpec(40, 3, 10, 2, 10, 0.0, orthogonal=False, rng_seed=10)
        inst = generate(spec)
        best = np.inf
        for g in range(3):
            for h in range(g + 1, 3):
                smax = max(np.linalg.svd(inst.bases[g].T @ inst.bases[h])[1])
                best = min(best, 1 - smax**2)
        assert separation(inst) == pytest.approx(best, rel=1e-12)
