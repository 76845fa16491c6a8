import math

import numpy as np
import pytest

from facedyn import geometry as geo
from facedyn import trajectory as tj


def rot(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def random_sequence(rng, n_frames=12, n=8, sid="s0", subj="u0", label=1.0):
    frames = rng.standard_normal((n_frames, n, 2))
    return tj.RawSequence(sequence_id=sid, subject_id=subj, label=label, frames=frames)


def quarter_map(n):
    return tj.default_region_map(n)


class TestCenterAndScale:
    def test_center_simple(self):
        out = tj.center_frame(np.array([[0.0, 0.0], [2.0, 2.0]]))
        assert np.allclose(out, [[-1, -1], [1, 1]])

    def test_center_idempotent(self):
        z = np.array([[-1.0, 0.5], [1.0, -0.5]])
        assert np.allclose(tj.center_frame(z), z)

    def test_center_random_zero_mean(self):
        rng = np.random.default_rng(0)
        out = tj.center_frame(rng.standard_normal((30, 2)) * 100)
        assert np.all(np.abs(out.sum(axis=0)) < 1e-11)

    def test_center_empty(self):
        with pytest.raises(ValueError):
            tj.center_frame(np.zeros((0, 2)))

    def test_scale_unit_norm(self):
        out = tj.scale_normalize(np.array([[3.0, 0.0], [-3.0, 0.0]]))
        assert np.linalg.norm(out) == pytest.approx(1.0)

    def test_scale_zero_passthrough(self):
        z = np.zeros((4, 2))
        assert np.allclose(tj.scale_normalize(z), z)

    def test_scale_random(self):
        rng = np.random.default_rng(1)
        out = tj.scale_normalize(rng.standard_normal((10, 2)))
        assert np.linalg.norm(out) == pytest.approx(1.0)


class TestVelocities:
    def test_single_step(self):
        v = tj.velocities(np.array([[[0.0, 0.0]], [[1.0, 1.0]]]))
        assert np.allclose(v, [[[1.0, 1.0]]])

    def test_constant_sequence(self):
        frames = np.ones((5, 3, 2))
        assert np.allclose(tj.velocities(frames), 0.0)

    def test_length_contract(self):
        frames = np.arange(3 * 2 * 2, dtype=float).reshape(3, 2, 2)
        v = tj.velocities(frames)
        assert v.shape == (2, 2, 2)
        assert np.allclose(v[0], frames[1] - frames[0])
        assert np.allclose(v[1], frames[2] - frames[1])

    def test_too_short(self):
        with pytest.raises(ValueError):
            tj.velocities(np.zeros((1, 2, 2)))


class TestSubsample:
    def test_half(self):
        frames = np.arange(8)
        assert tj.subsample(frames, 0.5).tolist() == [0, 2, 4, 6]

    def test_quarter(self):
        frames = np.arange(8)
        assert tj.subsample(frames, 0.25).tolist() == [0, 4]

    def test_identity(self):
        frames = np.arange(5)
        assert tj.subsample(frames, 1.0).tolist() == list(range(5))

    def test_keep_every_k_generalization(self):
        frames = np.arange(9)
        assert tj.subsample(frames, 1 / 3).tolist() == [0, 3, 6]

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            tj.subsample(np.arange(4), 0.37)


class TestRegionMap:
    def test_default_68(self):
        rm = tj.default_region_map(68)
        assert rm["jaw"] == list(range(17))
        assert rm["mouth"] == list(range(48, 68))
        assert set(rm["eyes"]) == set(range(17, 27)) | set(range(36, 48))

    def test_default_66_mouth(self):
        rm = tj.default_region_map(66)
        assert rm["mouth"] == list(range(48, 66))

    def test_overlap_rejected(self):
        with pytest.raises(tj.RegionMapError):
            tj.RegionMap({"a": [0, 1], "b": [1, 2]})

    def test_empty_rejected(self):
        with pytest.raises(tj.RegionMapError):
            tj.RegionMap({"a": [], "b": [1]})

    def test_out_of_range(self):
        rm = tj.default_region_map(68)
        with pytest.raises(tj.RegionMapError):
            rm.validate_for(40)

    def test_whole_face(self):
        wf = tj.default_region_map(68).whole_face()
        assert wf["whole_face"] == list(range(68))


class TestBuildTrajectories:
    def test_shapes_and_m(self):
        rng = np.random.default_rng(2)
        seq = random_sequence(rng, n_frames=11, n=68)
        trajs = tj.build_trajectories(seq, tj.default_region_map(68))
        assert len(trajs["jaw"]) == 10
        assert trajs["jaw"].m == 34  # 17 jaw landmarks
        assert trajs["mouth"].m == 40

    def test_stacking_order(self):
        # positions rows first, then velocities: verify against manual build
        rng = np.random.default_rng(3)
        seq = random_sequence(rng, n_frames=6, n=8)
        rm = quarter_map(8)
        trajs = tj.build_trajectories(seq, rm, scale=False)
        centered = seq.frames - seq.frames.mean(axis=1, keepdims=True)
        vel = centered[1:] - centered[:-1]
        idx = rm["jaw"]
        f0 = trajs["jaw"].points[0]
        assert np.allclose(f0[: len(idx)], centered[0][idx])
        assert np.allclose(f0[len(idx) :], vel[0][idx])

    def test_single_point_region_annihilated(self):
        frames = np.array([[[0.0, 0.0]], [[1.0, 1.0]], [[2.0, 0.0]]])
        seq = tj.RawSequence("s", "u", 0.0, frames)
        rm = tj.RegionMap({"only": [0]})
        trajs = tj.build_trajectories(seq, rm, scale=False)
        assert np.allclose(trajs["only"].points, 0.0)

    def test_sampling_before_velocity(self):
        # velocities are displacements between *retained* frames
        rng = np.random.default_rng(4)
        seq = random_sequence(rng, n_frames=9, n=8)
        rm = quarter_map(8)
        trajs = tj.build_trajectories(seq, rm, sampling_rate=0.5, scale=False)
        centered = seq.frames - seq.frames.mean(axis=1, keepdims=True)
        kept = centered[::2]
        expected_v = (kept[1] - kept[0])[rm["jaw"]]
        got_v = trajs["jaw"].points[0][len(rm["jaw"]) :]
        assert np.allclose(got_v, expected_v)

    def test_times_are_retained_indices(self):
        rng = np.random.default_rng(5)
        seq = random_sequence(rng, n_frames=9, n=8)
        trajs = tj.build_trajectories(seq, quarter_map(8), sampling_rate=0.5)
        assert trajs["jaw"].times.tolist() == [0, 2, 4, 6]

    def test_region_index_out_of_range(self):
        rng = np.random.default_rng(6)
        seq = random_sequence(rng, n_frames=5, n=8)
        with pytest.raises(tj.RegionMapError):
            tj.build_trajectories(seq, tj.RegionMap({"bad": [7, 8]}))


class TestInvariance:
    def test_translation_and_rotation_invariance(self):
        rng = np.random.default_rng(7)
        seq_a = random_sequence(rng, sid="a")
        seq_b = random_sequence(rng, sid="b")
        rm = quarter_map(8)
        r = rot(0.77)
        shift = np.array([13.0, -4.0])

        def transformed(seq):
            frames = seq.frames @ r.T + shift
            return tj.RawSequence(seq.sequence_id, seq.subject_id, seq.label, frames)

        ta = tj.build_trajectories(seq_a, rm)["jaw"]
        tb = tj.build_trajectories(seq_b, rm)["jaw"]
        ta2 = tj.build_trajectories(transformed(seq_a), rm)["jaw"]
        tb2 = tj.build_trajectories(transformed(seq_b), rm)["jaw"]
        for i in range(len(ta)):
            for j in range(len(tb)):
                d1 = geo.distance(ta.points[i], tb.points[j])
                d2 = geo.distance(ta2.points[i], tb2.points[j])
                assert abs(d1 - d2) < 1e-9


class TestFlip:
    def test_flip_coordinates(self):
        frames = np.array([[[1.0, 2.0]], [[3.0, 4.0]]])
        flipped = tj.flip_augment(tj.RawSequence("s", "u", 2.0, frames))
        assert np.allclose(flipped.frames[0], [[-1.0, 2.0]])
        assert flipped.sequence_id == "s+flip"
        assert flipped.subject_id == "u"
        assert flipped.label == 2.0
        assert flipped.augmented

    def test_double_flip_restores(self):
        rng = np.random.default_rng(8)
        seq = random_sequence(rng)
        double = tj.flip_augment(tj.flip_augment(seq))
        assert np.allclose(double.frames, seq.frames)

    def test_flip_changes_distances_for_asymmetric_input(self):
        # reflections are outside the SO(2) quotient, so a generic flip
        # is a genuinely different trajectory
        rng = np.random.default_rng(9)
        seq = random_sequence(rng, n_frames=6, n=8)
        rm = quarter_map(8)
        orig = tj.build_trajectories(seq, rm)["jaw"]
        flip = tj.build_trajectories(tj.flip_augment(seq), rm)["jaw"]
        total = sum(
            geo.distance(orig.points[i], flip.points[i]) for i in range(len(orig))
        )
        assert total > 1e-3


class TestAugmentation:
    def make_dataset(self, counts):
        rng = np.random.default_rng(10)
        data = []
        for label, count in counts.items():
            for i in range(count):
                data.append(
                    random_sequence(rng, sid=f"l{label}_{i}", label=float(label))
                )
        return data

    def test_below_mean_rule(self):
        data = self.make_dataset({0: 10, 1: 2})
        out = tj.augment_minority_classes(data)
        flipped = [s for s in out if s.augmented]
        assert len(flipped) == 2
        assert all(s.label == 1.0 for s in flipped)
        assert len([s for s in out if not s.augmented]) == 12

    def test_balanced_unchanged(self):
        data = self.make_dataset({0: 5, 1: 5})
        assert len(tj.augment_minority_classes(data)) == 10

    def test_explicit_label_rule(self):
        data = self.make_dataset({0: 3, 5: 3, 7: 3})
        out = tj.augment_minority_classes(data, rule="labels", labels=[5.0, 7.0])
        flipped = [s for s in out if s.augmented]
        assert len(flipped) == 6
        assert {s.label for s in flipped} == {5.0, 7.0}

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            tj.augment_minority_classes([])
