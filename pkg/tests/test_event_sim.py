"""Event simulator tests: blur model, ideal event generation, binning, EVT1."""

import numpy as np
import pytest

from evsplat.core import CameraView, DataError, Gaussian, GaussianCloud
from evsplat.event_sim import (
    LOG_EPS,
    EventStream,
    ShakeTrajectory,
    bin_events,
    mean_frames,
    read_evt,
    render_sharp_sequence,
    synthesize_blur,
    synthesize_events,
    write_events_csv,
    write_evt,
)


def _view(w=32, h=32, focal=40.0):
    return CameraView([1, 0, 0, 0], [0, 0, 3.0], (focal, focal), ((w - 1) / 2, (h - 1) / 2), (w, h))


def _identity_traj(view, b=3, exposure=0.1):
    return ShakeTrajectory(
        base_view=view,
        rot_offsets=np.tile([1.0, 0, 0, 0], (b + 1, 1)),
        trans_offsets=np.zeros((b + 1, 3)),
        exposure=exposure,
    )


def _stream_of(events, w=4, h=4):
    t, x, y, p = (np.asarray(col) for col in zip(*events))
    return EventStream.from_arrays(t, x, y, p, w, h)


class TestSynthesizeBlur:
    def test_identical_frames_return_exactly(self):
        frame = np.random.default_rng(0).uniform(size=(8, 8, 3))
        blur = synthesize_blur([frame.copy() for _ in range(5)])
        np.testing.assert_array_equal(blur, frame)

    def test_two_frame_average(self):
        a = np.zeros((4, 4, 3))
        b = np.ones((4, 4, 3))
        np.testing.assert_allclose(synthesize_blur([a, b]), 0.5)

    def test_constant_frames(self):
        consts = [0.1, 0.4, 0.7]
        frames = [np.full((4, 4, 3), c) for c in consts]
        np.testing.assert_allclose(synthesize_blur(frames), np.mean(consts), atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(DataError, match="frame shape mismatch"):
            mean_frames([np.zeros((4, 4, 3)), np.zeros((5, 4, 3))])


class TestRenderSharpSequence:
    def test_identity_trajectory_gives_identical_frames(self):
        cloud = GaussianCloud.from_gaussians(
            [Gaussian([0, 0, 0], [1, 0, 0, 0], [0.2, 0.2, 0.2], 0.8, [0.9, 0.2, 0.2])]
        )
        frames, times = render_sharp_sequence(cloud, _identity_traj(_view()))
        assert len(frames) == 4
        for f in frames[1:]:
            np.testing.assert_array_equal(f, frames[0])
        np.testing.assert_allclose(times, [0, 0.1 / 3, 0.2 / 3, 0.1])

    def test_translation_shifts_centroid_monotonically(self):
        # positive camera-frame x offset pushes the world (and splat) toward +x pixels
        cloud = GaussianCloud.from_gaussians(
            [Gaussian([0, 0, 0], [1, 0, 0, 0], [0.1, 0.1, 0.1], 0.9, [1, 1, 1])]
        )
        b = 4
        traj = ShakeTrajectory(
            base_view=_view(),
            rot_offsets=np.tile([1.0, 0, 0, 0], (b + 1, 1)),
            trans_offsets=np.stack([[0.05 * k, 0.0, 0.0] for k in range(b + 1)]),
            exposure=0.1,
        )
        frames, _ = render_sharp_sequence(cloud, traj)
        xs = np.arange(32)
        centroids = [float((f.sum(axis=2).sum(axis=0) * xs).sum() / f.sum()) for f in frames]
        # projection oracle on the single center: u = fx * dx/z + cx increases with dx
        assert all(later > earlier for earlier, later in zip(centroids, centroids[1:]))

    def test_empty_cloud_renders_background(self):
        frames, _ = render_sharp_sequence(
            GaussianCloud.empty(), _identity_traj(_view()), background=(0.2, 0.3, 0.4)
        )
        for f in frames:
            np.testing.assert_allclose(f, np.broadcast_to([0.2, 0.3, 0.4], f.shape))


class TestSynthesizeEvents:
    def test_constant_frames_emit_nothing(self):
        frame = np.full((4, 4, 3), 0.3)
        stream = synthesize_events([frame, frame.copy(), frame.copy()], [0.0, 0.1, 0.2], 0.2)
        assert len(stream) == 0

    def test_exact_two_threshold_step(self):
        theta = 0.2
        lo = np.full((4, 4), 0.2)
        hi = np.exp(np.log(lo + LOG_EPS) + 2 * theta) - LOG_EPS
        stream = synthesize_events([lo, hi], [0.0, 1.0], theta)
        # oracle: floor(dlog/theta) = 2 events at every one of the 16 pixels
        assert len(stream) == 32
        assert np.all(stream.polarity == 1)
        counts = np.zeros((4, 4))
        np.add.at(counts, (stream.y, stream.x), 1)
        np.testing.assert_array_equal(counts, 2)

    def test_halving_brightness_one_negative_event(self):
        theta = np.log(2.0)
        hi = np.full((3, 3), 0.5)
        lo = (hi + LOG_EPS) / 2.0 - LOG_EPS  # exactly halves I + eps
        stream = synthesize_events([hi, lo], [0.0, 1.0], theta)
        assert len(stream) == 9
        assert np.all(stream.polarity == -1)

    def test_reference_tracking_bound(self):
        rng = np.random.default_rng(1)
        theta = 0.15
        frames = [rng.uniform(0.05, 0.9, (6, 6)) for _ in range(5)]
        stream = synthesize_events(frames, np.linspace(0, 1, 5), theta)
        signed = np.zeros((6, 6))
        np.add.at(signed, (stream.y, stream.x), stream.polarity.astype(float))
        dlog = np.log(frames[-1] + LOG_EPS) - np.log(frames[0] + LOG_EPS)
        assert np.all(np.abs(dlog - signed * theta) < theta)

    def test_doubling_theta_never_increases_counts(self):
        rng = np.random.default_rng(2)
        frames = [rng.uniform(0.05, 0.9, (8, 8)) for _ in range(4)]
        times = np.linspace(0, 1, 4)
        for theta in (0.05, 0.1, 0.2, 0.4):
            n1 = len(synthesize_events(frames, times, theta))
            n2 = len(synthesize_events(frames, times, 2 * theta))
            assert n2 <= n1

    def test_invalid_threshold(self):
        with pytest.raises(DataError, match="invalid contrast threshold"):
            synthesize_events([np.zeros((2, 2))] * 2, [0, 1], 0.0)

    def test_timestamps_sorted_and_interior(self):
        rng = np.random.default_rng(3)
        frames = [rng.uniform(0.05, 0.9, (8, 8)) for _ in range(4)]
        stream = synthesize_events(frames, [0.0, 0.1, 0.2, 0.3], 0.1)
        assert np.all(np.diff(stream.t) >= 0)
        assert stream.t.min() > 0.0 and stream.t.max() < 0.3


class TestBinEvents:
    def test_empty_stream(self):
        stream = _stream_of([], 4, 4) if False else EventStream.from_arrays(
            np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.int8), 4, 4
        )
        bins = bin_events(stream, (0.0, 1.0), 3)
        assert bins.counts.shape == (3, 4, 4)
        np.testing.assert_array_equal(bins.counts, 0.0)

    def test_counting_in_one_bin(self):
        stream = _stream_of([(0.4, 1, 2, 1), (0.45, 1, 2, 1), (0.5, 1, 2, 1)])
        bins = bin_events(stream, (0.0, 1.0), 3)
        assert bins.counts[1, 2, 1] == 3.0
        assert bins.counts.sum() == 3.0

    def test_partition_sums_telescope(self):
        rng = np.random.default_rng(4)
        n = 500
        stream = EventStream.from_arrays(
            rng.uniform(0, 1, n), rng.integers(0, 8, n), rng.integers(0, 8, n),
            rng.choice([-1, 1], n), 8, 8,
        )
        full = bin_events(stream, (0.0, 1.0), 1).counts[0]
        for b in (2, 3, 5, 8):
            parts = bin_events(stream, (0.0, 1.0), b).counts.sum(axis=0)
            np.testing.assert_array_equal(parts, full)

    def test_events_outside_window_dropped(self):
        stream = _stream_of([(0.1, 0, 0, 1), (0.9, 0, 0, 1), (1.5, 0, 0, 1)])
        bins = bin_events(stream, (0.0, 1.0), 2)
        assert bins.counts.sum() == 2.0

    def test_zero_bins_rejected(self):
        stream = _stream_of([(0.1, 0, 0, 1)])
        with pytest.raises(DataError, match="empty binning"):
            bin_events(stream, (0.0, 1.0), 0)


class TestEvt1Format:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        n = 200
        stream = EventStream.from_arrays(
            rng.uniform(0, 0.5, n), rng.integers(0, 64, n), rng.integers(0, 48, n),
            rng.choice([-1, 1], n), 64, 48,
        )
        path = tmp_path / "events.evt"
        write_evt(path, stream)
        back = read_evt(path)
        assert back.width == 64 and back.height == 48
        np.testing.assert_array_equal(back.t, stream.t)
        np.testing.assert_array_equal(back.x, stream.x)
        np.testing.assert_array_equal(back.y, stream.y)
        np.testing.assert_array_equal(back.polarity, stream.polarity)

    def test_header_layout(self, tmp_path):
        stream = _stream_of([(0.5, 3, 1, -1)], 7, 9)
        path = tmp_path / "one.evt"
        write_evt(path, stream)
        raw = path.read_bytes()
        assert raw[:4] == b"EVT1"
        assert int.from_bytes(raw[4:8], "little") == 7
        assert int.from_bytes(raw[8:12], "little") == 9
        assert int.from_bytes(raw[12:16], "little") == 1
        assert len(raw) == 16 + 13

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.evt"
        path.write_bytes(b"NOPE" + b"\x00" * 12)
        with pytest.raises(DataError, match="bad magic"):
            read_evt(path)

    def test_csv_export(self, tmp_path):
        stream = _stream_of([(0.25, 2, 3, 1), (0.5, 0, 1, -1)])
        path = tmp_path / "events.csv"
        write_events_csv(path, stream)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "t,x,y,p"
        assert lines[1] == "0.25,2,3,1"
        assert lines[2] == "0.5,0,1,-1"


class TestTrajectoryValidation:
    def test_step0_must_be_identity(self):
        with pytest.raises(DataError, match="identity"):
            ShakeTrajectory(
                base_view=_view(),
                rot_offsets=np.array([[0.9, 0.1, 0, 0], [1, 0, 0, 0]]),
                trans_offsets=np.zeros((2, 3)),
                exposure=0.1,
            )

    def test_substep_interpolation_counts(self):
        traj = _identity_traj(_view(), b=2)
        views, times = traj.step_views(substeps=3)
        assert len(views) == 7  # 2 bins * 3 substeps + 1
        assert times[0] == 0.0 and times[-1] == pytest.approx(0.1)
