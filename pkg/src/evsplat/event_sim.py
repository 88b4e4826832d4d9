"""Ground-truth synthesis: sharp frame sequences, blur, and ideal event streams.

The event model is an ideal noise-free DVS: per pixel it tracks a log-intensity
reference level and emits one event of polarity sign(d) every time the level
moves a full contrast threshold away from the reference. This keeps the
downstream double-integral identities exact up to threshold quantization,
which is what makes the simulator usable as an oracle.

Log intensity is always ln(I + LOG_EPS) with the package-wide LOG_EPS so the
simulator and the event losses agree on black pixels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import rasterizer
from .core import CameraView, DataError, GaussianCloud, luminance, quat_slerp

LOG_EPS = 1e-3

EVT1_MAGIC = b"EVT1"
_EVT1_RECORD = np.dtype([("t", "<f8"), ("x", "<u2"), ("y", "<u2"), ("p", "<i1")])


@dataclass(frozen=True)
class Event:
    t: float
    x: int
    y: int
    polarity: int


@dataclass
class EventStream:
    """Column-oriented event list, sorted by (t, y, x)."""

    t: np.ndarray          # seconds, float64
    x: np.ndarray          # column index
    y: np.ndarray          # row index
    polarity: np.ndarray   # +1 / -1, int8
    width: int
    height: int

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> Event:
        return Event(float(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.polarity[i]))

    @classmethod
    def from_arrays(cls, t, x, y, polarity, width, height) -> "EventStream":
        t = np.asarray(t, dtype=np.float64)
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        polarity = np.asarray(polarity, dtype=np.int8)
        order = np.lexsort((polarity, x, y, t))
        if len(t) and (x.min() < 0 or x.max() >= width or y.min() < 0 or y.max() >= height):
            raise DataError("event coordinates outside the sensor resolution")
        return cls(t[order], x[order], y[order], polarity[order], int(width), int(height))


@dataclass
class EventBins:
    """Per-bin per-pixel signed polarity sums over one exposure window."""

    counts: np.ndarray     # (b, H, W) float64
    window: tuple          # (t_start, t_end) seconds

    @property
    def num_bins(self) -> int:
        return self.counts.shape[0]

    @property
    def resolution(self) -> tuple:
        return self.counts.shape[2], self.counts.shape[1]


@dataclass
class ShakeTrajectory:
    """Camera-frame SE(3) offsets for latent steps 0..b of one exposure.

    Step 0 must be the identity so the blur is anchored at the nominal view.
    """

    base_view: CameraView
    rot_offsets: np.ndarray      # (b+1, 4) unit quaternions
    trans_offsets: np.ndarray    # (b+1, 3)
    exposure: float              # seconds

    def __post_init__(self):
        self.rot_offsets = np.atleast_2d(np.asarray(self.rot_offsets, dtype=np.float64))
        self.trans_offsets = np.atleast_2d(np.asarray(self.trans_offsets, dtype=np.float64))
        if len(self.rot_offsets) != len(self.trans_offsets) or len(self.rot_offsets) < 2:
            raise DataError("trajectory needs matching offsets for steps 0..b, b >= 1")
        ident = np.abs(self.rot_offsets[0] / np.linalg.norm(self.rot_offsets[0]))
        if abs(ident[0] - 1.0) > 1e-9 or np.linalg.norm(self.trans_offsets[0]) > 1e-12:
            raise DataError("trajectory step 0 must be the identity offset")
        if self.exposure <= 0:
            raise DataError("exposure must be positive")

    @property
    def num_bins(self) -> int:
        return len(self.rot_offsets) - 1

    def step_views(self, substeps: int = 1):
        """Camera views and timestamps at each (sub)step.

        substeps=1 gives the b+1 keyframe views. substeps=m interpolates m-1
        extra views between consecutive keyframes (slerp + lerp), for smoother
        blur without changing the b-frame contract.
        """
        if substeps < 1:
            raise DataError("substeps must be >= 1")
        b = self.num_bins
        views, times = [], []
        for k in range(b + 1):
            views.append(self.base_view.offset_by(self.rot_offsets[k], self.trans_offsets[k]))
            times.append(k * self.exposure / b)
            if substeps > 1 and k < b:
                for j in range(1, substeps):
                    f = j / substeps
                    q = quat_slerp(self.rot_offsets[k], self.rot_offsets[k + 1], f)
                    tr = (1 - f) * self.trans_offsets[k] + f * self.trans_offsets[k + 1]
                    views.append(self.base_view.offset_by(q, tr))
                    times.append((k + f) * self.exposure / b)
        return views, np.asarray(times)


# ---------------------------------------------------------------------------
# synthesis


def render_sharp_sequence(cloud: GaussianCloud, traj: ShakeTrajectory,
                          background=(0.0, 0.0, 0.0), substeps: int = 1):
    """Render one sharp frame per trajectory (sub)step; returns (frames, times)."""
    views, times = traj.step_views(substeps)
    frames = [rasterizer.forward(cloud, v, background)[0] for v in views]
    return frames, times


def mean_frames(frames):
    """Pixelwise mean, computed so that identical inputs return bit-identical output."""
    if len(frames) == 0:
        raise DataError("cannot average zero frames")
    base = np.asarray(frames[0], dtype=np.float64)
    acc = np.zeros_like(base)
    for f in frames[1:]:
        f = np.asarray(f, dtype=np.float64)
        if f.shape != base.shape:
            raise DataError("frame shape mismatch")
        acc += f - base
    return base + acc / len(frames)


def synthesize_blur(frames) -> np.ndarray:
    """Temporal-average blur model: the blurry frame is the mean of the latents."""
    return mean_frames(frames)


def synthesize_events(frames, timestamps, theta: float,
                      noise_sigma: float = 0.0, rng=None) -> EventStream:
    """Ideal event stream from a sharp frame sequence.

    Per pixel, a reference log level starts at the first frame and each event
    steps it by one threshold; between consecutive frames, floor(|dlog|/theta)
    events fire, stamped at uniformly spaced interior times.
    """
    if theta <= 0:
        raise DataError("invalid contrast threshold")
    if len(frames) != len(timestamps):
        raise DataError("one timestamp per frame required")
    if len(frames) < 2:
        raise DataError("need at least two frames to difference")
    if noise_sigma > 0 and rng is None:
        rng = np.random.default_rng(0)

    h, w = np.asarray(frames[0]).shape[:2]
    logs = [np.log(luminance(f) + LOG_EPS) for f in frames]
    ref = logs[0].copy()

    ts, xs, ys, ps = [], [], [], []
    for i in range(1, len(frames)):
        thr = theta
        if noise_sigma > 0:
            jitter = 1.0 + noise_sigma * rng.standard_normal((h, w))
            thr = theta * np.clip(jitter, 0.1, None)
        diff = logs[i] - ref
        # signed event count; the 1e-9 slack keeps exact multiples of theta firing
        k = np.trunc(diff / thr + np.sign(diff) * 1e-9).astype(np.int64)
        ref = ref + k * thr

        fired = np.nonzero(k)
        counts = np.abs(k[fired])
        if counts.size == 0:
            continue
        total = int(counts.sum())
        src = np.repeat(np.arange(len(counts)), counts)
        j = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        t0, t1 = timestamps[i - 1], timestamps[i]
        ts.append(t0 + (t1 - t0) * (j + 1.0) / (counts[src] + 1.0))
        ys.append(fired[0][src])
        xs.append(fired[1][src])
        ps.append(np.sign(k[fired])[src].astype(np.int8))

    if not ts:
        return EventStream.from_arrays(
            np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64),
            np.empty(0, np.int8), w, h,
        )
    return EventStream.from_arrays(
        np.concatenate(ts), np.concatenate(xs), np.concatenate(ys),
        np.concatenate(ps), w, h,
    )


def bin_events(stream: EventStream, window, b: int) -> EventBins:
    """Partition a stream into b equal sub-intervals of per-pixel signed sums."""
    if b < 1:
        raise DataError("empty binning")
    t0, t1 = float(window[0]), float(window[1])
    if not t0 < t1:
        raise DataError("window start must precede window end")
    counts = np.zeros((b, stream.height, stream.width), dtype=np.float64)
    if len(stream):
        inside = (stream.t >= t0) & (stream.t <= t1)
        t = stream.t[inside]
        idx = np.minimum((b * (t - t0) / (t1 - t0)).astype(np.int64), b - 1)
        np.add.at(counts, (idx, stream.y[inside], stream.x[inside]),
                  stream.polarity[inside].astype(np.float64))
    return EventBins(counts=counts, window=(t0, t1))


# ---------------------------------------------------------------------------
# EVT1 binary format + CSV export


def write_evt(path, stream: EventStream) -> None:
    rec = np.empty(len(stream), dtype=_EVT1_RECORD)
    rec["t"] = stream.t
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["p"] = stream.polarity
    with open(path, "wb") as f:
        f.write(EVT1_MAGIC)
        f.write(struct.pack("<III", stream.width, stream.height, len(stream)))
        f.write(rec.tobytes())


def read_evt(path) -> EventStream:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != EVT1_MAGIC:
            raise DataError(f"not an EVT1 file: bad magic {magic!r}")
        width, height, count = struct.unpack("<III", f.read(12))
        rec = np.frombuffer(f.read(count * _EVT1_RECORD.itemsize), dtype=_EVT1_RECORD)
        if len(rec) != count:
            raise DataError("truncated EVT1 file")
    return EventStream.from_arrays(rec["t"], rec["x"], rec["y"], rec["p"], width, height)


def write_events_csv(path, stream: EventStream) -> None:
    with open(path, "w") as f:
        f.write("t,x,y,p\n")
        for i in range(len(stream)):
            f.write(f"{float(stream.t[i])!r},{int(stream.x[i])},{int(stream.y[i])},{int(stream.polarity[i])}\n")
