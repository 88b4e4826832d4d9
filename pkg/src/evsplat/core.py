"""Shared geometry and image primitives.

Conventions used throughout the package:

* Quaternions are stored (w, x, y, z) and kept unit-norm.
* Camera rotations map world coordinates to camera coordinates; the camera
  looks down +z, x points right, y points down (image row direction).
* Images are numpy arrays, (H, W, 3) or (H, W), float64, linear intensity.
  sRGB conversion happens only at PNG boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from PIL import Image as PILImage


class ConfigError(ValueError):
    """Bad configuration input (CLI exit code 2)."""


class DataError(ValueError):
    """Malformed or inconsistent data (CLI exit code 3)."""


class NumericalError(ArithmeticError):
    """Numerical failure such as overflow or NaN loss (CLI exit code 4)."""


# ---------------------------------------------------------------------------
# scalar reparameterizations


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def inverse_sigmoid(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


# ---------------------------------------------------------------------------
# quaternions


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise DataError("degenerate rotation: zero quaternion")
    return q / n


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a (w, x, y, z) quaternion; normalizes defensively."""
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotmat_to_quat(R: np.ndarray) -> np.ndarray:
    """Inverse of quat_to_rotmat (Shepperd's method, returns w >= 0)."""
    R = np.asarray(R, dtype=np.float64)
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(R[i, i] - R[j, j] - R[k, k] + 1.0) * 2
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n < 1e-15 or abs(angle) < 1e-15:
        return np.array([1.0, 0.0, 0.0, 0.0])
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


def quat_slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Geodesic interpolation between unit quaternions, t in [0, 1]."""
    a = quat_normalize(a)
    b = quat_normalize(b)
    d = float(np.dot(a, b))
    if d < 0:
        b, d = -b, -d
    if d > 1.0 - 1e-12:
        return quat_normalize(a + t * (b - a))
    ang = np.arccos(min(d, 1.0))
    return quat_normalize(
        (np.sin((1 - t) * ang) * a + np.sin(t * ang) * b) / np.sin(ang)
    )


def covariance_from(scale: np.ndarray, q: np.ndarray) -> np.ndarray:
    """World covariance R diag(s^2) R^T of per-axis stddevs and orientation."""
    scale = np.asarray(scale, dtype=np.float64)
    if scale.shape != (3,) or np.any(scale <= 0):
        raise DataError("invalid scale: components must be positive")
    R = quat_to_rotmat(q)
    return (R * scale**2) @ R.T


# ---------------------------------------------------------------------------
# scene and camera types


@dataclass(frozen=True)
class Gaussian:
    """One anisotropic Gaussian primitive, natural (non-reparameterized) units."""

    position: np.ndarray
    rotation: np.ndarray          # unit quaternion (w, x, y, z)
    scale: np.ndarray             # per-axis stddev, > 0
    opacity: float                # in (0, 1)
    color: np.ndarray             # RGB in [0, 1]

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "rotation", quat_normalize(self.rotation))
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=np.float64))
        object.__setattr__(self, "color", np.asarray(self.color, dtype=np.float64))
        if np.any(self.scale <= 0):
            raise DataError("invalid scale: components must be positive")
        if not 0.0 < self.opacity < 1.0:
            raise DataError("opacity must lie strictly inside (0, 1)")
        if np.any(self.color < 0) or np.any(self.color > 1):
            raise DataError("color components must lie in [0, 1]")


class GaussianCloud:
    """Optimizable scene: struct-of-arrays over N Gaussians.

    Scales are stored as logs and opacities as logits so the optimizer is
    unconstrained; `scales` / `opacities` expose natural units.
    """

    def __init__(self, positions, rotations, log_scales, opacity_logits, colors):
        self.positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
        rotations = np.atleast_2d(np.asarray(rotations, dtype=np.float64))
        # normalize only when off-unit: keeps checkpoint round-trips bit-exact
        if len(rotations):
            norms = np.linalg.norm(rotations, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-12):
                rotations = quat_normalize(rotations)
        self.rotations = rotations
        self.log_scales = np.atleast_2d(np.asarray(log_scales, dtype=np.float64))
        self.opacity_logits = np.atleast_1d(np.asarray(opacity_logits, dtype=np.float64))
        self.colors = np.atleast_2d(np.asarray(colors, dtype=np.float64))
        n = len(self.positions)
        if not (
            self.rotations.shape == (n, 4)
            and self.log_scales.shape == (n, 3)
            and self.opacity_logits.shape == (n,)
            and self.colors.shape == (n, 3)
        ):
            raise DataError("inconsistent Gaussian parameter array shapes")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    @classmethod
    def empty(cls) -> "GaussianCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)), np.zeros(0), np.zeros((0, 3)))

    @classmethod
    def from_gaussians(cls, gaussians) -> "GaussianCloud":
        if len(gaussians) == 0:
            return cls.empty()
        return cls(
            positions=np.stack([g.position for g in gaussians]),
            rotations=np.stack([g.rotation for g in gaussians]),
            log_scales=np.log(np.stack([g.scale for g in gaussians])),
            opacity_logits=inverse_sigmoid([g.opacity for g in gaussians]),
            colors=np.stack([g.color for g in gaussians]),
        )

    def gaussian(self, i: int) -> Gaussian:
        return Gaussian(
            position=self.positions[i],
            rotation=self.rotations[i],
            scale=np.exp(self.log_scales[i]),
            opacity=float(sigmoid(self.opacity_logits[i])),
            color=np.clip(self.colors[i], 0.0, 1.0),
        )

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(
            self.positions.copy(),
            self.rotations.copy(),
            self.log_scales.copy(),
            self.opacity_logits.copy(),
            self.colors.copy(),
        )


@dataclass
class CameraView:
    """Pinhole camera: world-to-camera rotation/translation plus intrinsics."""

    rotation: np.ndarray          # unit quaternion, world -> camera
    translation: np.ndarray       # p_cam = R p_world + t
    focal: tuple                  # (fx, fy) pixels
    principal_point: tuple        # (cx, cy) pixels
    resolution: tuple             # (W, H) pixels

    def __post_init__(self):
        self.rotation = quat_normalize(self.rotation)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.focal[0] <= 0 or self.focal[1] <= 0:
            raise DataError("focal lengths must be positive")
        if self.resolution[0] < 8 or self.resolution[1] < 8:
            raise DataError("resolution below the 8x8 minimum")

    @property
    def rotmat(self) -> np.ndarray:
        return quat_to_rotmat(self.rotation)

    @property
    def camera_center(self) -> np.ndarray:
        return -self.rotmat.T @ self.translation

    def offset_by(self, rot_offset: np.ndarray, trans_offset: np.ndarray) -> "CameraView":
        """Apply a camera-frame SE(3) offset: R' = dR R, t' = dR t + dt."""
        dR = quat_to_rotmat(rot_offset)
        return replace(
            self,
            rotation=quat_multiply(rot_offset, self.rotation),
            translation=dR @ self.translation + np.asarray(trans_offset, dtype=np.float64),
        )


def look_at_view(eye, target, up, focal, resolution, principal_point=None) -> CameraView:
    """Camera at `eye` looking toward `target` (y-down image convention)."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, up)
    if np.linalg.norm(right) < 1e-12:
        raise DataError("look-at up vector is parallel to the view direction")
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])      # world -> camera rows
    W, H = resolution
    if principal_point is None:
        principal_point = ((W - 1) / 2.0, (H - 1) / 2.0)
    return CameraView(
        rotation=rotmat_to_quat(R),
        translation=-R @ eye,
        focal=(float(focal), float(focal)) if np.isscalar(focal) else tuple(focal),
        principal_point=tuple(principal_point),
        resolution=(int(W), int(H)),
    )


# ---------------------------------------------------------------------------
# image buffers

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def luminance(img: np.ndarray) -> np.ndarray:
    """Rec.601 luma of an (H, W, 3) image; single-channel input passes through."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 1:
        return img[:, :, 0]
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError("luminance expects an (H, W, 3) or (H, W) image")
    return img @ LUMA_WEIGHTS


def srgb_encode(linear: np.ndarray) -> np.ndarray:
    linear = np.clip(linear, 0.0, 1.0)
    low = linear <= 0.0031308
    out = np.where(low, 12.92 * linear, 1.055 * np.power(np.maximum(linear, 1e-12), 1 / 2.4) - 0.055)
    return np.clip(out, 0.0, 1.0)


def srgb_decode(encoded: np.ndarray) -> np.ndarray:
    encoded = np.clip(encoded, 0.0, 1.0)
    low = encoded <= 0.04045
    return np.where(low, encoded / 12.92, np.power((encoded + 0.055) / 1.055, 2.4))


def save_png(path, img: np.ndarray) -> None:
    """Write a linear-light image as 8-bit sRGB PNG (clamps to [0, 1])."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None].repeat(3, axis=2)
    data = np.round(srgb_encode(img) * 255.0).astype(np.uint8)
    PILImage.fromarray(data, mode="RGB").save(path, format="PNG")


def load_png(path) -> np.ndarray:
    """Read a PNG back to linear-light float64 (H, W, 3)."""
    with PILImage.open(path) as im:
        data = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return srgb_decode(data)


def save_raw(path, img: np.ndarray) -> None:
    """Lossy-only-to-f16 raw dump for round-trips that must dodge 8-bit PNG."""
    np.save(path, np.asarray(img).astype(np.float16))


def load_raw(path) -> np.ndarray:
    return np.load(path).astype(np.float64)
