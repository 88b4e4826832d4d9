"""Training losses: blurriness (L1 + D-SSIM against the observed blurry frame)
and event integration (L1 between measured and render-estimated event maps).
Every loss returns its value together with the gradient w.r.t. its image
argument so the trainer can chain through the rasterizer.

SSIM uses the standard 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03 at
dynamic range 1, computed per channel and averaged. Windowing pads
symmetrically so constant images stay constant (the constant-vs-constant case
then matches the scalar SSIM formula exactly). Images smaller than the window
fall back to global-statistics SSIM.

L1 terms are per-pixel means, so loss magnitudes are resolution-independent;
the subgradient of |x| at x = 0 is taken as 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d, correlate2d

from .core import DataError, LUMA_WEIGHTS, luminance
from .event_sim import LOG_EPS, EventBins

logger = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass
class LossWeights:
    lambda_dssim: float = 0.2
    lambda_event: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.lambda_dssim <= 1.0:
            raise DataError("lambda_dssim must lie in [0, 1]")
        if self.lambda_event < 0.0:
            raise DataError("lambda_event must be nonnegative")
        if self.lambda_event > 1.0:
            logger.warning("lambda_event=%g exceeds 1; event term will dominate", self.lambda_event)


@dataclass
class EventMaps:
    measured: np.ndarray     # (H, W) integrated polarity map, log-intensity units
    estimated: np.ndarray    # (H, W) log-difference of rendered frames

    def __post_init__(self):
        if self.measured.shape != self.estimated.shape:
            raise DataError("event map shape mismatch")


# ---------------------------------------------------------------------------
# latent averaging


def average_latents(renders) -> np.ndarray:
    """Mean of the b+1 latent renders (the estimated blurry frame).

    Computed as first + mean(differences) so that identical inputs (the
    zero-init deviation case) reproduce the base render bit-exactly. A loss
    gradient g on the output distributes as g / (b+1) to every input.
    """
    if len(renders) == 0:
        raise DataError("cannot average zero renders")
    base = np.asarray(renders[0], dtype=np.float64)
    acc = np.zeros_like(base)
    for r in renders[1:]:
        r = np.asarray(r, dtype=np.float64)
        if r.shape != base.shape:
            raise DataError("render shape mismatch")
        acc += r - base
    return base + acc / len(renders)


# ---------------------------------------------------------------------------
# SSIM / D-SSIM


def _gaussian_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    g = np.exp(-0.5 * (np.arange(-half, half + 1) / SSIM_SIGMA) ** 2)
    g /= g.sum()
    return np.outer(g, g)


_WINDOW = _gaussian_window()


def _pad_indices(n: int, pad: int) -> np.ndarray:
    return np.concatenate([np.arange(pad)[::-1], np.arange(n), np.arange(n - 1, n - 1 - pad, -1)])


def _filter(x: np.ndarray) -> np.ndarray:
    """Windowed local mean with symmetric padding (keeps constants constant)."""
    pad = SSIM_WINDOW // 2
    iy = _pad_indices(x.shape[0], pad)
    ix = _pad_indices(x.shape[1], pad)
    return correlate2d(x[np.ix_(iy, ix)], _WINDOW, mode="valid")


def _filter_adjoint(g: np.ndarray) -> np.ndarray:
    """Exact adjoint of _filter: full convolution, then fold the padding back."""
    pad = SSIM_WINDOW // 2
    gpad = convolve2d(g, _WINDOW, mode="full")
    h = g.shape[0]
    w = g.shape[1]
    iy = _pad_indices(h, pad)
    ix = _pad_indices(w, pad)
    out = np.zeros((h, w))
    np.add.at(out, (iy[:, None].repeat(len(ix), 1), ix[None, :].repeat(len(iy), 0)), gpad)
    return out


def _ssim_channel(a: np.ndarray, b: np.ndarray):
    """SSIM of one channel plus d(SSIM)/da; windowed or global fallback."""
    h, w = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        return _ssim_global(a, b)

    mu_a, mu_b = _filter(a), _filter(b)
    m_aa, m_bb, m_ab = _filter(a * a), _filter(b * b), _filter(a * b)
    sa = m_aa - mu_a**2
    sb = m_bb - mu_b**2
    sab = m_ab - mu_a * mu_b

    n1 = 2 * mu_a * mu_b + SSIM_C1
    n2 = 2 * sab + SSIM_C2
    d1 = mu_a**2 + mu_b**2 + SSIM_C1
    d2 = sa + sb + SSIM_C2
    s = (n1 * n2) / (d1 * d2)
    value = float(s.mean())

    # mean over pixels: upstream gradient is uniform
    g = np.full_like(s, 1.0 / s.size)
    gn1 = g * n2 / (d1 * d2)
    gn2 = g * n1 / (d1 * d2)
    gd1 = -g * s / d1
    gd2 = -g * s / d2

    g_mu_a = gn1 * 2 * mu_b + gn2 * 2 * (-mu_b) + gd1 * 2 * mu_a + gd2 * (-2 * mu_a)
    g_maa = gd2
    g_mab = gn2 * 2

    grad = _filter_adjoint(g_mu_a)
    grad += _filter_adjoint(g_maa) * (2 * a)
    grad += _filter_adjoint(g_mab) * b
    return value, grad


def _ssim_global(a: np.ndarray, b: np.ndarray):
    n = a.size
    mu_a, mu_b = a.mean(), b.mean()
    sa = ((a - mu_a) ** 2).mean()
    sb = ((b - mu_b) ** 2).mean()
    sab = ((a - mu_a) * (b - mu_b)).mean()
    n1 = 2 * mu_a * mu_b + SSIM_C1
    n2 = 2 * sab + SSIM_C2
    d1 = mu_a**2 + mu_b**2 + SSIM_C1
    d2 = sa + sb + SSIM_C2
    s = (n1 * n2) / (d1 * d2)

    gn1 = n2 / (d1 * d2)
    gn2 = n1 / (d1 * d2)
    gd1 = -s / d1
    gd2 = -s / d2
    # d mu_a/da = 1/n; d sa/da = 2(a-mu_a)/n; d sab/da = (b-mu_b)/n
    grad = (
        (gn1 * 2 * mu_b + gd1 * 2 * mu_a) / n
        + gd2 * 2 * (a - mu_a) / n
        + gn2 * 2 * (b - mu_b) / n
    )
    return float(s), grad * np.ones_like(a)


def _as_channels(img: np.ndarray):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img[:, :, None]
    return img


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity, per channel then averaged; in [-1, 1]."""
    a3, b3 = _as_channels(a), _as_channels(b)
    if a3.shape != b3.shape:
        raise DataError("image shape mismatch")
    return float(np.mean([_ssim_channel(a3[:, :, c], b3[:, :, c])[0] for c in range(a3.shape[2])]))


def dssim(a: np.ndarray, b: np.ndarray):
    """D-SSIM = (1 - SSIM)/2, with the gradient w.r.t. the first image."""
    a3, b3 = _as_channels(a), _as_channels(b)
    if a3.shape != b3.shape:
        raise DataError("image shape mismatch")
    nchan = a3.shape[2]
    value = 0.0
    grad = np.zeros_like(a3)
    for c in range(nchan):
        v, g = _ssim_channel(a3[:, :, c], b3[:, :, c])
        value += v
        grad[:, :, c] = g
    value /= nchan
    grad /= nchan
    d = 0.5 * (1.0 - value)
    g = -0.5 * grad
    return d, g.reshape(np.asarray(a).shape)


# ---------------------------------------------------------------------------
# blurriness loss


def l1_loss(a: np.ndarray, b: np.ndarray):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError("image shape mismatch")
    diff = a - b
    value = float(np.abs(diff).mean())
    grad = np.sign(diff) / diff.size
    return value, grad


def blur_loss(est: np.ndarray, observed: np.ndarray, w: LossWeights):
    """(1 - lambda_dssim) * L1 + lambda_dssim * D-SSIM, gradient w.r.t. est."""
    lam = w.lambda_dssim
    v1, g1 = l1_loss(est, observed)
    if lam == 0.0:
        return v1, g1
    v2, g2 = dssim(est, observed)
    return (1.0 - lam) * v1 + lam * v2, (1.0 - lam) * g1 + lam * g2


# ---------------------------------------------------------------------------
# event integration loss


def measured_event_map(bins: EventBins, theta: float) -> np.ndarray:
    """Integrated polarity over the exposure, scaled to log-intensity units."""
    if theta <= 0:
        raise DataError("contrast threshold must be positive")
    return theta * bins.counts.sum(axis=0)


def estimated_event_map(first: np.ndarray, last: np.ndarray):
    """Log-luminance difference between the last and first rendered frames.

    Returns (map, d_map/d_first, d_map/d_last); the jacobians are dense
    per-pixel-per-channel factors, so dL/dlast = g_map[..., None] * jac_last.
    """
    first = np.asarray(first, dtype=np.float64)
    last = np.asarray(last, dtype=np.float64)
    if first.shape != last.shape:
        raise DataError("image shape mismatch")
    lum_f = luminance(first) + LOG_EPS
    lum_l = luminance(last) + LOG_EPS
    emap = np.log(lum_l) - np.log(lum_f)

    if first.ndim == 3:
        jac_first = -LUMA_WEIGHTS / lum_f[:, :, None]
        jac_last = LUMA_WEIGHTS / lum_l[:, :, None]
    else:
        jac_first = -1.0 / lum_f
        jac_last = 1.0 / lum_l
    return emap, jac_first, jac_last


def event_loss(maps: EventMaps):
    """Mean absolute difference of the event maps, gradient w.r.t. estimated."""
    diff = maps.estimated - maps.measured
    value = float(np.abs(diff).mean())
    grad = np.sign(diff) / diff.size
    return value, grad


def total_loss(lb: float, le: float, w: LossWeights) -> float:
    return float(lb) + w.lambda_event * float(le)
