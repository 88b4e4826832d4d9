"""Hot per-pixel compositing kernels.

Two interchangeable implementations of front-to-back alpha compositing and
its analytic adjoint: numba-jitted scalar loops (fast) and a pure-numpy
fallback (no JIT dependency). Select with the environment variable

    EVSPLAT_BACKEND=numba   (default when numba imports)
    EVSPLAT_BACKEND=numpy

Both backends implement the same arithmetic; results agree to float rounding
(the two exp() implementations may differ in the last ulp, so cross-backend
comparisons should allow ~1e-12 relative error). Within one backend results
are bit-reproducible.

Kernel contract (arrays are pre-sorted front-to-back by the caller):

    means2d   (S, 2) float64   splat centers, pixel units
    conics    (S, 3) float64   upper triangle (A, B, C) of inverse 2D covariance
    opacities (S,)   float64   effective opacity in (0, 1)
    colors    (S, 3) float64   RGB in [0, 1]
    bboxes    (S, 4) int64     per-splat pixel rect x0, x1, y0, y1 (exclusive)

A splat touches pixel (py, px) iff the pixel lies in its bbox. Compositing at
a pixel stops once transmittance drops below T_MIN. `n_contrib` records, per
pixel, one past the index of the last splat composited there.
"""

from __future__ import annotations

import os

import numpy as np

T_MIN = 1e-4
ALPHA_MAX = 0.999


# ---------------------------------------------------------------------------
# pure-numpy fallback: python loop over splats, vectorized over bbox pixels


def _forward_np(means2d, conics, opacities, colors, bboxes, height, width, background):
    img = np.zeros((height, width, 3), dtype=np.float64)
    T = np.ones((height, width), dtype=np.float64)
    n_contrib = np.zeros((height, width), dtype=np.int64)

    for s in range(len(means2d)):
        x0, x1, y0, y1 = bboxes[s]
        if x0 >= x1 or y0 >= y1:
            continue
        px = np.arange(x0, x1, dtype=np.float64)[None, :]
        py = np.arange(y0, y1, dtype=np.float64)[:, None]
        dx = means2d[s, 0] - px
        dy = means2d[s, 1] - py
        a, b, c = conics[s]
        power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
        alpha = np.minimum(ALPHA_MAX, opacities[s] * np.exp(power))

        t_slice = T[y0:y1, x0:x1]
        active = t_slice >= T_MIN
        contrib = np.where(active, alpha * t_slice, 0.0)
        img[y0:y1, x0:x1] += contrib[:, :, None] * colors[s]
        T[y0:y1, x0:x1] = np.where(active, t_slice * (1.0 - alpha), t_slice)
        n_contrib[y0:y1, x0:x1][active] = s + 1

    img += T[:, :, None] * background
    return img, T, n_contrib


def _backward_np(
    means2d, conics, opacities, colors, bboxes, height, width, background,
    t_final, n_contrib, grad_img,
):
    g_mean2d = np.zeros_like(means2d)
    g_conic = np.zeros_like(conics)
    g_opacity = np.zeros(len(means2d), dtype=np.float64)
    g_color = np.zeros_like(colors)

    T = t_final.copy()
    behind = np.zeros((height, width, 3), dtype=np.float64)  # color composited behind
    bg_dot = grad_img @ background

    for s in range(len(means2d) - 1, -1, -1):
        x0, x1, y0, y1 = bboxes[s]
        if x0 >= x1 or y0 >= y1:
            continue
        mask = n_contrib[y0:y1, x0:x1] > s
        if not mask.any():
            continue
        px = np.arange(x0, x1, dtype=np.float64)[None, :]
        py = np.arange(y0, y1, dtype=np.float64)[:, None]
        dx = means2d[s, 0] - px
        dy = means2d[s, 1] - py
        a, b, c = conics[s]
        power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
        G = np.exp(power)
        raw = opacities[s] * G
        clamped = raw > ALPHA_MAX
        alpha = np.minimum(ALPHA_MAX, raw)

        t_slice = T[y0:y1, x0:x1]
        t_here = np.where(mask, t_slice / (1.0 - alpha), t_slice)
        T[y0:y1, x0:x1] = t_here

        gpix = grad_img[y0:y1, x0:x1]
        w = np.where(mask, alpha * t_here, 0.0)
        g_color[s] = (w[:, :, None] * gpix).sum(axis=(0, 1))

        diff = colors[s] - behind[y0:y1, x0:x1]
        g_alpha = (diff * gpix).sum(axis=2) * t_here
        g_alpha -= t_final[y0:y1, x0:x1] / (1.0 - alpha) * bg_dot[y0:y1, x0:x1]
        g_alpha = np.where(mask, g_alpha, 0.0)

        behind[y0:y1, x0:x1] = np.where(
            mask[:, :, None],
            colors[s] * alpha[:, :, None] + (1.0 - alpha)[:, :, None] * behind[y0:y1, x0:x1],
            behind[y0:y1, x0:x1],
        )

        g_alpha_eff = np.where(clamped, 0.0, g_alpha)
        g_opacity[s] = (g_alpha_eff * G).sum()
        g_power = g_alpha_eff * raw  # dalpha/dG * dG/dpower = opacity * G
        g_conic[s, 0] = (g_power * (-0.5) * dx * dx).sum()
        g_conic[s, 1] = (g_power * (-dx * dy)).sum()
        g_conic[s, 2] = (g_power * (-0.5) * dy * dy).sum()
        g_mean2d[s, 0] = (g_power * (-(a * dx + b * dy))).sum()
        g_mean2d[s, 1] = (g_power * (-(c * dy + b * dx))).sum()

    return g_mean2d, g_conic, g_opacity, g_color


# ---------------------------------------------------------------------------
# numba backend

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAVE_NUMBA = False

if HAVE_NUMBA:

    @njit(cache=True)
    def _forward_nb(means2d, conics, opacities, colors, bboxes, height, width, background):
        img = np.zeros((height, width, 3), dtype=np.float64)
        T = np.ones((height, width), dtype=np.float64)
        n_contrib = np.zeros((height, width), dtype=np.int64)

        for s in range(means2d.shape[0]):
            x0, x1, y0, y1 = bboxes[s, 0], bboxes[s, 1], bboxes[s, 2], bboxes[s, 3]
            mx, my = means2d[s, 0], means2d[s, 1]
            a, b, c = conics[s, 0], conics[s, 1], conics[s, 2]
            op = opacities[s]
            cr, cg, cb = colors[s, 0], colors[s, 1], colors[s, 2]
            for py in range(y0, y1):
                for px in range(x0, x1):
                    t = T[py, px]
                    if t < T_MIN:
                        continue
                    dx = mx - px
                    dy = my - py
                    power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
                    alpha = op * np.exp(power)
                    if alpha > ALPHA_MAX:
                        alpha = ALPHA_MAX
                    w = alpha * t
                    img[py, px, 0] += w * cr
                    img[py, px, 1] += w * cg
                    img[py, px, 2] += w * cb
                    T[py, px] = t * (1.0 - alpha)
                    n_contrib[py, px] = s + 1

        for py in range(height):
            for px in range(width):
                t = T[py, px]
                img[py, px, 0] += t * background[0]
                img[py, px, 1] += t * background[1]
                img[py, px, 2] += t * background[2]
        return img, T, n_contrib

    @njit(cache=True)
    def _backward_nb(
        means2d, conics, opacities, colors, bboxes, height, width, background,
        t_final, n_contrib, grad_img,
    ):
        S = means2d.shape[0]
        g_mean2d = np.zeros((S, 2), dtype=np.float64)
        g_conic = np.zeros((S, 3), dtype=np.float64)
        g_opacity = np.zeros(S, dtype=np.float64)
        g_color = np.zeros((S, 3), dtype=np.float64)

        T = t_final.copy()
        behind = np.zeros((height, width, 3), dtype=np.float64)

        for s in range(S - 1, -1, -1):
            x0, x1, y0, y1 = bboxes[s, 0], bboxes[s, 1], bboxes[s, 2], bboxes[s, 3]
            mx, my = means2d[s, 0], means2d[s, 1]
            a, b, c = conics[s, 0], conics[s, 1], conics[s, 2]
            op = opacities[s]
            for py in range(y0, y1):
                for px in range(x0, x1):
                    if n_contrib[py, px] <= s:
                        continue
                    dx = mx - px
                    dy = my - py
                    power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
                    G = np.exp(power)
                    raw = op * G
                    clamped = raw > ALPHA_MAX
                    alpha = ALPHA_MAX if clamped else raw

                    t_here = T[py, px] / (1.0 - alpha)
                    T[py, px] = t_here

                    g0 = grad_img[py, px, 0]
                    g1 = grad_img[py, px, 1]
                    g2 = grad_img[py, px, 2]
                    w = alpha * t_here
                    g_color[s, 0] += w * g0
                    g_color[s, 1] += w * g1
                    g_color[s, 2] += w * g2

                    g_alpha = (
                        (colors[s, 0] - behind[py, px, 0]) * g0
                        + (colors[s, 1] - behind[py, px, 1]) * g1
                        + (colors[s, 2] - behind[py, px, 2]) * g2
                    ) * t_here
                    bg_dot = background[0] * g0 + background[1] * g1 + background[2] * g2
                    g_alpha -= t_final[py, px] / (1.0 - alpha) * bg_dot

                    behind[py, px, 0] = colors[s, 0] * alpha + (1.0 - alpha) * behind[py, px, 0]
                    behind[py, px, 1] = colors[s, 1] * alpha + (1.0 - alpha) * behind[py, px, 1]
                    behind[py, px, 2] = colors[s, 2] * alpha + (1.0 - alpha) * behind[py, px, 2]

                    if clamped:
                        continue
                    g_opacity[s] += g_alpha * G
                    g_power = g_alpha * raw
                    g_conic[s, 0] += g_power * (-0.5) * dx * dx
                    g_conic[s, 1] += g_power * (-dx * dy)
                    g_conic[s, 2] += g_power * (-0.5) * dy * dy
                    g_mean2d[s, 0] += g_power * (-(a * dx + b * dy))
                    g_mean2d[s, 1] += g_power * (-(c * dy + b * dx))

        return g_mean2d, g_conic, g_opacity, g_color


# ---------------------------------------------------------------------------
# backend selection

_BACKENDS = {"numpy": (_forward_np, _backward_np)}
if HAVE_NUMBA:
    _BACKENDS["numba"] = (_forward_nb, _backward_nb)


def _pick_backend() -> str:
    requested = os.environ.get("EVSPLAT_BACKEND", "").strip().lower()
    if requested:
        if requested not in _BACKENDS:
            raise RuntimeError(
                f"EVSPLAT_BACKEND={requested!r} unavailable; choices: {sorted(_BACKENDS)}"
            )
        return requested
    return "numba" if HAVE_NUMBA else "numpy"


_ACTIVE = _pick_backend()
forward_composite, backward_composite = _BACKENDS[_ACTIVE]


def active_backend() -> str:
    return _ACTIVE


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name: str):
    """(forward, backward) pair for an explicit backend, bypassing the env flag."""
    return _BACKENDS[name]
