"""Synthetic ground truth and the blur-plus-noise degradation.

Noise is drawn from ``numpy.random.default_rng(seed)`` (PCG64 bit generator,
``standard_normal`` via the ziggurat method), so a given seed reproduces the
same samples on any platform running the same NumPy major version.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sik.operators import BOUNDARIES, make_blur_operator

# Classic Shepp-Logan table: centre (x0, y0), semi-axes (a, b), rotation in
# degrees, additive intensity. Coordinates span [-1, 1] with y pointing up.
SHEPP_LOGAN_ELLIPSES = (
    (0.0, 0.0, 0.69, 0.92, 0.0, 2.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98),
    (0.22, 0.0, 0.11, 0.31, -18.0, -0.02),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -0.02),
    (0.0, 0.35, 0.21, 0.25, 0.0, 0.01),
    (0.0, 0.1, 0.046, 0.046, 0.0, 0.01),
    (0.0, -0.1, 0.046, 0.046, 0.0, 0.01),
    (-0.08, -0.605, 0.046, 0.023, 0.0, 0.01),
    (0.0, -0.606, 0.023, 0.023, 0.0, 0.01),
    (0.06, -0.605, 0.023, 0.046, 0.0, 0.01),
)

# Contrast-stretched variant popular in imaging toolkits; already spans [0, 1].
MODIFIED_INTENSITIES = (1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1)

# The classic table peaks at 2.0 (skull); divide to land in [0, 1].
_CLASSIC_SCALE = 0.5


def ellipse_table(modified: bool = False) -> list[tuple[float, ...]]:
    """Ellipse parameters with intensities scaled to the rendered range."""
    if modified:
        return [e[:5] + (v,) for e, v in zip(SHEPP_LOGAN_ELLIPSES, MODIFIED_INTENSITIES)]
    return [e[:5] + (e[5] * _CLASSIC_SCALE,) for e in SHEPP_LOGAN_ELLIPSES]


def pixel_centers(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Grid coordinates ``(X, Y)`` of pixel centres; row 0 is the top (y = 1)."""
    xs = -1.0 + (2.0 * np.arange(width) + 1.0) / width
    ys = 1.0 - (2.0 * np.arange(height) + 1.0) / height
    return np.meshgrid(xs, ys)


def shepp_logan(height: int, width: int | None = None, modified: bool = False) -> np.ndarray:
    """Render the ten-ellipse Shepp-Logan head phantom.

    Each pixel takes the summed intensity of every ellipse containing its
    centre. Values lie in ``[0, 1]`` and the background is exactly 0.
    """
    width = height if width is None else width
    if height < 16 or width < 16:
        raise ValueError(f"phantom needs at least 16x16 pixels, got {height}x{width}")
    X, Y = pixel_centers(height, width)
    img = np.zeros((height, width))
    for x0, y0, a, b, deg, value in ellipse_table(modified):
        t = np.deg2rad(deg)
        dx, dy = X - x0, Y - y0
        u = dx * np.cos(t) + dy * np.sin(t)
        v = -dx * np.sin(t) + dy * np.cos(t)
        img[(u / a) ** 2 + (v / b) ** 2 <= 1.0] += value
    # Overlapping sums can land a few ulps outside the nominal range.
    return np.clip(img, 0.0, 1.0)


@dataclass(frozen=True)
class DegradationSpec:
    kernel_size: int = 5
    boundary: str = "circular"
    sigma: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")


def blur(image: np.ndarray, kernel_size: int = 5, boundary: str = "circular") -> np.ndarray:
    h, w = image.shape
    P = make_blur_operator(h, w, kernel_size, boundary)
    return P.forward(np.asarray(image, dtype=float).ravel()).reshape(h, w)


def gaussian_noise(shape, sigma: float, seed: int) -> np.ndarray:
    return sigma * np.random.default_rng(seed).standard_normal(shape)


def degrade(image: np.ndarray, spec: DegradationSpec = DegradationSpec()) -> np.ndarray:
    """Blur ``image`` with a uniform kernel, then add N(0, sigma) noise."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2 or not np.all(np.isfinite(image)):
        raise ValueError("image must be a finite 2D array")
    out = blur(image, spec.kernel_size, spec.boundary)
    if spec.sigma > 0:
        out = out + gaussian_noise(out.shape, spec.sigma, spec.seed)
    return out
