"""Matrix-free linear operators.

Every operator acts on flat float vectors. Images are stored row-major, so an
``(height, width)`` image corresponds to a vector of length ``height * width``.
Operators hold no mutable state and can be shared between concurrent solves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from sik.errors import ResourceLimitError

BOUNDARIES = ("circular", "zero_pad", "replicate")
_NP_PAD_MODE = {"circular": "wrap", "zero_pad": "constant", "replicate": "edge"}

# Largest grid accepted by the image operators; keeps index arithmetic in int64
# far from overflow and rejects nonsensical sizes early.
MAX_PIXELS = 2**31 - 1
DEFAULT_MATERIALIZE_CAP = 2**24
DEFAULT_SAFETY_MARGIN = 1.01


class LinearOperator:
    """A linear map given by a forward and an adjoint callable.

    Parameters
    ----------
    in_dim, out_dim : int
        Length of the input and output vectors.
    forward : callable
        ``forward(x)`` with ``x`` of length ``in_dim``.
    adjoint : callable
        ``adjoint(y)`` with ``y`` of length ``out_dim``.
    name : str, optional
        Used in ``repr`` only.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        forward: Callable[[np.ndarray], np.ndarray],
        adjoint: Callable[[np.ndarray], np.ndarray],
        name: str = "LinearOperator",
    ):
        if int(in_dim) < 1 or int(out_dim) < 1:
            raise ValueError(f"dimensions must be positive, got {in_dim}x{out_dim}")
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self._forward = forward
        self._adjoint = adjoint
        self.name = name

    def __repr__(self):
        return f"<{self.name}: {self.in_dim} -> {self.out_dim}>"

    @property
    def shape(self) -> tuple[int, int]:
        return (self.out_dim, self.in_dim)

    def forward(self, x) -> np.ndarray:
        x = _as_vector(x, self.in_dim, "forward")
        return self._forward(x)

    def adjoint(self, y) -> np.ndarray:
        y = _as_vector(y, self.out_dim, "adjoint")
        return self._adjoint(y)

    @property
    def T(self) -> "LinearOperator":
        """The adjoint as an operator in its own right."""
        return LinearOperator(
            self.out_dim, self.in_dim, self._adjoint, self._forward, name=f"{self.name}.T"
        )


def _as_vector(v, n: int, where: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != n:
        raise ValueError(f"{where}: expected a vector of length {n}, got shape {v.shape}")
    return v


def identity(n: int) -> LinearOperator:
    """Identity map on vectors of length ``n``."""
    return LinearOperator(n, n, np.copy, np.copy, name="Identity")


def matrix_operator(matrix) -> LinearOperator:
    """Wrap a dense 2D array as an operator."""
    m = np.array(matrix, dtype=float)
    if m.ndim != 2:
        raise ValueError("matrix_operator expects a 2D array")
    m.setflags(write=False)
    return LinearOperator(
        m.shape[1], m.shape[0], lambda x: m @ x, lambda y: m.T @ y, name="Matrix"
    )


def compose(outer: LinearOperator, inner: LinearOperator) -> LinearOperator:
    """Return ``outer @ inner``: apply ``inner`` first, then ``outer``."""
    if outer.in_dim != inner.out_dim:
        raise ValueError(
            f"cannot compose {outer!r} after {inner!r}: "
            f"{outer.in_dim} != {inner.out_dim}"
        )
    return LinearOperator(
        inner.in_dim,
        outer.out_dim,
        lambda x: outer.forward(inner.forward(x)),
        lambda y: inner.adjoint(outer.adjoint(y)),
        name=f"{outer.name}*{inner.name}",
    )


def _check_grid(height: int, width: int):
    if height < 1 or width < 1:
        raise ValueError(f"grid dimensions must be positive, got {height}x{width}")
    if height * width > MAX_PIXELS:
        raise ValueError(f"grid {height}x{width} exceeds {MAX_PIXELS} pixels")


def _box_valid(z: np.ndarray, k: int, axis: int) -> np.ndarray:
    # Sum over k-long windows along `axis`, output shorter by k - 1.
    return sliding_window_view(z, k, axis=axis).sum(axis=-1) / k


def _pad_adjoint_axis(z: np.ndarray, n: int, r: int, mode: str) -> np.ndarray:
    """Adjoint of ``np.pad(x, r, mode)`` restricted to axis 0."""
    src = np.arange(n + 2 * r) - r
    if mode == "constant":
        return z[r : r + n].copy()
    if mode == "wrap":
        src = np.mod(src, n)
    else:  # edge
        src = np.clip(src, 0, n - 1)
    out = np.zeros((n,) + z.shape[1:])
    np.add.at(out, src, z)
    return out


def make_blur_operator(
    height: int, width: int, kernel_size: int = 5, boundary: str = "circular"
) -> LinearOperator:
    """Uniform ``kernel_size x kernel_size`` blur on a ``height x width`` grid.

    The forward map is a 2D correlation with a kernel whose taps all equal
    ``1 / kernel_size**2``. Pixels outside the grid are supplied by the
    ``boundary`` rule: ``"circular"`` (periodic), ``"zero_pad"`` or
    ``"replicate"`` (nearest edge pixel).
    """
    height, width, kernel_size = int(height), int(width), int(kernel_size)
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"kernel_size must be a positive odd integer, got {kernel_size}")
    if boundary not in BOUNDARIES:
        raise ValueError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")
    _check_grid(height, width)
    if height < kernel_size or width < kernel_size:
        raise ValueError(
            f"grid {height}x{width} is smaller than the {kernel_size}x{kernel_size} kernel"
        )

    k = kernel_size
    r = k // 2
    mode = _NP_PAD_MODE[boundary]
    n = height * width

    def forward(x):
        img = x.reshape(height, width)
        padded = np.pad(img, r, mode=mode)
        out = _box_valid(_box_valid(padded, k, 0), k, 1)
        return out.ravel()

    def adjoint(y):
        img = y.reshape(height, width)
        # Transpose of the valid correlation: full correlation with the
        # (symmetric) flipped kernel.
        full = np.pad(img, k - 1, mode="constant")
        z = _box_valid(_box_valid(full, k, 0), k, 1)
        z = _pad_adjoint_axis(z, height, r, mode)
        z = _pad_adjoint_axis(z.T, width, r, mode).T
        return np.ascontiguousarray(z).ravel()

    return LinearOperator(n, n, forward, adjoint, name=f"Blur{k}x{k}[{boundary}]")


_SQRT2 = np.sqrt(2.0)


def haar_analysis(image: np.ndarray, levels: int) -> np.ndarray:
    """Orthonormal 2D Haar analysis, Mallat layout (coarsest band top-left)."""
    c = np.array(image, dtype=float)
    h, w = c.shape
    for _ in range(levels):
        block = c[:h, :w]
        lo = (block[0::2] + block[1::2]) / _SQRT2
        hi = (block[0::2] - block[1::2]) / _SQRT2
        block = np.vstack([lo, hi])
        lo = (block[:, 0::2] + block[:, 1::2]) / _SQRT2
        hi = (block[:, 0::2] - block[:, 1::2]) / _SQRT2
        c[:h, :w] = np.hstack([lo, hi])
        h //= 2
        w //= 2
    return c


def haar_synthesis(coeffs: np.ndarray, levels: int) -> np.ndarray:
    """Inverse of :func:`haar_analysis`."""
    c = np.array(coeffs, dtype=float)
    height, width = c.shape
    for level in reversed(range(levels)):
        h = height >> level
        w = width >> level
        block = c[:h, :w]
        lo, hi = block[:, : w // 2], block[:, w // 2 :]
        cols = np.empty_like(block)
        cols[:, 0::2] = (lo + hi) / _SQRT2
        cols[:, 1::2] = (lo - hi) / _SQRT2
        lo, hi = cols[: h // 2], cols[h // 2 :]
        rows = np.empty_like(block)
        rows[0::2] = (lo + hi) / _SQRT2
        rows[1::2] = (lo - hi) / _SQRT2
        c[:h, :w] = rows
    return c


def make_haar_operator(height: int, width: int, levels: int = 2) -> LinearOperator:
    """Haar wavelet synthesis ``W`` (coefficients -> image).

    ``W`` is orthonormal, so its adjoint is the analysis transform and
    ``W.T @ W`` is the identity.
    """
    height, width, levels = int(height), int(width), int(levels)
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    _check_grid(height, width)
    step = 2**levels
    if height % step or width % step:
        raise ValueError(
            f"grid {height}x{width} is not divisible by 2**levels = {step}"
        )

    def forward(x):
        return haar_synthesis(x.reshape(height, width), levels).ravel()

    def adjoint(y):
        return haar_analysis(y.reshape(height, width), levels).ravel()

    n = height * width
    return LinearOperator(n, n, forward, adjoint, name=f"Haar[{levels}]")


def materialize(op: LinearOperator, max_entries: int = DEFAULT_MATERIALIZE_CAP) -> np.ndarray:
    """Dense matrix of ``op``, column ``j`` being ``op.forward(e_j)``.

    Meant for tests and debugging on small problems.
    """
    if op.in_dim * op.out_dim > max_entries:
        raise ResourceLimitError(
            f"materializing {op.out_dim}x{op.in_dim} exceeds the cap of {max_entries} entries"
        )
    out = np.empty((op.out_dim, op.in_dim))
    e = np.zeros(op.in_dim)
    for j in range(op.in_dim):
        e[j] = 1.0
        out[:, j] = op.forward(e)
        e[j] = 0.0
    return out


@dataclass(frozen=True)
class SpectralBound:
    """Power-iteration estimate of the largest eigenvalue of ``A.T @ A``."""

    value: float
    iterations_used: int
    converged: bool


def estimate_spectral_bound(
    op: LinearOperator, rel_tol: float = 1e-10, max_iters: int = 5000, seed: int = 0
) -> SpectralBound:
    """Estimate ``lambda_max(A.T A)`` by power iteration on ``x -> A.T(A x)``.

    The start vector is drawn from ``numpy.random.default_rng(seed)``. The
    returned value is the Rayleigh quotient at the last iterate, which never
    exceeds the true eigenvalue; pad it with :func:`lipschitz_constant` before
    using it as a step bound.
    """
    if rel_tol <= 0:
        raise ValueError(f"rel_tol must be positive, got {rel_tol}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.in_dim)
    x /= np.linalg.norm(x)
    prev = None
    for it in range(1, max_iters + 1):
        y = op.adjoint(op.forward(x))
        value = float(x @ y)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return SpectralBound(0.0, it, True)
        x = y / norm
        if prev is not None and abs(value - prev) <= rel_tol * abs(value):
            return SpectralBound(max(value, 0.0), it, True)
        prev = value
    return SpectralBound(max(prev if prev is not None else 0.0, 0.0), max_iters, False)


def lipschitz_constant(
    op_or_bound, safety_margin: float = DEFAULT_SAFETY_MARGIN, **kwargs
) -> float:
    """Step bound ``L = lambda_max(A.T A) * safety_margin``.

    Accepts either a :class:`SpectralBound` or an operator, in which case the
    bound is estimated first (``kwargs`` go to :func:`estimate_spectral_bound`).
    """
    if safety_margin < 1:
        raise ValueError(f"safety_margin must be >= 1, got {safety_margin}")
    bound = op_or_bound
    if isinstance(op_or_bound, LinearOperator):
        bound = estimate_spectral_bound(op_or_bound, **kwargs)
    return bound.value * safety_margin
