"""Time-axis numerics on uniform grids: differentiation stencils and quadrature.

Coefficient trajectories are not time-periodic, so the time direction cannot
share the spectral machinery of the space direction.  Everything here is
4th-order finite-difference/Newton-Cotes work on the uniform Traj grid.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import NDArray

from .spectral import ComplexArray, RealArray


def fd_weights(x0: float, xs: RealArray, m: int) -> RealArray:
    """Finite-difference weights for the m-th derivative at x0 from nodes xs.

    Solves the Vandermonde moment system; exact for polynomials up to degree
    len(xs) − 1, hence order len(xs) − m.
    """
    xs = np.asarray(xs, dtype=float)
    p = xs.size
    A = np.vander(xs - x0, p, increasing=True).T
    rhs = np.zeros(p)
    rhs[m] = float(math.factorial(m))
    return np.linalg.solve(A, rhs)


_WEIGHT_CACHE: dict[tuple[float, int, int], tuple[NDArray[np.floating], NDArray[np.floating]]] = {}


def _stencil_weights(dt: float, m: int, width: int) -> tuple[NDArray[np.floating], NDArray[np.floating]]:
    """(interior row, boundary block): every interior node sees the same
    centered pattern on a uniform grid, so one weight row suffices; the
    `width` near-edge nodes each get their own one-sided row over the first
    (mirrored: last) `width` nodes."""
    key = (float(dt), m, width)
    cached = _WEIGHT_CACHE.get(key)
    if cached is None:
        xs = dt * np.arange(width)
        half = width // 2
        center = fd_weights(half * dt, xs, m)
        edge = np.stack([fd_weights(i * dt, xs, m) for i in range(width)])
        cached = (center, edge)
        _WEIGHT_CACHE[key] = cached
    return cached


def time_derivative(data: ComplexArray, dt: float, order: int = 1) -> ComplexArray:
    """4th-order finite-difference ∂ₜ (or ∂ₜₜ) along axis 0 of a (n_t, …) stack.

    Central stencils inside, one-sided closures of the same order at the ends;
    coefficients come from exact Vandermonde solves and are cached per spacing.
    """
    data = np.asarray(data)
    width = 5 if order == 1 else 6
    n_t = data.shape[0]
    if n_t < width + 1:
        raise ValueError(f"need at least {width + 1} time samples for the order-4 stencils")
    center, edge = _stencil_weights(dt, order, width)
    half = width // 2

    flat = data.reshape(n_t, -1)
    out = np.empty_like(flat, dtype=np.result_type(flat.dtype, float))
    windows = np.lib.stride_tricks.sliding_window_view(flat, width, axis=0)
    out[half : n_t - width + half + 1] = windows @ center
    out[:half] = edge[:half] @ flat[:width]
    tail = n_t - width + half + 1
    out[tail:] = edge[width - (n_t - tail) :] @ flat[n_t - width :]
    return out.reshape(data.shape)


def simpson_integral(values: ComplexArray, dt: float, axis: int = 0):
    """∫ over the whole grid by composite Simpson (scipy handles odd tails)."""
    from scipy.integrate import simpson

    return simpson(values, dx=dt, axis=axis)


def cumulative_simpson(values: ComplexArray, dt: float) -> ComplexArray:
    """Running integral F_i = ∫_{t₀}^{t_i} f along axis 0, F_0 = 0.

    Each interval's increment integrates the quadratic through the local
    sample triple (Simpson on pairs of intervals, split at the midpoint);
    4th-order accurate at every node, not just the even ones.
    """
    f = np.asarray(values)
    n = f.shape[0]
    if n < 3:
        raise ValueError("need at least 3 samples for Simpson increments")
    out = np.zeros(f.shape, dtype=np.result_type(f.dtype, float))
    # halves of the quadratic through the sample triple (i, i+1, i+2)
    left = dt * (5.0 * f[:-2] + 8.0 * f[1:-1] - f[2:]) / 12.0
    right = dt * (-f[:-2] + 8.0 * f[1:-1] + 5.0 * f[2:]) / 12.0
    inc = np.zeros_like(out)
    inc[1:-1:2] = left[::2]         # interval 2m→2m+1 from the triple at 2m
    inc[2::2] = right[: n - 2 : 2]  # interval 2m+1→2m+2 from the same triple
    if n % 2 == 0:
        inc[-1] = right[-1]  # odd interval count: close with the last triple
    np.cumsum(inc[1:], axis=0, out=out[1:])
    return out
