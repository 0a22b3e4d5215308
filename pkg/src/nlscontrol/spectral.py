"""Periodic spectral fields on [0, 2π) and the operations built on them.

Everything in this package lives on a uniform grid of n nodes x_j = 2πj/n with
the dual representation û_k, |k| ≤ n/2, normalized so that

    u(x_j) = Σ_k û_k e^{i k x_j},        Σ_k |û_k|² = (1/2π) ∫ |u|² dx.

Sobolev norms use the Japanese bracket ⟨k⟩ = (1 + k²)^{1/2}.  All functions
here are pure: fields are immutable and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np
from numpy.typing import NDArray

ComplexArray = NDArray[np.complexfloating]
RealArray = NDArray[np.floating]

#: Tolerance on spurious imaginary parts when a quantity must be real.
REALNESS_TOL = 1e-10


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


class RealnessError(ValueError):
    """A quantity that must be real carries too much imaginary part."""


def require_real(values: ComplexArray, what: str, tol: float = REALNESS_TOL) -> RealArray:
    """Drop an imaginary part below `tol` (relative), error above it.

    The scale is max(1, sup|values|) so that zero fields never trip the check.
    """
    arr = np.asarray(values)
    if not np.iscomplexobj(arr):
        return np.asarray(arr, dtype=float)
    scale = max(1.0, float(np.max(np.abs(arr))) if arr.size else 1.0)
    worst = float(np.max(np.abs(arr.imag))) if arr.size else 0.0
    if worst > tol * scale:
        raise RealnessError(f"{what}: imaginary part {worst:.3e} exceeds {tol:.1e}·{scale:.3e}")
    return np.ascontiguousarray(arr.real)


# ── grid ──────────────────────────────────────────────────────────────────────


class Grid:
    """Uniform periodic grid with n equispaced nodes on [0, 2π).

    Args:
        n: number of nodes; even and ≥ 8.

    Attributes:
        x: node positions 2πj/n, strictly increasing.
        k: integer wavenumbers in FFT order (0, 1, …, n/2−1, −n/2, …, −1).
        dealias_mask: True on modes kept by the 2/3 rule (|k| ≤ n/3); the
            Nyquist mode is always masked out.
    """

    def __init__(self, n: int):
        if n < 8 or n % 2 != 0:
            raise ValueError(f"grid size must be even and >= 8, got {n}")
        self.n = int(n)
        self.x = 2.0 * np.pi * np.arange(self.n) / self.n
        self.k = np.fft.fftfreq(self.n, d=1.0 / self.n).astype(int)
        self.dealias_mask = np.abs(self.k) <= self.n // 3
        self._dx_symbol = 1j * self.k.astype(complex)
        self._dx_symbol[self.n // 2] = 0.0  # Nyquist derivative is ambiguous; zero it
        self.x.setflags(write=False)
        self.k.setflags(write=False)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Grid) and other.n == self.n

    def __hash__(self) -> int:
        return hash(("Grid", self.n))

    def __repr__(self) -> str:
        return f"Grid(n={self.n})"

    def to_coeffs(self, values: ComplexArray) -> ComplexArray:
        return np.fft.fft(values) / self.n

    def to_values(self, coeffs: ComplexArray) -> ComplexArray:
        return np.fft.ifft(coeffs * self.n)

    def dealias(self, values: ComplexArray) -> ComplexArray:
        """2/3-rule truncation (plus Nyquist zeroing) of grid values.

        Applied after every pointwise product of two fields; operates along the
        last axis so time-sampled stacks pass through unchanged in shape.
        """
        c = np.fft.fft(values, axis=-1) / self.n
        c *= self.dealias_mask
        return np.fft.ifft(c * self.n, axis=-1)

    def bracket(self, s: float) -> RealArray:
        """⟨k⟩^s in FFT order."""
        return (1.0 + self.k.astype(float) ** 2) ** (s / 2.0)


def check_same_grid(*grids: Grid) -> Grid:
    first = grids[0]
    for g in grids[1:]:
        if g != first:
            raise GridMismatchError(f"grid mismatch: {first} vs {g}")
    return first


# ── fields ────────────────────────────────────────────────────────────────────


class Field:
    """A complex periodic function carried on a Grid.

    Holds grid values; Fourier coefficients are computed lazily and cached.
    Instances are immutable — derived fields are new objects.
    """

    __slots__ = ("grid", "values", "__dict__")

    def __init__(self, grid: Grid, values: ComplexArray):
        values = np.asarray(values, dtype=complex)
        if values.shape != (grid.n,):
            raise ValueError(f"expected {grid.n} nodes, got shape {values.shape}")
        self.grid = grid
        self.values = np.ascontiguousarray(values)
        self.values.setflags(write=False)

    @classmethod
    def from_coeffs(cls, grid: Grid, coeffs: ComplexArray) -> "Field":
        f = cls(grid, grid.to_values(np.asarray(coeffs, dtype=complex)))
        f.__dict__["coeffs"] = np.asarray(coeffs, dtype=complex)
        return f

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable[[RealArray], ComplexArray]) -> "Field":
        return cls(grid, np.asarray(fn(grid.x), dtype=complex))

    @cached_property
    def coeffs(self) -> ComplexArray:
        c = self.grid.to_coeffs(self.values)
        c.setflags(write=False)
        return c

    def conj(self) -> "Field":
        return Field(self.grid, np.conj(self.values))

    def real_part(self) -> "Field":
        return Field(self.grid, self.values.real.astype(complex))

    def __add__(self, other: "Field") -> "Field":
        check_same_grid(self.grid, other.grid)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        check_same_grid(self.grid, other.grid)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, other: Union["Field", complex, float]) -> "Field":
        if isinstance(other, Field):
            check_same_grid(self.grid, other.grid)
            return Field(self.grid, self.grid.dealias(self.values * other.values))
        return Field(self.grid, self.values * other)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def __repr__(self) -> str:
        return f"Field(n={self.grid.n}, |u|∞={np.max(np.abs(self.values)):.3e})"


@dataclass(frozen=True)
class Pair:
    """A pair of real fields (u₁, u₂) — the real-coordinates state."""

    u1: Field
    u2: Field

    def __post_init__(self):
        check_same_grid(self.u1.grid, self.u2.grid)
        require_real(self.u1.values, "Pair.u1")
        require_real(self.u2.values, "Pair.u2")

    @property
    def grid(self) -> Grid:
        return self.u1.grid


@dataclass(frozen=True)
class BoldField:
    """The bold vector 𝐮 = (u, ū); only u is stored, the partner is implied."""

    u: Field

    @property
    def grid(self) -> Grid:
        return self.u.grid


@dataclass(frozen=True)
class SobolevIndex:
    """Regularity exponent s ≥ 0 for the ⟨k⟩-weighted norms."""

    s: float

    def __post_init__(self):
        if self.s < 0:
            raise ValueError(f"Sobolev index must be >= 0, got {self.s}")


class Traj:
    """Uniform time samples of a complex field on [0, T].

    data has shape (n_t, n): row i is the grid values at times[i].
    """

    __slots__ = ("grid", "times", "data")

    def __init__(self, grid: Grid, times: RealArray, data: ComplexArray):
        times = np.asarray(times, dtype=float)
        data = np.asarray(data, dtype=complex)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("need at least two time samples")
        dt = np.diff(times)
        if not np.allclose(dt, dt[0], rtol=1e-12, atol=1e-12 * max(1.0, times[-1])):
            raise ValueError("time samples must be uniform")
        if abs(times[0]) > 1e-14:
            raise ValueError("time samples must start at 0")
        if data.shape != (times.size, grid.n):
            raise ValueError(f"expected data shape {(times.size, grid.n)}, got {data.shape}")
        self.grid = grid
        self.times = times
        self.data = np.ascontiguousarray(data)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def n_t(self) -> int:
        return self.times.size

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def field(self, i: int) -> Field:
        return Field(self.grid, self.data[i])

    @classmethod
    def from_callable(
        cls, grid: Grid, times: RealArray, fn: Callable[[float, RealArray], ComplexArray]
    ) -> "Traj":
        data = np.array([fn(float(t), grid.x) for t in times], dtype=complex)
        return cls(grid, times, data)

    @classmethod
    def zeros(cls, grid: Grid, times: RealArray) -> "Traj":
        return cls(grid, times, np.zeros((len(times), grid.n), dtype=complex))

    def __repr__(self) -> str:
        return f"Traj(n={self.grid.n}, n_t={self.n_t}, T={self.T:g})"


def uniform_times(T: float, n_t: int) -> RealArray:
    if n_t < 2 or T <= 0:
        raise ValueError("need T > 0 and at least 2 samples")
    return np.linspace(0.0, T, n_t)


# ── norms and products ────────────────────────────────────────────────────────


def sobolev_norm(u: Field, s: Union[SobolevIndex, float]) -> float:
    """( Σ_k ⟨k⟩^{2s} |û_k|² )^{1/2}; the spectral L² norm for s = 0."""
    s_val = s.s if isinstance(s, SobolevIndex) else float(s)
    w = u.grid.bracket(s_val)
    return float(np.sqrt(np.sum((w * np.abs(u.coeffs)) ** 2)))


def sobolev_norm_values(grid: Grid, values: ComplexArray, s: float) -> float:
    """Array fast path of sobolev_norm; values may be a (…, n) stack (sup over rows)."""
    c = np.fft.fft(values, axis=-1) / grid.n
    w = grid.bracket(s)
    per_row = np.sqrt(np.sum((w * np.abs(c)) ** 2, axis=-1))
    return float(np.max(per_row))


def traj_sup_norm(traj: Traj, s: float) -> float:
    """sup over time samples of the spatial Sobolev norm: the C([0,T],H^s) norm."""
    return sobolev_norm_values(traj.grid, traj.data, s)


def quadrature(grid: Grid, values: ComplexArray) -> complex:
    """∫₀^{2π} f dx by the rectangle rule (spectrally accurate on this grid)."""
    return complex(2.0 * np.pi * np.mean(values, axis=-1))


def l2(u: Field, v: Field) -> complex:
    """⟨u, v⟩ = ∫ u v̄ dx."""
    check_same_grid(u.grid, v.grid)
    return quadrature(u.grid, u.values * np.conj(v.values))


def bold_l2(bu: BoldField, bv: BoldField) -> float:
    """Real pairing ⟨𝐮, 𝐯⟩ = ∫ (u v̄ + ū v) dx = 2 Re ∫ u v̄ dx."""
    return 2.0 * float(np.real(l2(bu.u, bv.u)))


def symplectic_w(bu: BoldField, bv: BoldField) -> float:
    """𝒲[𝐮, 𝐯] = i ∫ (u₁ ū₂ − ū₁ u₂) dx = −2 Im ∫ u v̄ dx; real, antisymmetric."""
    val = 1j * (l2(bu.u, bv.u) - np.conj(l2(bu.u, bv.u)))
    return float(require_real(np.array([val]), "symplectic form")[0])


# ── Fourier multipliers ───────────────────────────────────────────────────────


def fourier_multiplier(symbol: Union[Callable[[NDArray[np.int_]], ComplexArray], ComplexArray], u: Field) -> Field:
    """Apply û_k ↦ m(k) û_k for a callable symbol or a precomputed symbol array."""
    m = symbol(u.grid.k) if callable(symbol) else np.asarray(symbol)
    if not np.all(np.isfinite(m)):
        raise ValueError("multiplier symbol not finite on resolved modes")
    return Field.from_coeffs(u.grid, m * u.coeffs)


def partial_x(u: Field, order: int = 1) -> Field:
    return Field.from_coeffs(u.grid, (u.grid._dx_symbol ** order) * u.coeffs)


def partial_x_values(grid: Grid, values: ComplexArray, order: int = 1) -> ComplexArray:
    """Spectral ∂ₓ (array form, last axis); Nyquist mode dropped as in partial_x."""
    c = np.fft.fft(values, axis=-1) / grid.n
    c = c * (grid._dx_symbol ** order)
    return np.fft.ifft(c * grid.n, axis=-1)


def inv_partial_x(u: Field) -> Field:
    """∂ₓ⁻¹: divide by ik, mapping the mean mode to 0 (so ∂ₓ⁻¹ 1 = 0)."""
    return Field.from_coeffs(u.grid, _inv_dx_symbol(u.grid) * u.coeffs)


def inv_partial_x_values(grid: Grid, values: ComplexArray) -> ComplexArray:
    c = np.fft.fft(values, axis=-1) / grid.n
    c = c * _inv_dx_symbol(grid)
    return np.fft.ifft(c * grid.n, axis=-1)


def _inv_dx_symbol(grid: Grid) -> ComplexArray:
    sym = np.zeros(grid.n, dtype=complex)
    nz = grid.k != 0
    sym[nz] = 1.0 / (1j * grid.k[nz])
    return sym


def lambda_s(u: Field, s: float) -> Field:
    """Λˢ = ⟨k⟩ˢ as a Fourier multiplier (Λ⁰ is the identity)."""
    return Field.from_coeffs(u.grid, u.grid.bracket(s) * u.coeffs)


# ── dyadic smoothing ──────────────────────────────────────────────────────────


def smooth_S(j: int, u: Field) -> Field:
    """Dyadic truncation S_j: retain exactly the modes |k| ≤ 2ʲ."""
    if j < 0:
        raise ValueError("smoothing level must be a nonnegative integer")
    keep = np.abs(u.grid.k) <= 2**j
    return Field.from_coeffs(u.grid, np.where(keep, u.coeffs, 0.0))


def smooth_R(j: int, u: Field) -> Field:
    """Dyadic block R_j: R₀ = S₁ and R_j = S_{j+1} − S_j for j ≥ 1."""
    if j == 0:
        return smooth_S(1, u)
    return smooth_S(j + 1, u) - smooth_S(j, u)


def smoothing_levels(grid: Grid) -> int:
    """Smallest J with 2^J ≥ n/2, so S_J = identity and R_j vanish beyond J."""
    return int(np.ceil(np.log2(grid.n // 2))) if grid.n > 2 else 1


# ── the 𝒞 change of coordinates ──────────────────────────────────────────────


SQRT2 = np.sqrt(2.0)


def c_transform(p: Pair) -> BoldField:
    """Pack a real pair into the bold coordinate h = (u₁ + i u₂)/√2."""
    return BoldField(Field(p.grid, (p.u1.values + 1j * p.u2.values) / SQRT2))


def c_inverse(b: BoldField) -> Pair:
    """Unpack a bold field: u₁ = √2 Re h, u₂ = √2 Im h."""
    h = b.u.values
    return Pair(
        Field(b.grid, (SQRT2 * h.real).astype(complex)),
        Field(b.grid, (SQRT2 * h.imag).astype(complex)),
    )


def pair_l2(p: Pair, q: Pair) -> float:
    """⟨(u₁,u₂), (v₁,v₂)⟩_{L²(𝕋,ℝ²)} = ∫ (u₁v₁ + u₂v₂) dx."""
    check_same_grid(p.grid, q.grid)
    val = quadrature(p.grid, p.u1.values * q.u1.values + p.u2.values * q.u2.values)
    return float(require_real(np.array([val]), "real pair product")[0])


# ── off-grid evaluation (exact trigonometric interpolation) ───────────────────


def eval_field_at(u: Field, y: RealArray) -> ComplexArray:
    """Evaluate the spectral interpolant of u at arbitrary points y.

    Uses the exact Fourier sum Σ û_k e^{iky}; the Nyquist coefficient is split
    evenly between ±n/2 so real fields stay real off the grid.
    """
    return eval_coeffs_at(u.grid, u.coeffs, y)


def eval_coeffs_at(grid: Grid, coeffs: ComplexArray, y: RealArray) -> ComplexArray:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    k = grid.k.astype(float)
    phases = np.exp(1j * np.outer(y, k))
    c = np.array(coeffs, dtype=complex)
    ny = grid.n // 2
    out = phases @ c + 0.0j
    # split Nyquist: replace e^{-i(n/2)y}·c_ny by cos((n/2)y)·c_ny
    out += c[ny] * (np.cos(ny * y) - np.exp(-1j * ny * y))
    return out


def compose_values(grid: Grid, values: ComplexArray, displacement: RealArray) -> ComplexArray:
    """u(x + d(x)) on the grid via exact trigonometric interpolation."""
    c = np.fft.fft(values, axis=-1) / grid.n
    return eval_coeffs_at(grid, c, grid.x + displacement)


def translate_values(grid: Grid, values: ComplexArray, shift: float) -> ComplexArray:
    """u(x + shift) exactly, via the Fourier phase e^{ik·shift} (last axis)."""
    c = np.fft.fft(values, axis=-1) / grid.n
    phase = np.exp(1j * grid.k * shift)
    ny = grid.n // 2
    phase = np.array(phase, dtype=complex)
    phase[ny] = np.cos(ny * shift)  # Nyquist kept real-symmetric
    return np.fft.ifft(c * phase * grid.n, axis=-1)
