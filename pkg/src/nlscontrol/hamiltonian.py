"""Hamiltonian densities, the quasi-linear nonlinearity, and linearization.

The model is the real Hamiltonian system on the circle generated by

    H(u₁, u₂) = ½ ∫ ((∂ₓu₁)² + (∂ₓu₂)²) dx + ∫ G(x, u₁, u₂, ∂ₓu₁, ∂ₓu₂) dx,

with G vanishing cubically at y = 0.  Linearizing the evolution operator along
a trajectory produces a 2×2 variable-coefficient operator which, in complex
vector coordinates (u, ū), reads

    ℒ = ∂ₜ𝕀₂ + i(Σ + A₂)∂ₓₓ + iA₁∂ₓ + iA₀,   A_k = [[a_k, b_k], [−b̄_k, −ā_k]],

with Σ = diag(1, −1).  The Hamiltonian origin forces the structure relations
a₂ = ā₂, a₁ = 2∂ₓa₂ − ā₁, a₀ = ā₀ + ∂ₓₓa₂ − ∂ₓā₁ and b₁ = ∂ₓb₂, which are
checked numerically rather than assumed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .timegrid import time_derivative
from .spectral import (
    BoldField,
    ComplexArray,
    Field,
    Grid,
    Pair,
    RealArray,
    SQRT2,
    Traj,
    c_inverse,
    check_same_grid,
    partial_x_values,
    quadrature,
    require_real,
    sobolev_norm_values,
)

STRUCTURE_TOL = 1e-8

YS = tuple[RealArray, RealArray, RealArray, RealArray]


class ResolutionError(ValueError):
    """Input field carries too much energy near the truncation band."""


class StructureError(ValueError):
    """A Hamiltonian structure relation fails beyond tolerance."""


# ── densities ─────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class HamiltonianDensity:
    """A density G(x, y₁, y₂, y₃, y₄) with analytic gradient and Hessian.

    Args:
        name: registry key, also used in configs.
        value: (x, ys) ↦ G values on the grid.
        grad: (x, ys) ↦ array of shape (4, n), the ∂_{y_i}G.
        hess: (x, ys) ↦ array of shape (4, 4, n), the ∂_{y_i y_j}G, symmetric.
        grade: formal smoothness grade r, bookkeeping only.

    Finite-difference Hessians are deliberately not supported: coefficient
    fields must stay spectrally smooth, which only analytic derivatives give.
    """

    name: str
    value: Callable[[RealArray, YS], RealArray]
    grad: Callable[[RealArray, YS], RealArray]
    hess: Callable[[RealArray, YS], RealArray]
    grade: int = 10

    def check_cubic_at_zero(self, grid: Grid, tol: float = 1e-10) -> None:
        """G, ∇G and Hess G must all vanish at y = 0 (cubic smallness)."""
        zeros = tuple(np.zeros(grid.n) for _ in range(4))
        for label, arr in (
            ("G", self.value(grid.x, zeros)),
            ("grad G", self.grad(grid.x, zeros)),
            ("hess G", self.hess(grid.x, zeros)),
        ):
            worst = float(np.max(np.abs(arr)))
            if worst > tol:
                raise StructureError(f"density {self.name}: {label} at y=0 is {worst:.2e}")


def _kappa_default(kappa0: float) -> Callable[[RealArray], RealArray]:
    return lambda x: kappa0 * (1.0 + np.cos(x))


def density_zero() -> HamiltonianDensity:
    """G ≡ 0: the free Schrödinger model."""

    def value(x, ys):
        return np.zeros_like(x)

    def grad(x, ys):
        return np.zeros((4, x.size))

    def hess(x, ys):
        return np.zeros((4, 4, x.size))

    return HamiltonianDensity("zero", value, grad, hess)


def density_focusing_gradient(
    kappa0: float = 0.05, kappa: Optional[Callable[[RealArray], RealArray]] = None
) -> HamiltonianDensity:
    """G = κ(x)·y₁(y₃² + y₄²): couples the state to the full gradient energy.

    Produces a real second-order coefficient (a₂ = 2κu₁, b₂ = 0), so the
    symmetrizer stage is trivial for this density.
    """
    kap = kappa or _kappa_default(kappa0)

    def value(x, ys):
        y1, _, y3, y4 = ys
        return kap(x) * y1 * (y3**2 + y4**2)

    def grad(x, ys):
        y1, _, y3, y4 = ys
        k = kap(x)
        g = np.zeros((4, x.size))
        g[0] = k * (y3**2 + y4**2)
        g[2] = 2.0 * k * y1 * y3
        g[3] = 2.0 * k * y1 * y4
        return g

    def hess(x, ys):
        y1, _, y3, y4 = ys
        k = kap(x)
        h = np.zeros((4, 4, x.size))
        h[0, 2] = h[2, 0] = 2.0 * k * y3
        h[0, 3] = h[3, 0] = 2.0 * k * y4
        h[2, 2] = 2.0 * k * y1
        h[3, 3] = 2.0 * k * y1
        return h

    return HamiltonianDensity("focusing_gradient", value, grad, hess)


def density_shear_gradient(
    kappa0: float = 0.05, kappa: Optional[Callable[[RealArray], RealArray]] = None
) -> HamiltonianDensity:
    """G = κ(x)·y₁(y₃² − y₄²): gradient-energy difference coupling.

    Its linearization has a genuinely off-diagonal second order (a₂ = 0,
    b₂ = 2κu₁), exercising the nontrivial symmetrizer branch.
    """
    kap = kappa or _kappa_default(kappa0)

    def value(x, ys):
        y1, _, y3, y4 = ys
        return kap(x) * y1 * (y3**2 - y4**2)

    def grad(x, ys):
        y1, _, y3, y4 = ys
        k = kap(x)
        g = np.zeros((4, x.size))
        g[0] = k * (y3**2 - y4**2)
        g[2] = 2.0 * k * y1 * y3
        g[3] = -2.0 * k * y1 * y4
        return g

    def hess(x, ys):
        y1, _, y3, y4 = ys
        k = kap(x)
        h = np.zeros((4, 4, x.size))
        h[0, 2] = h[2, 0] = 2.0 * k * y3
        h[0, 3] = h[3, 0] = -2.0 * k * y4
        h[2, 2] = 2.0 * k * y1
        h[3, 3] = -2.0 * k * y1
        return h

    return HamiltonianDensity("shear_gradient", value, grad, hess)


_BUILTINS: dict[str, Callable[..., HamiltonianDensity]] = {
    "zero": lambda kappa0=0.0: density_zero(),
    "focusing_gradient": density_focusing_gradient,
    "shear_gradient": density_shear_gradient,
}


def density_by_name(name: str, kappa0: float = 0.05) -> HamiltonianDensity:
    try:
        maker = _BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown density {name!r}; have {sorted(_BUILTINS)}") from None
    return maker(kappa0=kappa0)


def register_density(name: str, maker: Callable[..., HamiltonianDensity]) -> None:
    """Register a custom density factory under `name` for config lookup."""
    _BUILTINS[name] = maker


# ── pointwise model evaluation ────────────────────────────────────────────────


def _ys_of_pair(grid: Grid, u1: RealArray, u2: RealArray) -> YS:
    y3 = require_real(partial_x_values(grid, u1.astype(complex)), "∂ₓu₁")
    y4 = require_real(partial_x_values(grid, u2.astype(complex)), "∂ₓu₂")
    return (u1, u2, y3, y4)


def _check_resolved(u: Field, tol: float = 1e-10) -> None:
    c = np.abs(u.coeffs)
    total = float(np.sqrt(np.sum(c**2)))
    tail = float(np.sqrt(np.sum(c[~u.grid.dealias_mask] ** 2)))
    if total > 0 and tail > tol * total:
        raise ResolutionError(f"input tail energy {tail / total:.2e} above {tol:.0e}")


def eval_nonlinearity(G: HamiltonianDensity, u: Field) -> Field:
    """The complex-form quasi-linear nonlinearity at state u.

    𝒩(u) = −i[ (G_{y₁} + iG_{y₂})/√2 − ∂ₓ{ (G_{y₃} + iG_{y₄})/√2 } ] with the
    gradient evaluated at y = (u₁, u₂, ∂ₓu₁, ∂ₓu₂), (u₁ + iu₂)/√2 = u.  The
    outer ∂ₓ is the total derivative of the composed grid function, taken
    spectrally; the result is dealiased.
    """
    _check_resolved(u)
    grid = u.grid
    u1 = SQRT2 * u.values.real
    u2 = SQRT2 * u.values.imag
    g = G.grad(grid.x, _ys_of_pair(grid, u1, u2))
    inner = (g[0] + 1j * g[1]) / SQRT2
    outer = partial_x_values(grid, grid.dealias((g[2] + 1j * g[3]) / SQRT2))
    return Field(grid, grid.dealias(-1j * (inner - outer)))


def eval_P(G: HamiltonianDensity, p: Pair, p_t: Pair) -> Pair:
    """The real evolution operator P(u) at a state with given time derivative.

    P₁ = ∂ₜu₁ − ∂ₓₓu₂ + G_{y₂} − ∂ₓ{G_{y₄}},
    P₂ = ∂ₜu₂ + ∂ₓₓu₁ − G_{y₁} + ∂ₓ{G_{y₃}}.
    """
    grid = check_same_grid(p.grid, p_t.grid)
    u1 = p.u1.values.real
    u2 = p.u2.values.real
    g = G.grad(grid.x, _ys_of_pair(grid, u1, u2))
    dxx = lambda w: require_real(partial_x_values(grid, w.astype(complex), 2), "∂ₓₓu")
    dx_tot = lambda w: require_real(
        partial_x_values(grid, grid.dealias(w.astype(complex))), "∂ₓ{∇G}"
    )
    P1 = p_t.u1.values.real - dxx(u2) + grid.dealias(g[1].astype(complex)).real - dx_tot(g[3])
    P2 = p_t.u2.values.real + dxx(u1) - grid.dealias(g[0].astype(complex)).real + dx_tot(g[2])
    return Pair(Field(grid, P1.astype(complex)), Field(grid, P2.astype(complex)))


def hamiltonian_value(G: HamiltonianDensity, p: Pair) -> float:
    """H = ½∫((∂ₓu₁)² + (∂ₓu₂)²) + ∫G, by node quadrature."""
    grid = p.grid
    u1 = p.u1.values.real
    u2 = p.u2.values.real
    ys = _ys_of_pair(grid, u1, u2)
    kinetic = 0.5 * quadrature(grid, ys[2] ** 2 + ys[3] ** 2).real
    potential = quadrature(grid, G.value(grid.x, ys)).real
    return float(kinetic + potential)


def linearized_P(G: HamiltonianDensity, p: Pair, h: Pair, h_t: Pair) -> Pair:
    """Directional derivative P′(p)[h] with h's time derivative supplied.

    The Hessian of G couples h through h_{(j)} = (h₁, h₂, ∂ₓh₁, ∂ₓh₂):
    P′₁ = ∂ₜh₁ − ∂ₓₓh₂ + Σ_j G_{y₂y_j}h_{(j)} − ∂ₓ{Σ_j G_{y₄y_j}h_{(j)}},
    P′₂ = ∂ₜh₂ + ∂ₓₓh₁ − Σ_j G_{y₁y_j}h_{(j)} + ∂ₓ{Σ_j G_{y₃y_j}h_{(j)}}.
    """
    grid = check_same_grid(p.grid, h.grid, h_t.grid)
    H = G.hess(grid.x, _ys_of_pair(grid, p.u1.values.real, p.u2.values.real))
    hj = np.stack(_ys_of_pair(grid, h.u1.values.real, h.u2.values.real))
    couple = lambda row: grid.dealias(np.einsum("jn,jn->n", H[row], hj).astype(complex)).real
    dxx = lambda w: require_real(partial_x_values(grid, w.astype(complex), 2), "∂ₓₓh")
    dx = lambda w: require_real(partial_x_values(grid, w.astype(complex)), "∂ₓ{Hess·h}")
    P1 = h_t.u1.values.real - dxx(h.u2.values.real) + couple(1) - dx(couple(3))
    P2 = h_t.u2.values.real + dxx(h.u1.values.real) - couple(0) + dx(couple(2))
    return Pair(Field(grid, P1.astype(complex)), Field(grid, P2.astype(complex)))


# ── trajectories of pairs ─────────────────────────────────────────────────────


class PairTraj:
    """Time-sampled real pair trajectory; rows of u1/u2 are grid values."""

    __slots__ = ("grid", "times", "u1", "u2")

    def __init__(self, grid: Grid, times: RealArray, u1: RealArray, u2: RealArray):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self.u1 = require_real(np.asarray(u1), "PairTraj.u1")
        self.u2 = require_real(np.asarray(u2), "PairTraj.u2")
        expect = (self.times.size, grid.n)
        if self.u1.shape != expect or self.u2.shape != expect:
            raise ValueError(f"expected shape {expect}")

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def n_t(self) -> int:
        return self.times.size

    def pair(self, i: int) -> Pair:
        return Pair(
            Field(self.grid, self.u1[i].astype(complex)),
            Field(self.grid, self.u2[i].astype(complex)),
        )

    @classmethod
    def from_bold(cls, traj: Traj) -> "PairTraj":
        return cls(traj.grid, traj.times, SQRT2 * traj.data.real, SQRT2 * traj.data.imag)

    def to_bold(self) -> Traj:
        return Traj(self.grid, self.times, (self.u1 + 1j * self.u2) / SQRT2)

    @classmethod
    def zeros(cls, grid: Grid, times: RealArray) -> "PairTraj":
        z = np.zeros((len(times), grid.n))
        return cls(grid, times, z, z.copy())


# ── the linearized operator ───────────────────────────────────────────────────


@dataclass
class CoeffSet:
    """The 2×2 real-system coefficient matrices and their complex reduction.

    p2/p1/p0 hold the real matrices (shape (2, 2, n_t, n)); a_k/b_k the
    complex coefficient trajectories (n_t, n) entering A_k = [[a,b],[−b̄,−ā]].
    """

    grid: Grid
    times: RealArray
    p2: RealArray
    p1: RealArray
    p0: RealArray
    a2: ComplexArray
    a1: ComplexArray
    a0: ComplexArray
    b2: ComplexArray
    b1: ComplexArray
    b0: ComplexArray

    def n_tracker(self, s: float) -> float:
        """The coefficient-size functional N_T(s).

        sup_t max{‖a₂‖_s, ‖∂ₜa₂‖_s, ‖∂ₜₜa₂‖_s, ‖a₁‖_s, ‖∂ₜa₁‖_s, ‖a₀‖_s}
        + sup_t max{‖b₂‖_s, ‖∂ₜb₂‖_s, ‖b₁‖_s, ‖∂ₜb₁‖_s, ‖b₀‖_s}.
        """
        dt = float(self.times[1] - self.times[0])
        nrm = lambda arr: sobolev_norm_values(self.grid, arr, s)
        d1 = lambda arr: time_derivative(arr, dt, 1)
        a_part = max(
            nrm(self.a2), nrm(d1(self.a2)), nrm(time_derivative(self.a2, dt, 2)),
            nrm(self.a1), nrm(d1(self.a1)), nrm(self.a0),
        )
        b_part = max(nrm(self.b2), nrm(d1(self.b2)), nrm(self.b1), nrm(d1(self.b1)), nrm(self.b0))
        return a_part + b_part


def m_tracker(u: PairTraj, s: float) -> float:
    """Trajectory-size functional M_T(s; u₁, u₂).

    max_k sup_t ( ‖u_k‖_{s+4} + ‖∂ₜu_k‖_{s+2} + ‖∂ₜₜu_k‖_s ).
    """
    dt = float(u.times[1] - u.times[0])
    out = 0.0
    for comp in (u.u1, u.u2):
        val = (
            sobolev_norm_values(u.grid, comp, s + 4)
            + sobolev_norm_values(u.grid, time_derivative(comp, dt, 1), s + 2)
            + sobolev_norm_values(u.grid, time_derivative(comp, dt, 2), s)
        )
        out = max(out, val)
    return out


@dataclass
class OperatorL:
    """ℒ = ∂ₜ𝕀₂ + i(Σ+A₂)∂ₓₓ + iA₁∂ₓ + iA₀ as time-sampled coefficients.

    Only the generating pairs (a_k, b_k) are stored; the second matrix row is
    determined by the [[a, b], [−b̄, −ā]] structure.  The first component of
    ℒ𝐮 for a bold 𝐮 = (u, ū) is

        ∂ₜu + i(1+a₂)∂ₓₓu + ib₂∂ₓₓū + ia₁∂ₓu + ib₁∂ₓū + ia₀u + ib₀ū,

    and the second component is its conjugate.
    """

    grid: Grid
    times: RealArray
    a2: ComplexArray
    a1: ComplexArray
    a0: ComplexArray
    b2: ComplexArray
    b1: ComplexArray
    b0: ComplexArray
    coeffs: Optional[CoeffSet] = None
    hamiltonian_checked: bool = False

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def n_t(self) -> int:
        return self.times.size

    @classmethod
    def free(cls, grid: Grid, times: RealArray) -> "OperatorL":
        shape = (len(times), grid.n)
        z = lambda: np.zeros(shape, dtype=complex)
        L = cls(grid, np.asarray(times, float), z(), z(), z(), z(), z(), z())
        L.hamiltonian_checked = True
        return L

    def is_free(self) -> bool:
        return all(
            float(np.max(np.abs(c))) == 0.0
            for c in (self.a2, self.a1, self.a0, self.b2, self.b1, self.b0)
        )

    def apply_first_component(self, u: ComplexArray, u_t: ComplexArray) -> ComplexArray:
        """First component of ℒ𝐮 given sampled u and ∂ₜu (shapes (n_t, n))."""
        grid = self.grid
        ux = partial_x_values(grid, u)
        uxx = partial_x_values(grid, u, 2)
        ub = np.conj(u)
        ubx = partial_x_values(grid, ub)
        ubxx = partial_x_values(grid, ub, 2)
        coupled = (
            (1.0 + self.a2) * uxx + self.b2 * ubxx
            + self.a1 * ux + self.b1 * ubx
            + self.a0 * u + self.b0 * ub
        )
        return u_t + 1j * grid.dealias(coupled)

    def apply_traj(self, traj: Traj) -> Traj:
        """ℒ applied to a bold trajectory, ∂ₜ by the 4th-order stencils."""
        u_t = time_derivative(traj.data, traj.dt, 1)
        return Traj(self.grid, traj.times, self.apply_first_component(traj.data, u_t))

    def conjugate_flip(self) -> "OperatorL":
        """The companion operator with every b_k negated (a_k kept).

        For Hamiltonian coefficients this is exactly −ℒ*, so backward adjoint
        problems reduce to forward problems for this operator.
        """
        return OperatorL(
            self.grid, self.times, self.a2, self.a1, self.a0,
            -self.b2, -self.b1, -self.b0,
            hamiltonian_checked=self.hamiltonian_checked,
        )

    def structure_residuals(self) -> dict[str, float]:
        """Sup-norm residuals of the four Hamiltonian structure relations."""
        dx = lambda arr, m=1: partial_x_values(self.grid, arr, m)
        sup = lambda arr: float(np.max(np.abs(arr)))
        return {
            "a2 real": sup(self.a2.imag),
            "a1 relation": sup(self.a1 - (2.0 * dx(self.a2) - np.conj(self.a1))),
            "a0 relation": sup(self.a0 - (np.conj(self.a0) + dx(self.a2, 2) - dx(np.conj(self.a1)))),
            "b1 relation": sup(self.b1 - dx(self.b2)),
        }


def check_hamiltonian_structure(L: OperatorL, tol: float = STRUCTURE_TOL) -> dict[str, float]:
    """Assert the structure relations; marks the operator checked on success."""
    residuals = L.structure_residuals()
    for name, res in residuals.items():
        if res > tol:
            raise StructureError(f"structure relation '{name}' residual {res:.3e} > {tol:.0e}")
    L.hamiltonian_checked = True
    return residuals


def linearize(G: HamiltonianDensity, u_traj: PairTraj) -> OperatorL:
    """Coefficients of the linearized operator along a trajectory.

    Builds the real matrices p_k^{(ij)} from the Hessian of G composed with
    (u₁, u₂, ∂ₓu₁, ∂ₓu₂), then converts to the complex pairs via

        a_k = ½(−i p_k^{(11)} − p_k^{(12)} + p_k^{(21)} − i p_k^{(22)}),
        b_k = ½(−i p_k^{(11)} + p_k^{(12)} + p_k^{(21)} + i p_k^{(22)}).

    Every ∂ₓ{·} below is the total spectral derivative of the composed field.
    """
    grid = u_traj.grid
    n_t = u_traj.n_t
    shape = (n_t, grid.n)
    H = np.empty((4, 4, n_t, grid.n))
    for i in range(n_t):
        ys = _ys_of_pair(grid, u_traj.u1[i], u_traj.u2[i])
        H[:, :, i, :] = G.hess(grid.x, ys)
    # composed Hessian entries are products of smooth fields: dealias once
    Hd = require_real(
        np.stack([[grid.dealias(H[i, j].astype(complex)) for j in range(4)] for i in range(4)]),
        "Hessian coefficients",
    )
    dx = lambda arr, m=1: require_real(partial_x_values(grid, arr.astype(complex), m), "∂ₓ{Hess}")

    p2 = np.zeros((2, 2, n_t, grid.n))
    p2[0, 0] = -Hd[2, 3]
    p2[0, 1] = -Hd[3, 3]
    p2[1, 0] = Hd[2, 2]
    p2[1, 1] = Hd[2, 3]

    p1 = np.zeros_like(p2)
    p1[0, 0] = Hd[1, 2] - Hd[0, 3] - dx(Hd[2, 3])
    p1[0, 1] = -dx(Hd[3, 3])
    p1[1, 0] = dx(Hd[2, 2])
    p1[1, 1] = -Hd[0, 3] + Hd[1, 2] + dx(Hd[2, 3])

    p0 = np.zeros_like(p2)
    p0[0, 0] = Hd[0, 1] - dx(Hd[0, 3])
    p0[0, 1] = Hd[1, 1] - dx(Hd[1, 3])
    p0[1, 0] = -Hd[0, 0] + dx(Hd[0, 2])
    p0[1, 1] = -Hd[0, 1] + dx(Hd[1, 2])

    def to_ab(p: RealArray) -> tuple[ComplexArray, ComplexArray]:
        a = 0.5 * (-1j * p[0, 0] - p[0, 1] + p[1, 0] - 1j * p[1, 1])
        b = 0.5 * (-1j * p[0, 0] + p[0, 1] + p[1, 0] + 1j * p[1, 1])
        return a, b

    a2, b2 = to_ab(p2)
    a1, b1 = to_ab(p1)
    a0, b0 = to_ab(p0)
    coeffs = CoeffSet(grid, u_traj.times, p2, p1, p0, a2, a1, a0, b2, b1, b0)
    return OperatorL(grid, u_traj.times, a2, a1, a0, b2, b1, b0, coeffs=coeffs)


def directional_derivative_check(
    G: HamiltonianDensity,
    p: Pair,
    h: Pair,
    eps_list: Sequence[float] = (1e-3, 1e-4, 1e-5),
) -> dict[float, float]:
    """Validate linearized_P against finite differences of P.

    Returns {ε: ‖(P(p+εh) − P(p))/ε − P′(p)[h]‖₀ / ‖h‖₂}; expected O(ε) decay
    for genuinely nonlinear G and exactly 0 for G ≡ 0.
    """
    grid = p.grid
    zero_t = Pair(
        Field(grid, np.zeros(grid.n, dtype=complex)),
        Field(grid, np.zeros(grid.n, dtype=complex)),
    )
    h_norm = max(
        sobolev_norm_values(grid, h.u1.values, 2.0), sobolev_norm_values(grid, h.u2.values, 2.0)
    )
    if h_norm == 0.0:
        return {float(e): 0.0 for e in eps_list}
    base = eval_P(G, p, zero_t)
    lin = linearized_P(G, p, h, zero_t)
    out: dict[float, float] = {}
    for eps in eps_list:
        bumped = Pair(
            Field(grid, p.u1.values + eps * h.u1.values),
            Field(grid, p.u2.values + eps * h.u2.values),
        )
        diff = eval_P(G, bumped, zero_t)
        r1 = (diff.u1.values - base.u1.values) / eps - lin.u1.values
        r2 = (diff.u2.values - base.u2.values) / eps - lin.u2.values
        resid = np.sqrt(
            sobolev_norm_values(grid, r1, 0.0) ** 2 + sobolev_norm_values(grid, r2, 0.0) ** 2
        )
        out[float(eps)] = float(resid / h_norm)
    return out


def bold_linearized_apply(
    G: HamiltonianDensity, p: Pair, bh: BoldField, bh_t: BoldField
) -> BoldField:
    """First component of 𝒞⁻¹ P′(p) 𝒞 applied to a bold field.

    Used to verify that linearize() reproduces the conjugated real
    linearization; bh_t supplies ∂ₜ of the bold argument.
    """
    from .spectral import c_transform

    hp = c_inverse(bh)
    hp_t = c_inverse(bh_t)
    Ph = linearized_P(G, p, hp, hp_t)
    return c_transform(Ph)
