"""Observability diagnostics and HUM synthesis of internal controls.

The controllability argument is variational: the Gramian

    𝒢 g₁ = w(T),   where ℒ*g = 0 backward from g₁ and ℒw = χ_ω g forward from 0,

is self-adjoint and positive for the real 𝐋² pairing whenever the system is
observable from ω, and the control steering h_in to h_end is recovered from
the solution of 𝒢f₁ = (target) by one more backward/forward sweep.  The
module provides the cutoff construction, empirical observability estimates
(an Ingham-quotient experiment and the backward-flow functional), the CG
solve of the Gramian equation, the right inverse of the linearized control
map in real-pair variables, and a tame-shape regularity audit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .hamiltonian import (
    HamiltonianDensity,
    OperatorL,
    PairTraj,
    linearize,
    linearized_P,
)
from .reduction import ReductionData, full_reduce, operator_size
from .solvers import (
    AccuracyError,
    FullSolution,
    data_scale,
    solve_adjoint_backward,
    solve_full,
    solve_full_backward,
)
from .spectral import (
    ComplexArray,
    Field,
    Grid,
    Pair,
    RealArray,
    SQRT2,
    c_transform,
    sobolev_norm_values,
    uniform_times,
)
from .timegrid import simpson_integral, time_derivative

CG_TOL = 1e-10
CG_MAX_ITERS = 500


class ObservabilityError(RuntimeError):
    """Coercivity of the Gramian could not be established or CG stagnated."""


# ── cutoff construction ───────────────────────────────────────────────────────


def _smooth_step(t: RealArray) -> RealArray:
    """C∞ step from the exp(−1/s) bump: exactly 0 for t ≤ 0, 1 for t ≥ 1."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    out[t >= 1.0] = 1.0
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    out[mid] = a / (a + b)
    return out


@dataclass(frozen=True)
class Cutoff:
    """Smooth spatial cutoff χ_ω: 1 on a centered plateau, 0 outside the arc."""

    grid: Grid
    a: float
    b: float
    plateau: tuple[float, float]
    chi: Field

    @property
    def values(self) -> RealArray:
        return self.chi.values.real

    def tail_energy(self) -> float:
        """Spectral energy of χ beyond the resolved band, relative."""
        c = self.chi.coeffs
        mask = self.grid.dealias_mask
        total = float(np.sum(np.abs(c) ** 2))
        return float(np.sum(np.abs(c[~mask]) ** 2) / max(total, 1e-300))


def make_cutoff(grid: Grid, a: float, b: float, plateau_fraction: float = 0.5) -> Cutoff:
    """Bump-profile cutoff on the arc (a, b), exactly 0/1 outside/on-plateau.

    The arc may wrap past 2π (pass b > 2π); plateau_fraction fixes the length
    of the central flat part, the rest splits evenly into the two shoulders.
    """
    length = b - a
    if not (0.0 < length < 2.0 * np.pi):
        raise ValueError(f"degenerate arc ({a}, {b})")
    if not (0.0 < plateau_fraction < 1.0):
        raise ValueError("plateau_fraction must lie in (0, 1)")
    shoulder = 0.5 * (1.0 - plateau_fraction) * length
    rel = np.mod(grid.x - a, 2.0 * np.pi)  # unwrapped position along the arc
    rise = _smooth_step(rel / shoulder)
    fall = _smooth_step((length - rel) / shoulder)
    vals = np.where(rel < length, rise * fall, 0.0)
    # enforce the exact plateau (the two steps each equal 1 there already,
    # up to rounding in the exp quotient)
    on_plateau = (rel >= shoulder) & (rel <= length - shoulder)
    vals[on_plateau] = 1.0
    plateau = (a + shoulder, b - shoulder)
    return Cutoff(grid, a, b, plateau, Field(grid, vals.astype(complex)))


# ── observability diagnostics ─────────────────────────────────────────────────


@dataclass
class ObservabilityReport:
    """Empirical lower-bound record for an observability experiment."""

    c_hat: float
    trials: int
    mu: float
    T: float
    chain: dict[str, float] = field(default_factory=dict)

    def require_positive(self) -> None:
        if not (self.c_hat > 0.0):
            raise ObservabilityError(f"estimated constant {self.c_hat:.3e} is not positive")


def constant_chain(base: float) -> dict[str, float]:
    """The degradation bookkeeping of the observability argument.

    Each cutoff or perturbation step pays a fixed factor: C₃ = C₂/4,
    C₄ = C₃/16, C₆ = C₅/2, C₈ = C₇/4.  Steps that re-choose the interior arc
    (C₅, C₇) keep the running value; the dict records the resulting chain
    starting from the supplied base constant C₂.
    """
    c2 = float(base)
    c3 = c2 / 4.0
    c4 = c3 / 16.0
    c5 = c4
    c6 = c5 / 2.0
    c7 = c6
    c8 = c7 / 4.0
    return {"C2": c2, "C3": c3, "C4": c4, "C5": c5, "C6": c6, "C7": c7, "C8": c8}


def ingham_lower_bound(
    T: float,
    mu: float,
    trials: int,
    seed: int = 0,
    j_max: int = 12,
    n_t: int = 2049,
) -> ObservabilityReport:
    """Monte-Carlo minimum of ∫₀ᵀ|Σ_j w_j e^{iμj²t}|²dt / Σ_j|w_j|².

    Frequencies run over j = 0, 1, …, j_max (gaps μ(j²−k²) never below 1/2
    when μ ≥ 1/2, which the precondition enforces).
    """
    if mu < 0.5:
        raise ValueError(f"μ = {mu} < 1/2: frequency gaps too small for the bound")
    if T <= 0.0:
        raise ValueError("T must be positive")
    rng = np.random.default_rng(seed)
    times = uniform_times(T, n_t)
    dt = float(times[1] - times[0])
    phases = np.exp(1j * mu * np.outer(times, np.arange(j_max + 1) ** 2))
    worst = np.inf
    for _ in range(trials):
        w = rng.standard_normal(j_max + 1) + 1j * rng.standard_normal(j_max + 1)
        series = phases @ w
        ratio = float(
            simpson_integral(np.abs(series) ** 2, dt) / np.sum(np.abs(w) ** 2)
        )
        worst = min(worst, ratio)
    report = ObservabilityReport(worst, trials, mu, T, constant_chain(worst))
    report.require_positive()
    return report


def observability_functional(
    L: OperatorL,
    chi: RealArray,
    u_T: ComplexArray,
    reduction: Optional[ReductionData] = None,
) -> float:
    """∫₀ᵀ∫ χ_ω |𝐮|² dx dt for the backward solution of ℒu = 0 from u_T.

    |𝐮|² counts both bold components, i.e. equals 2|u|².
    """
    sol = solve_full_backward(L, u_T, reduction=reduction)
    dt = float(L.times[1] - L.times[0])
    dens = 2.0 * np.abs(sol.data) ** 2 * np.asarray(chi, float)[None, :]
    space = 2.0 * np.pi * np.mean(dens, axis=-1)
    return float(simpson_integral(space, dt))


def observability_constant(
    L: OperatorL,
    chi: RealArray,
    trials: int,
    seed: int = 0,
    band: int = 8,
    reduction: Optional[ReductionData] = None,
) -> ObservabilityReport:
    """ĉ = min over random band-limited terminal data of functional / ‖u_T‖₀²."""
    rng = np.random.default_rng(seed)
    grid = L.grid
    red = reduction if reduction is not None else full_reduce(L)
    worst = np.inf
    for _ in range(trials):
        c = np.zeros(grid.n, dtype=complex)
        for k in range(-band, band + 1):
            c[k % grid.n] = rng.standard_normal() + 1j * rng.standard_normal()
        u_T = grid.to_values(c)
        val = observability_functional(L, chi, u_T, reduction=red)
        norm2 = sobolev_norm_values(grid, u_T, 0.0) ** 2
        worst = min(worst, val / norm2)
    mu = red.mu
    report = ObservabilityReport(worst, trials, mu, float(L.times[-1]), constant_chain(worst))
    report.require_positive()
    return report


# ── HUM solve ─────────────────────────────────────────────────────────────────


@dataclass
class ControlProblem:
    """Steering data for the linearized flow: from h_in at 0 to h_end at T."""

    L: OperatorL
    chi: RealArray
    h_in: ComplexArray
    h_end: ComplexArray
    q: Optional[ComplexArray] = None
    reduction: Optional[ReductionData] = None
    reduction_flip: Optional[ReductionData] = None

    def with_reductions(self) -> "ControlProblem":
        red = self.reduction if self.reduction is not None else full_reduce(self.L)
        flip = (
            self.reduction_flip
            if self.reduction_flip is not None
            else (red if self.L.is_free() else full_reduce(self.L.conjugate_flip()))
        )
        return ControlProblem(self.L, self.chi, self.h_in, self.h_end, self.q, red, flip)


@dataclass
class ControlSolution:
    """HUM output: terminal adjoint datum, control flow, controlled state."""

    f1: ComplexArray
    f: ComplexArray
    h: ComplexArray
    gramian_iters: int
    residual_endpoint: float
    residual_adjoint: float
    cg_history: list[float]
    ritz_min: float
    ritz_max: float
    control_norm_bound: float
    data_size: float


def _bold_inner(u: ComplexArray, v: ComplexArray) -> float:
    return float(2.0 * np.real(2.0 * np.pi * np.mean(u * np.conj(v))))


def _ritz_interval(alphas: list[float], betas: list[float]) -> tuple[float, float]:
    """Extremal Ritz values of the CG-Lanczos tridiagonal matrix."""
    m = len(alphas)
    if m == 0:
        return 0.0, 0.0
    diag = np.empty(m)
    off = np.empty(max(m - 1, 0))
    for i in range(m):
        diag[i] = 1.0 / alphas[i] + (betas[i - 1] / alphas[i - 1] if i > 0 else 0.0)
        if i < m - 1:
            off[i] = np.sqrt(max(betas[i], 0.0)) / alphas[i]
    tri = np.diag(diag)
    if m > 1:
        tri += np.diag(off, 1) + np.diag(off, -1)
    ev = np.linalg.eigvalsh(tri)
    return float(ev[0]), float(ev[-1])


def hum_solve(
    problem: ControlProblem,
    cg_tol: float = CG_TOL,
    cg_max_iters: int = CG_MAX_ITERS,
    endpoint_tol: float = 1e-6,
) -> ControlSolution:
    """Solve the steering problem by CG on the Gramian equation 𝒢f₁ = target.

    target = h_end − z(T) with z the uncontrolled flow (ℒz = q, z(0) = h_in);
    the returned control is the backward adjoint flow of f₁ (the state is
    forced by χ_ω f + q), which is the HUM-minimal control.
    """
    prob = problem.with_reductions()
    L, chi = prob.L, np.asarray(prob.chi, float)
    red, flip = prob.reduction, prob.reduction_flip

    def gramian(g1: ComplexArray) -> ComplexArray:
        adj = solve_adjoint_backward(L, g1, reduction_flip=flip, diagnostics=False)
        w = solve_full(
            L, np.zeros(L.grid.n, complex), chi[None, :] * adj.data,
            reduction=red, diagnostics=False,
        )
        return w.data[-1]

    z = solve_full(L, prob.h_in, prob.q, reduction=red)
    target = np.asarray(prob.h_end, complex) - z.data[-1]

    data_size = data_scale(L.grid, prob.h_in, prob.q) + sobolev_norm_values(
        L.grid, np.asarray(prob.h_end, complex), 0.0
    )
    target_norm = np.sqrt(max(_bold_inner(target, target), 0.0))

    f1 = np.zeros(L.grid.n, dtype=complex)
    history: list[float] = []
    alphas: list[float] = []
    betas: list[float] = []
    iters = 0
    if target_norm > 0.0:
        r = target.copy()
        p = r.copy()
        rr = _bold_inner(r, r)
        for iters in range(1, cg_max_iters + 1):
            Gp = gramian(p)
            pGp = _bold_inner(p, Gp)
            if pGp <= 0.0:
                raise ObservabilityError(
                    f"Gramian lost positivity at iteration {iters}: ⟨p,𝒢p⟩ = {pGp:.3e}"
                )
            alpha = rr / pGp
            f1 = f1 + alpha * p
            r = r - alpha * Gp
            rr_new = _bold_inner(r, r)
            history.append(np.sqrt(max(rr_new, 0.0)) / target_norm)
            alphas.append(alpha)
            if history[-1] <= cg_tol:
                break
            beta = rr_new / rr
            betas.append(beta)
            p = r + beta * p
            rr = rr_new
        else:
            raise ObservabilityError(
                f"CG did not reach {cg_tol:.0e} in {cg_max_iters} iterations "
                f"(last relative residual {history[-1]:.3e})"
            )

    adj = solve_adjoint_backward(L, f1, reduction_flip=flip, diagnostics=False)
    f = adj.data
    forcing = chi[None, :] * f
    if prob.q is not None:
        forcing = forcing + prob.q
    state = solve_full(L, prob.h_in, forcing, reduction=red, diagnostics=False)
    endpoint = float(
        sobolev_norm_values(L.grid, state.data[-1] - prob.h_end, 0.0)
        / max(data_size, 1e-30)
    )
    if endpoint > endpoint_tol:
        raise AccuracyError(
            f"endpoint residual {endpoint:.3e} exceeds tolerance {endpoint_tol:.0e}"
        )

    ritz_min, ritz_max = _ritz_interval(alphas, betas)
    bound = target_norm / ritz_min if ritz_min > 0.0 else 0.0
    return ControlSolution(
        f1=f1,
        f=f,
        h=state.data,
        gramian_iters=iters,
        residual_endpoint=endpoint,
        residual_adjoint=adj.l4.mild_residual,
        cg_history=history,
        ritz_min=ritz_min,
        ritz_max=ritz_max,
        control_norm_bound=bound,
        data_size=data_size,
    )


# ── right inverse of the linearized control map ───────────────────────────────


@dataclass
class RightInverseData:
    """Data triple for the linearized steering problem in real-pair form."""

    v: PairTraj
    alpha: Pair
    beta: Pair


def right_inverse_psi(
    G: HamiltonianDensity,
    u: PairTraj,
    z: RightInverseData,
    chi: RealArray,
    f: Optional[PairTraj] = None,
    delta_gate: float = 0.1,
    reductions: Optional[tuple[ReductionData, ReductionData]] = None,
    cg_tol: float = CG_TOL,
    cg_max_iters: int = CG_MAX_ITERS,
    endpoint_tol: float = 1e-6,
) -> tuple[PairTraj, PairTraj, ControlSolution]:
    """Solve P′(u)[h] − χ_ωφ = v, h(0) = α, h(T) = β for (h, φ).

    Transforms the real pair data to bold variables, runs hum_solve for the
    linearized operator along u, and maps back.  The current control iterate f
    does not enter the linearized problem (the map is affine in f); the
    argument is kept for call-shape symmetry with the outer iteration.
    """
    del f
    size = pair_traj_x_norm(u, 4.0)
    if size > delta_gate:
        raise ValueError(
            f"linearization point too large: ‖u‖_X4-type size {size:.3e} > {delta_gate}"
        )
    L = linearize(G, u)
    red = flip = None
    if reductions is not None:
        red, flip = reductions
    bold_v = _pair_rows_to_bold(z.v)
    problem = ControlProblem(
        L,
        chi,
        _pair_to_bold(z.alpha),
        _pair_to_bold(z.beta),
        q=bold_v,
        reduction=red,
        reduction_flip=flip,
    )
    sol = hum_solve(problem, cg_tol, cg_max_iters, endpoint_tol)
    grid, times = u.grid, u.times
    h = _bold_rows_to_pair_traj(grid, times, sol.h)
    phi = _bold_rows_to_pair_traj(grid, times, sol.f)
    return h, phi, sol


def right_inverse_defect(
    G: HamiltonianDensity,
    u: PairTraj,
    h: PairTraj,
    phi: PairTraj,
    chi: RealArray,
    v: PairTraj,
) -> float:
    """Relative sup residual of P′(u)[h] − χ_ωφ − v by direct substitution."""
    grid, times = u.grid, u.times
    dt = float(times[1] - times[0])
    h1_t = time_derivative(h.u1, dt, 1)
    h2_t = time_derivative(h.u2, dt, 1)
    worst = 0.0
    scale = 0.0
    for i in range(times.size):
        Ph = linearized_P(
            G,
            u.pair(i),
            Pair(Field(grid, h.u1[i].astype(complex)), Field(grid, h.u2[i].astype(complex))),
            Pair(Field(grid, h1_t[i].astype(complex)), Field(grid, h2_t[i].astype(complex))),
        )
        r1 = Ph.u1.values.real - chi * phi.u1[i] - v.u1[i]
        r2 = Ph.u2.values.real - chi * phi.u2[i] - v.u2[i]
        worst = max(worst, sobolev_norm_values(grid, r1 + 0j, 0.0), sobolev_norm_values(grid, r2 + 0j, 0.0))
        scale = max(
            scale,
            sobolev_norm_values(grid, v.u1[i] + 0j, 0.0),
            sobolev_norm_values(grid, v.u2[i] + 0j, 0.0),
            sobolev_norm_values(grid, phi.u1[i] + 0j, 0.0),
            sobolev_norm_values(grid, phi.u2[i] + 0j, 0.0),
        )
    return worst / max(scale, 1e-30)


def _pair_to_bold(p: Pair) -> ComplexArray:
    return c_transform(p).u.values


def _pair_rows_to_bold(p: PairTraj) -> ComplexArray:
    return (p.u1 + 1j * p.u2) / SQRT2


def _bold_rows_to_pair_traj(grid: Grid, times: RealArray, rows: ComplexArray) -> PairTraj:
    return PairTraj(grid, times, SQRT2 * rows.real, SQRT2 * rows.imag)


def pair_traj_x_norm(u: PairTraj, s: float) -> float:
    """The X_s-type size of a real-pair trajectory (state-norm tracker at σ)."""
    dt = float(u.times[1] - u.times[0])
    worst = 0.0
    for comp in (u.u1, u.u2):
        c = comp.astype(complex)
        worst = max(
            worst,
            sobolev_norm_values(u.grid, c, s + 4.0)
            + sobolev_norm_values(u.grid, time_derivative(c, dt, 1), s + 2.0)
            + sobolev_norm_values(u.grid, time_derivative(c, dt, 2), s),
        )
    return worst


# ── regularity audit ──────────────────────────────────────────────────────────


def regularity_audit(
    L: OperatorL,
    solution: ControlSolution,
    s_list: tuple[float, ...] = (0.0, 1.0, 2.0),
    sigma: float = 4.0,
    cap: float = 1e3,
) -> dict[float, dict[str, float | bool]]:
    """Tame-shape check: ‖f‖_{T,s}, ‖h‖_{T,s} against data norms.

    For each s the audit fits C_s = ‖·‖_{T,s} / (data_s + N(s+σ)·data_0) and
    flags the level if the fitted constant exceeds the cap (evidence of
    derivative loss beyond the tame budget).  Informational only.
    """
    grid = L.grid
    sup_norm = lambda rows, s: sobolev_norm_values(grid, rows, s)
    h_end = solution.h[-1]
    h_in = solution.h[0]
    out: dict[float, dict[str, float | bool]] = {}
    coeff0 = operator_size(L, sigma)
    for s in s_list:
        data_s = (
            sobolev_norm_values(grid, h_in, s)
            + sobolev_norm_values(grid, h_end, s)
        )
        data_0 = (
            sobolev_norm_values(grid, h_in, 0.0)
            + sobolev_norm_values(grid, h_end, 0.0)
        )
        coeff = operator_size(L, s + sigma)
        denom = data_s + coeff * data_0
        f_norm = sup_norm(solution.f, s)
        h_norm = sup_norm(solution.h, s)
        C = max(f_norm, h_norm) / max(denom, 1e-30)
        out[s] = {
            "f_norm": f_norm,
            "h_norm": h_norm,
            "data_norm": data_s,
            "coeff_size": coeff,
            "coeff_size_sigma": coeff0,
            "fitted_C": C,
            "pass": bool(np.isfinite(C) and C <= cap),
        }
    return out
