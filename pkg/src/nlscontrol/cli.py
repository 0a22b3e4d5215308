"""Batch front door: subcommands over a parsed run configuration.

Exit codes: 0 success, 2 configuration, 3 precondition, 4 accuracy or
divergence.  Every run writes its artifacts plus a manifest.json into the
output directory; CSV bytes depend only on config and seed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, set_key, validate_config
from .hamiltonian import (
    OperatorL,
    PairTraj,
    check_hamiltonian_structure,
    density_by_name,
    linearize,
)
from .hum import ControlProblem, hum_solve, ingham_lower_bound, make_cutoff, observability_constant
from .nashmoser import (
    NMParams,
    control_nonlinear,
    pair_from_coeffs,
    pair_norm,
    solve_cauchy_nonlinear,
)
from .reduction import full_reduce, symplectic_stage_residuals
from .snapshots import snapshot_csv, write_csv, write_manifest, write_snapshot
from .solvers import AccuracyError, adjoint_defect, solve_adjoint_backward, solve_full
from .spectral import (
    Field,
    Grid,
    Pair,
    SQRT2,
    lambda_s,
    smooth_R,
    smooth_S,
    smoothing_levels,
    sobolev_norm,
    sobolev_norm_values,
    uniform_times,
)

# ── deterministic data synthesis ──────────────────────────────────────────────


def _synth_coeffs(grid: Grid, amplitude: float, modes: int, rng: np.random.Generator) -> np.ndarray:
    """Band-limited coefficient vector with ‖·‖₄ scaled to `amplitude`."""
    c = np.zeros(grid.n, dtype=complex)
    if amplitude == 0.0 or modes == 0:
        return c
    for k in range(-modes, modes + 1):
        if k == 0:
            continue
        c[k % grid.n] = rng.standard_normal() + 1j * rng.standard_normal()
    size = float(np.sqrt(np.sum((grid.bracket(4.0) * np.abs(c)) ** 2)))
    if size > 0:
        c *= amplitude / size
    return c


def _synth_pair(grid: Grid, amplitude: float, modes: int, rng: np.random.Generator) -> Pair:
    return pair_from_coeffs(grid, _synth_coeffs(grid, amplitude, modes, rng))


def _synth_background(
    grid: Grid, times: np.ndarray, amplitude: float, modes: int, rng: np.random.Generator
) -> PairTraj:
    """Small smooth space-time pair: a few modes under low-frequency envelopes."""
    rows = np.zeros((times.size, grid.n), dtype=complex)
    for k in list(range(-modes, 0)) + list(range(1, modes + 1)):
        amp = rng.standard_normal() + 1j * rng.standard_normal()
        freq = int(rng.integers(1, 4))
        phase = float(rng.uniform(0.0, 2.0 * np.pi))
        env = np.cos(freq * np.pi * times / times[-1] + phase)
        rows += np.outer(amp * env, np.exp(1j * k * grid.x) / grid.n * grid.n)
    sup = max(float(np.max(np.abs(rows))), 1e-300)
    rows *= amplitude / sup
    return PairTraj(grid, times, SQRT2 * rows.real, SQRT2 * rows.imag)


def _random_smooth_field(grid: Grid, rng: np.random.Generator) -> Field:
    """û_k = ⟨k⟩⁻² A_k e^{iθ}: the smooth-field class of the property suite."""
    c = (rng.standard_normal(grid.n) + 1j * rng.standard_normal(grid.n)) * grid.bracket(-2.0)
    return Field.from_coeffs(grid, c)


# ── subcommand implementations ────────────────────────────────────────────────


def _operator(cfg: RunConfig, grid: Grid, times: np.ndarray, rng: np.random.Generator) -> OperatorL:
    G = density_by_name(cfg.density, kappa0=cfg.kappa0)
    background = _synth_background(grid, times, cfg.amplitude, max(cfg.modes, 1), rng)
    return linearize(G, background)


def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    grid = Grid(cfg.n)
    times = uniform_times(cfg.T, cfg.n_t)
    rng = np.random.default_rng(cfg.seed)
    L = _operator(cfg, grid, times, rng)
    u0 = _synth_coeffs(grid, cfg.amplitude, max(cfg.modes, 1), rng)
    u0_vals = np.fft.ifft(u0 * grid.n)
    sol = solve_full(L, u0_vals, cross_check=True)

    coeff_rows = np.fft.fft(sol.data, axis=-1) / grid.n
    write_snapshot(out / "trajectory.nlsf", grid, coeff_rows)
    header = ["t"] + [f"norm_{s:g}" for s in cfg.norms]
    rows = []
    for i, t in enumerate(times):
        rows.append([t] + [float(sobolev_norm_values(grid, sol.data[i], s)) for s in cfg.norms])
    write_csv(out / "norms.csv", header, rows)
    return {
        "equation_residual": float(sol.equation_residual),
        "consistency_error": float(sol.consistency_error),
        "data_scale": float(sol.data_scale),
    }


def cmd_reduce(cfg: RunConfig, out: Path) -> dict:
    grid = Grid(cfg.n)
    times = uniform_times(cfg.T, cfg.n_t)
    rng = np.random.default_rng(cfg.seed)
    L = _operator(cfg, grid, times, rng)
    data = full_reduce(L)
    symp = symplectic_stage_residuals(data, seed=cfg.seed)

    a2_rows = np.asarray(data.stages["L1"].a2, dtype=complex)
    a1_rows = np.asarray(data.stages["L3"].a1, dtype=complex)
    det_dev = float(data.diagnostics.get("det_S_deviation", 0.0))
    header = ["t", "order2_variance", "order1_sup", "remainder_sup", "det_s_deviation"] + [
        f"symplectic_{name}" for name in sorted(symp)
    ]
    rows = []
    for i, t in enumerate(times):
        rows.append(
            [
                t,
                float(np.var(a2_rows[i].real)),
                float(np.max(np.abs(a1_rows[i]))),
                max(float(np.max(np.abs(data.r1[i]))), float(np.max(np.abs(data.r2[i])))),
                det_dev,
            ]
            + [float(symp[name]) for name in sorted(symp)]
        )
    write_csv(out / "reduction.csv", header, rows)
    return {
        "mu": float(data.mu),
        **{f"symplectic_{k}": float(v) for k, v in sorted(symp.items())},
        **{k: float(v) for k, v in sorted(data.diagnostics.items()) if np.isscalar(v)},
    }


def cmd_observe(cfg: RunConfig, out: Path) -> dict:
    if cfg.mu < 0.5:
        raise ValueError(f"dispersion coefficient μ = {cfg.mu} below the 1/2 threshold")
    grid = Grid(cfg.n)
    times = uniform_times(cfg.T, cfg.n_t)
    rng = np.random.default_rng(cfg.seed)
    chi = make_cutoff(grid, cfg.omega_a, cfg.omega_b, cfg.plateau_fraction).values

    ingham = ingham_lower_bound(cfg.T, cfg.mu, cfg.trials, seed=cfg.seed)
    free = observability_constant(OperatorL.free(grid, times), chi, cfg.trials, seed=cfg.seed)
    perturbed = observability_constant(_operator(cfg, grid, times, rng), chi, cfg.trials, seed=cfg.seed)

    write_csv(
        out / "observability.csv",
        ["experiment", "mu", "T", "trials", "constant"],
        [
            ["ingham", ingham.mu, ingham.T, ingham.trials, ingham.c_hat],
            ["free", cfg.mu, cfg.T, free.trials, free.c_hat],
            ["perturbed", cfg.mu, cfg.T, perturbed.trials, perturbed.c_hat],
        ],
    )
    ingham.require_positive()
    free.require_positive()
    perturbed.require_positive()
    return {
        "ingham_constant": float(ingham.c_hat),
        "free_constant": float(free.c_hat),
        "perturbed_constant": float(perturbed.c_hat),
        "degradation_factor": float(free.c_hat / perturbed.c_hat) if perturbed.c_hat else float("inf"),
        "constant_chain": {k: float(v) for k, v in free.chain.items()},
    }


def cmd_control_lin(cfg: RunConfig, out: Path) -> dict:
    grid = Grid(cfg.n)
    times = uniform_times(cfg.T, cfg.n_t)
    rng = np.random.default_rng(cfg.seed)
    chi = make_cutoff(grid, cfg.omega_a, cfg.omega_b, cfg.plateau_fraction).values
    h_in = np.fft.ifft(_synth_coeffs(grid, cfg.amplitude, cfg.lin_modes, rng) * grid.n)
    problem = ControlProblem(
        L=OperatorL.free(grid, times),
        chi=chi,
        h_in=h_in,
        h_end=np.zeros(grid.n, dtype=complex),
    )
    sol = hum_solve(problem, cg_tol=cfg.cg_tol, cg_max_iters=cfg.cg_max_iters, endpoint_tol=cfg.lin_endpoint_tol)

    write_csv(
        out / "cg_history.csv",
        ["iteration", "residual"],
        [[i, r] for i, r in enumerate(sol.cg_history)],
    )
    write_csv(
        out / "control_norm.csv",
        ["t", "l2_norm"],
        [[t, float(sobolev_norm_values(grid, sol.f[i], 0.0))] for i, t in enumerate(times)],
    )
    heat_rows = []
    for i, t in enumerate(times):
        for m, x in enumerate(grid.x):
            heat_rows.append([t, x, float(np.abs(sol.f[i, m]))])
    write_csv(out / "control_heatmap.csv", ["t", "x", "abs_f"], heat_rows)
    write_snapshot(out / "control.nlsf", grid, np.fft.fft(sol.f, axis=-1) / grid.n)
    return {
        "endpoint_residual": float(sol.residual_endpoint),
        "adjoint_residual": float(sol.residual_adjoint),
        "gramian_iterations": int(sol.gramian_iters),
        "ritz_interval": [float(sol.ritz_min), float(sol.ritz_max)],
        "control_norm_bound": float(sol.control_norm_bound),
    }


def cmd_control(cfg: RunConfig, out: Path) -> dict:
    grid = Grid(cfg.n)
    rng = np.random.default_rng(cfg.seed)
    G = density_by_name(cfg.density, kappa0=cfg.kappa0)
    cutoff = make_cutoff(grid, cfg.omega_a, cfg.omega_b, cfg.plateau_fraction)
    u_in = _synth_pair(grid, cfg.amplitude, cfg.modes, rng)
    u_end = _synth_pair(grid, cfg.amplitude, cfg.modes, rng)

    result = control_nonlinear(
        u_in,
        u_end,
        G,
        cfg.T,
        cutoff,
        params=cfg.nm_params(),
        n_t=cfg.n_t,
        endpoint_tol=cfg.endpoint_tol,
    )
    it = result.iteration
    write_csv(
        out / "iteration.csv",
        ["iteration", "residual", "equation_residual", "increment"],
        [[s.j, s.residual, s.phi_residual, s.increment] for s in it.log],
    )
    write_snapshot(out / "control.nlsf", grid, np.fft.fft((result.control.u1 + 1j * result.control.u2) / SQRT2, axis=-1) / grid.n)
    write_snapshot(out / "state.nlsf", grid, np.fft.fft((result.state.u1 + 1j * result.state.u2) / SQRT2, axis=-1) / grid.n)
    return {
        "params": _params_dict(cfg.nm_params()),
        "iterations": int(it.iterations),
        "residuals": [float(s.residual) for s in it.log],
        "equation_residuals": [float(s.phi_residual) for s in it.log],
        "final_residual": float(it.final_residual),
        "data_norm": float(it.data_norm),
        "energy_norm": float(it.energy_norm),
        "c1_ratio": float(it.c1_ratio),
        "superlinear_ratio": float(it.superlinear_ratio()),
        "halved": bool(it.halved),
        "endpoint_residual": float(result.endpoint_residual),
        "offsupport_sup": float(result.offsupport_sup),
        "resimulation_gap": float(result.resim_endpoint_gap),
    }


def cmd_cauchy(cfg: RunConfig, out: Path) -> dict:
    grid = Grid(cfg.n)
    rng = np.random.default_rng(cfg.seed)
    G = density_by_name(cfg.density, kappa0=cfg.kappa0)
    u_in = _synth_pair(grid, cfg.amplitude, cfg.modes, rng)

    result = solve_cauchy_nonlinear(u_in, G, cfg.T, params=cfg.nm_params(), n_t=cfg.n_t, cross_tol=cfg.cross_tol)
    it = result.iteration
    rows = (result.state.u1 + 1j * result.state.u2) / SQRT2
    write_snapshot(out / "trajectory.nlsf", grid, np.fft.fft(rows, axis=-1) / grid.n)
    write_csv(
        out / "iteration.csv",
        ["iteration", "residual", "equation_residual", "increment"],
        [[s.j, s.residual, s.phi_residual, s.increment] for s in it.log],
    )
    return {
        "params": _params_dict(cfg.nm_params()),
        "iterations": int(it.iterations),
        "residuals": [float(s.residual) for s in it.log],
        "final_residual": float(it.final_residual),
        "data_norm": float(it.data_norm),
        "energy_norm": float(it.energy_norm),
        "c1_ratio": float(it.c1_ratio),
        "direct_integrator_gap": float(result.direct_gap),
        "hamiltonian_drift": float(result.energy_drift),
        "hamiltonian_reference": float(result.energy_reference),
    }


def _params_dict(p: NMParams) -> dict:
    return {
        "a0": p.a0,
        "mu_loss": p.mu_loss,
        "a1": p.a1,
        "alpha": p.alpha,
        "beta_reg": p.beta_reg,
        "a2": p.a2,
        "delta": p.delta,
        "max_iter": p.max_iter,
        "tol": p.tol,
    }


# ── the invariant check suite ─────────────────────────────────────────────────


def _check_rows(cfg: RunConfig) -> list[tuple[str, float, float]]:
    """(name, measured, bound) triples; measured ≤ bound means pass."""
    grid = Grid(cfg.n)
    rng = np.random.default_rng(cfg.seed)
    rows: list[tuple[str, float, float]] = []
    levels = smoothing_levels(grid)

    worst_proj = worst_growth = worst_tail = worst_block = worst_orth = 0.0
    grades = [(0.0, 2.0), (1.0, 3.0), (0.0, 4.0)]
    for _ in range(100):
        u = _random_smooth_field(grid, rng)
        norm_cache: dict[float, float] = {}

        def norm_of(f: Field, s: float) -> float:
            return float(sobolev_norm(f, s))

        for a, b in grades:
            ua, ub = norm_of(u, a), norm_of(u, b)
            for j in range(levels + 1):
                sju = smooth_S(j, u)
                sa, sb = norm_of(sju, a), norm_of(sju, b)
                if ua > 0:
                    worst_proj = max(worst_proj, sa / ua)
                if sa > 0:
                    worst_growth = max(worst_growth, sb / (2.0 ** (j * (b - a)) * 2.0**b * sa))
                tail = Field.from_coeffs(grid, u.coeffs - sju.coeffs)
                t_low, t_high = norm_of(tail, a), norm_of(tail, b)
                if t_high > 0:
                    worst_tail = max(worst_tail, t_low / (2.0 ** (-j * (b - a)) * t_high))
                rju = smooth_R(j, u)
                r_low, r_high = norm_of(rju, a), norm_of(rju, b)
                if r_high > 0:
                    worst_block = max(
                        worst_block, r_low / (2.0 ** (-j * (b - a)) * 2.0 ** (b - a) * r_high)
                    )
        total = norm_of(u, 2.0) ** 2
        parts = sum(norm_of(smooth_R(j, u), 2.0) ** 2 for j in range(levels + 1))
        if total > 0:
            worst_orth = max(worst_orth, abs(parts - total) / total)
    rows.append(("smoothing_projection", worst_proj, 1.0 + 1e-12))
    rows.append(("smoothing_growth", worst_growth, 1.0 + 1e-12))
    rows.append(("smoothing_tail", worst_tail, 1.0 + 1e-12))
    rows.append(("smoothing_block", worst_block, 1.0 + 1e-12))
    rows.append(("smoothing_orthogonality", worst_orth, 1e-12))

    try:
        NMParams().validate()
        rows.append(("nm_defaults_admissible", 0.0, 0.5))
    except ValueError:
        rows.append(("nm_defaults_admissible", 1.0, 0.5))
    try:
        NMParams(alpha=8.5).validate()
        rows.append(("nm_gate_strictness", 1.0, 0.5))
    except ValueError:
        rows.append(("nm_gate_strictness", 0.0, 0.5))

    times = uniform_times(cfg.T, min(cfg.n_t, 129))
    L = _operator(cfg, grid, times, rng)
    structure = check_hamiltonian_structure(L)
    rows.append(("hamiltonian_structure", max(structure.values()), 1e-8))

    data = full_reduce(L)
    symp = symplectic_stage_residuals(data, seed=cfg.seed)
    rows.append(("symplectic_stages", max(symp.values()), 1e-10))
    det_dev = float(data.diagnostics.get("det_S_deviation", 0.0))
    rows.append(("symmetrizer_det", det_dev, 1e-10))

    free = OperatorL.free(grid, times)
    h0 = np.fft.ifft(_synth_coeffs(grid, 1.0, 3, rng) * grid.n)
    g_T = np.fft.ifft(_synth_coeffs(grid, 1.0, 3, rng) * grid.n)
    h = solve_full(free, h0).data
    gsol = solve_adjoint_backward(free, g_T).data
    rows.append(("adjoint_identity", adjoint_defect(free, h, gsol), 1e-9))
    return rows


def cmd_check(cfg: RunConfig, out: Path) -> dict:
    rows = _check_rows(cfg)
    write_csv(
        out / "check.csv",
        ["invariant", "measured", "bound", "status"],
        [[name, value, bound, "pass" if value <= bound else "FAIL"] for name, value, bound in rows],
    )
    failures = [name for name, value, bound in rows if value > bound]
    if failures:
        raise AccuracyError(f"invariant failures: {', '.join(failures)}")
    return {name: float(value) for name, value, _ in rows}


# ── argument handling ─────────────────────────────────────────────────────────

_COMMANDS: dict[str, Callable[[RunConfig, Path], dict]] = {
    "simulate": cmd_simulate,
    "reduce": cmd_reduce,
    "observe": cmd_observe,
    "control-lin": cmd_control_lin,
    "control": cmd_control,
    "cauchy": cmd_cauchy,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlscontrol",
        description="Spectral control toolkit for quasi-linear Schrödinger flows on the circle.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="key=value config file")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="RNG seed (u64)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config is not None:
        cfg = load_config(args.config)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "override must be KEY=VALUE")
        key, raw = item.split("=", 1)
        cfg = set_key(cfg, key.strip(), raw.strip())
    if args.seed is not None:
        cfg = set_key(cfg, "seed", str(args.seed))
    if args.out is not None:
        cfg = set_key(cfg, "out_dir", args.out)
    return validate_config(cfg)


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out_dir) / args.command
    out.mkdir(parents=True, exist_ok=True)
    try:
        report = _COMMANDS[args.command](cfg, out)
    except AccuracyError as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 4
    except (ValueError, RuntimeError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 3
    write_manifest(
        out / "manifest.json",
        {
            "command": args.command,
            "config": cfg.as_dict(),
            "versions": {
                "nlscontrol": __version__,
                "numpy": np.__version__,
                "python": sys.version.split()[0],
            },
            "residuals": report,
        },
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
