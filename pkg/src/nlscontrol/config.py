"""Flat key=value run configuration with dotted namespaces.

One line per setting, `#` comments, blank lines ignored:

    grid.n = 64
    density.name = focusing_gradient
    hum.cg_tol = 1e-10

Every gate of the owning modules is re-validated at parse time, so a config
that parses is a config that runs: the grid constructor, the cutoff arc, the
density lookup, and the iteration-parameter inequalities all fire here.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .hamiltonian import density_by_name
from .hum import make_cutoff
from .nashmoser import NMParams
from .spectral import Grid, uniform_times


class ConfigError(ValueError):
    """Configuration problem; `key` names the offending setting."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    """Everything a subcommand run needs, gates already checked."""

    n: int = 64
    n_t: int = 513
    T: float = 1.0
    density: str = "zero"
    kappa0: float = 0.05
    omega_a: float = 0.0
    omega_b: float = float(np.pi)
    plateau_fraction: float = 0.5
    amplitude: float = 1e-3
    modes: int = 1
    lin_modes: int = 5
    norms: tuple[float, ...] = (0.0, 4.0)
    mu: float = 1.0
    trials: int = 200
    cg_tol: float = 1e-10
    cg_max_iters: int = 500
    lin_endpoint_tol: float = 1e-6
    endpoint_tol: float = 1e-6
    cross_tol: float = 1e-5
    nm_a0: float = 1.0
    nm_mu_loss: float = 2.0
    nm_a1: float = 4.0
    nm_alpha: float = 9.0
    nm_beta_reg: float = 9.0
    nm_a2: float = 15.0
    nm_delta: float = 0.1
    nm_max_iter: int = 20
    nm_tol: float = 1e-8
    seed: int = 0
    out_dir: str = "runs"

    def nm_params(self) -> NMParams:
        return NMParams(
            a0=self.nm_a0,
            mu_loss=self.nm_mu_loss,
            a1=self.nm_a1,
            alpha=self.nm_alpha,
            beta_reg=self.nm_beta_reg,
            a2=self.nm_a2,
            delta=self.nm_delta,
            max_iter=self.nm_max_iter,
            tol=self.nm_tol,
        )

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(",") if p.strip())


# key → (RunConfig attribute, parser)
_KEYS: dict[str, tuple[str, Callable[[str], object]]] = {
    "grid.n": ("n", int),
    "time.n_t": ("n_t", int),
    "time.horizon": ("T", float),
    "density.name": ("density", str.strip),
    "density.kappa0": ("kappa0", float),
    "omega.a": ("omega_a", float),
    "omega.b": ("omega_b", float),
    "omega.plateau_fraction": ("plateau_fraction", float),
    "data.amplitude": ("amplitude", float),
    "data.modes": ("modes", int),
    "lin.modes": ("lin_modes", int),
    "simulate.norms": ("norms", _parse_floats),
    "observe.mu": ("mu", float),
    "observe.trials": ("trials", int),
    "hum.cg_tol": ("cg_tol", float),
    "hum.cg_max_iters": ("cg_max_iters", int),
    "hum.endpoint_tol": ("lin_endpoint_tol", float),
    "control.endpoint_tol": ("endpoint_tol", float),
    "cauchy.cross_tol": ("cross_tol", float),
    "nm.a0": ("nm_a0", float),
    "nm.mu_loss": ("nm_mu_loss", float),
    "nm.a1": ("nm_a1", float),
    "nm.alpha": ("nm_alpha", float),
    "nm.beta_reg": ("nm_beta_reg", float),
    "nm.a2": ("nm_a2", float),
    "nm.delta": ("nm_delta", float),
    "nm.max_iter": ("nm_max_iter", int),
    "nm.tol": ("nm_tol", float),
    "seed": ("seed", int),
    "out_dir": ("out_dir", str.strip),
}


def set_key(cfg: RunConfig, key: str, raw: str) -> RunConfig:
    """One override, `key=value` style, with the module gates deferred to
    validate_config — call that after the last override."""
    try:
        attr, parse = _KEYS[key]
    except KeyError:
        raise ConfigError(key, f"unknown key; valid keys: {', '.join(sorted(_KEYS))}") from None
    try:
        value = parse(raw)
    except Exception as exc:
        raise ConfigError(key, f"cannot parse {raw!r}: {exc}") from None
    return replace(cfg, **{attr: value})


def parse_config(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    """Parse key=value lines over `base` and validate the result."""
    cfg = base if base is not None else RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        cfg = set_key(cfg, key, raw)
    return validate_config(cfg)


def load_config(path: Union[str, Path], base: Optional[RunConfig] = None) -> RunConfig:
    return parse_config(Path(path).read_text(), base)


def validate_config(cfg: RunConfig) -> RunConfig:
    """Fire every owning-module gate now rather than mid-run."""
    try:
        grid = Grid(cfg.n)
    except Exception as exc:
        raise ConfigError("grid.n", str(exc)) from None
    try:
        uniform_times(cfg.T, cfg.n_t)
    except Exception as exc:
        raise ConfigError("time.n_t", str(exc)) from None
    try:
        density_by_name(cfg.density, kappa0=cfg.kappa0)
    except Exception as exc:
        raise ConfigError("density.name", str(exc)) from None
    try:
        make_cutoff(grid, cfg.omega_a, cfg.omega_b, cfg.plateau_fraction)
    except Exception as exc:
        raise ConfigError("omega.a", str(exc)) from None
    try:
        cfg.nm_params().validate()
    except Exception as exc:
        raise ConfigError("nm.alpha", str(exc)) from None
    if cfg.amplitude < 0:
        raise ConfigError("data.amplitude", "must be nonnegative")
    if cfg.modes < 0 or cfg.lin_modes < 1:
        raise ConfigError("data.modes", "mode counts must be positive")
    if cfg.trials < 1:
        raise ConfigError("observe.trials", "needs at least one trial")
    if not (cfg.cg_tol > 0 and cfg.cross_tol > 0 and cfg.endpoint_tol > 0 and cfg.lin_endpoint_tol > 0):
        raise ConfigError("hum.cg_tol", "tolerances must be positive")
    if cfg.seed < 0 or cfg.seed > 2**64 - 1:
        raise ConfigError("seed", "must fit in u64")
    return cfg
