"""Spectral tools for internal controllability of quasi-linear Schrödinger
flows on the circle.

Layers, bottom to top:

- `spectral`: grids, fields, Sobolev norms, products, dyadic smoothing.
- `hamiltonian`: densities G, the nonlinearity, linearized coefficients.
- `reduction`: conjugation of the linearized operator to constant coefficients.
- `solvers`: spectral-in-space time integration for the exact model and the
  reduced one, plus the adjoint.
- `hum`: cutoffs, observability, and the linear control solve.
- `nashmoser`: the iterative nonlinear control and Cauchy solvers.
- `snapshots`, `config`, `cli`: persistence and the command-line front end.
"""

from .spectral import (
    BoldField,
    Field,
    Grid,
    Pair,
    SobolevIndex,
    Traj,
    bold_l2,
    c_inverse,
    c_transform,
    l2,
    pair_l2,
    smooth_R,
    smooth_S,
    sobolev_norm,
    symplectic_w,
)

__all__ = [
    "BoldField",
    "Field",
    "Grid",
    "Pair",
    "SobolevIndex",
    "Traj",
    "bold_l2",
    "c_inverse",
    "c_transform",
    "l2",
    "pair_l2",
    "smooth_R",
    "smooth_S",
    "sobolev_norm",
    "symplectic_w",
]

__version__ = "0.1.0"
