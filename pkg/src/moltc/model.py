"""Bundle of everything one simulation needs: grid, curves, operators, initial state."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .basis import (BasisLayout, SpatialGrid, StateVector, build_basis, build_grid,
                    initial_state, vibrational_ground)
from .errors import ConfigurationError
from .hamiltonian import HamiltonianOperator, ModelParams, assemble
from .jumps import JumpOperatorSet, build_jumps
from .molecular import GriddedCurves, MolecularCurves, interpolate_to_grid, surrogate_curves

DEFAULT_GRID = (0.90, 2.12, 96)


@dataclass(frozen=True, eq=False)
class ModelBundle:
    params: ModelParams
    basis: BasisLayout
    grid: SpatialGrid
    curves: GriddedCurves
    hamiltonian: HamiltonianOperator
    jumps: JumpOperatorSet
    psi0: StateVector
    E0: float
    chi0: np.ndarray

    def with_initial_state(self, psi: StateVector) -> ModelBundle:
        if psi.basis != self.basis or psi.grid != self.grid:
            raise ConfigurationError("initial state layout does not match the model")
        return replace(self, psi0=psi.normalized())


def build_model(params: ModelParams, curves: MolecularCurves | GriddedCurves | None = None,
                grid: SpatialGrid | None = None, fill: str = "wall") -> ModelBundle:
    """Assemble a model; surrogate curves and the 0.90-2.12 A, 96-point grid by default."""
    if isinstance(curves, GriddedCurves):
        if grid is not None and grid != curves.grid:
            raise ConfigurationError("gridded curves live on a different grid")
        gridded = curves
        grid = curves.grid
    else:
        grid = grid or build_grid(*DEFAULT_GRID)
        gridded = interpolate_to_grid(curves or surrogate_curves(), grid, fill=fill)
    basis = build_basis(params.n_emitters)
    h = assemble(basis, gridded, params)
    jumps = build_jumps(params.n_emitters, params.gamma_au, params.kappa_au)
    e0, chi0 = vibrational_ground(grid, gridded.V_sigma, params.reduced_mass)
    psi0 = initial_state(basis, grid, chi0)
    return ModelBundle(params, basis, grid, gridded, h, jumps, psi0, e0, chi0)
