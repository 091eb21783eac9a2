"""Scattering cross-section kernels: symbolic specs, evaluation, matrix sampling.

A kernel assigns a nonnegative rate K(y, z) to scattering from source point y
by displacement z.  Sampled on a grid, the matrix entry (i, j) is
K(y_j, x_i - y_j): the rate from source cell j into target cell i.  Specs are
immutable; sampling is pure and deterministic, and the scalar evaluator and
the matrix builder perform the same float operations so their results agree
bitwise.

Besides elementary variants (constant, radial-in-norm, explicit table), three
constructions with a designed steady state are provided:

* projection   -- K(y, x-y) = gbar(y) * gbar(x) * N(x), with gbar weighted so
                  that the gbar-moment of N is one;
* symmetric    -- K(y, x-y) = Ksym(x, y) / N(y) for a symmetric table Ksym;
* detailed_balance -- built from a symmetric table S as K(x, y) = S(x, y) * N(x),
                  which satisfies the micro-reversibility identity
                  K(y, x) N(x) = K(x, y) N(y).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import (
    DiagonalSingularity,
    GridMismatch,
    IndexOutOfRange,
    KernelValidationError,
    NegativeKernelValue,
    NonEvaluable,
)
from .padic_core import (
    Grid,
    LatticeFunction,
    _level_index_matrix,
    integrate,
    norm_levels,
)

PROJECTION_NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class ConstantKernel:
    """K(y, z) = value everywhere."""

    value: float


@dataclass(frozen=True)
class RadialKernel:
    """K(y, z) = profile(|z|_p), a function of the displacement norm only.

    The zero coset has norm 0 by convention; `diagonal` supplies the kernel
    value there.  Passing diagonal=None means "evaluate profile(0.0)", and a
    profile that fails or returns a non-finite value at 0 raises
    DiagonalSingularity.
    """

    profile: Callable[[float], float]
    diagonal: float | None = 0.0


@dataclass(frozen=True)
class ProjectionKernel:
    """Rank-one construction with designed steady state.

    weight is the paper-style acceptance profile gbar; steady is the target
    steady state N.  Requires integrate(weight * steady) = 1 within 1e-12.
    The loss profile implied by the construction is the weight itself.
    """

    weight: LatticeFunction
    steady: LatticeFunction


@dataclass(frozen=True)
class SymmetricKernel:
    """K(y, x-y) = table[x, A y] / N(y) with a symmetric nonnegative table."""

    table: np.ndarray
    steady: LatticeFunction

    def __post_init__(self):
        arr = np.array(self.table, dtype=float)
        arr.flags.writeable = False
        object.__setattr__(self, "table", arr)


@dataclass(frozen=True)
class DetailedBalanceKernel:
    """Micro-reversible kernel built from a symmetric table S and steady N > 0."""

    table: np.ndarray
    steady: LatticeFunction

    def __post_init__(self):
        arr = np.array(self.table, dtype=float)
        arr.flags.writeable = False
        object.__setattr__(self, "table", arr)


@dataclass(frozen=True)
class TableKernel:
    """Fully explicit sampled kernel: entries[i, j] = K(y_j, x_i - y_j)."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)


@dataclass(frozen=True)
class TimeDependentKernel:
    """Separable time dependence: K(t, y, z) = modulation(t) * base(y, z)."""

    base: "KernelSpec"
    modulation: Callable[[float], float]


KernelSpec = Union[
    ConstantKernel,
    RadialKernel,
    ProjectionKernel,
    SymmetricKernel,
    DetailedBalanceKernel,
    TableKernel,
    TimeDependentKernel,
]


@dataclass(frozen=True)
class KernelMatrix:
    """Sampled kernel on a grid at one time; entries are >= 0 and finite."""

    grid: Grid
    entries: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=float)
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)


def _check_square(table: np.ndarray, grid: Grid, what: str) -> None:
    N = grid.cell_count
    if table.shape != (N, N):
        raise NonEvaluable(f"{what} has shape {table.shape}, expected ({N}, {N})")


def _check_symmetric(table: np.ndarray, what: str) -> None:
    if not np.array_equal(table, table.T):
        raise KernelValidationError(f"{what} must be exactly symmetric")


def _check_positive_steady(steady: LatticeFunction, what: str) -> None:
    if np.any(steady.values <= 0.0):
        raise KernelValidationError(f"{what} requires a strictly positive steady state")


def validate_kernel(spec: KernelSpec, grid: Grid) -> None:
    """Check spec parameters against the grid; raises on violations."""
    if isinstance(spec, ConstantKernel):
        if spec.value < 0 or not np.isfinite(spec.value):
            raise NegativeKernelValue(f"constant kernel value {spec.value}")
    elif isinstance(spec, RadialKernel):
        _radial_level_values(spec, grid)
    elif isinstance(spec, ProjectionKernel):
        if spec.weight.grid != grid or spec.steady.grid != grid:
            raise GridMismatch("projection kernel fields live on a different grid")
        if np.any(spec.weight.values < 0):
            raise NegativeKernelValue("projection weight must be nonnegative")
        _check_positive_steady(spec.steady, "projection kernel")
        pairing = integrate(grid, LatticeFunction(grid, spec.weight.values * spec.steady.values))
        if abs(pairing - 1.0) > PROJECTION_NORMALIZATION_TOL:
            raise KernelValidationError(
                f"projection weight-steady pairing is {pairing!r}, must be 1 within "
                f"{PROJECTION_NORMALIZATION_TOL}"
            )
    elif isinstance(spec, SymmetricKernel):
        if spec.steady.grid != grid:
            raise GridMismatch("symmetric kernel steady state lives on a different grid")
        _check_square(spec.table, grid, "symmetric kernel table")
        _check_symmetric(spec.table, "symmetric kernel table")
        if np.any(spec.table < 0) or not np.all(np.isfinite(spec.table)):
            raise NegativeKernelValue("symmetric kernel table must be nonnegative")
        _check_positive_steady(spec.steady, "symmetric kernel")
    elif isinstance(spec, DetailedBalanceKernel):
        if spec.steady.grid != grid:
            raise GridMismatch("detailed-balance steady state lives on a different grid")
        _check_square(spec.table, grid, "detailed-balance table")
        _check_symmetric(spec.table, "detailed-balance table")
        if np.any(spec.table < 0) or not np.all(np.isfinite(spec.table)):
            raise NegativeKernelValue("detailed-balance table must be nonnegative")
        _check_positive_steady(spec.steady, "detailed-balance kernel")
    elif isinstance(spec, TableKernel):
        _check_square(spec.entries, grid, "kernel table")
        if not np.all(np.isfinite(spec.entries)):
            raise NegativeKernelValue("kernel table entries must be finite")
        if np.any(spec.entries < 0):
            raise NegativeKernelValue("kernel table entries must be nonnegative")
    elif isinstance(spec, TimeDependentKernel):
        if isinstance(spec.base, TimeDependentKernel):
            raise KernelValidationError("time-dependent kernels cannot be nested")
        validate_kernel(spec.base, grid)
    else:
        raise NonEvaluable(f"unknown kernel spec {type(spec).__name__}")


def _modulation_value(spec: TimeDependentKernel, t: float) -> float:
    g = float(spec.modulation(float(t)))
    if not np.isfinite(g) or g < 0.0:
        raise NegativeKernelValue(f"modulation({t}) = {g} is not a nonnegative real")
    return g


def _radial_level_values(spec: RadialKernel, grid: Grid) -> np.ndarray:
    """profile evaluated once per distinct norm level (index 0 is the zero coset)."""
    levels = norm_levels(grid)
    vals = np.empty_like(levels)
    for idx, r in enumerate(levels):
        if idx == 0:
            if spec.diagonal is not None:
                vals[0] = float(spec.diagonal)
            else:
                try:
                    vals[0] = float(spec.profile(0.0))
                except Exception as exc:
                    raise DiagonalSingularity(
                        "radial profile undefined at 0 and no diagonal policy given"
                    ) from exc
                if not np.isfinite(vals[0]):
                    raise DiagonalSingularity(
                        "radial profile non-finite at 0 and no diagonal policy given"
                    )
        else:
            vals[idx] = float(spec.profile(float(r)))
    if not np.all(np.isfinite(vals)) or np.any(vals < 0):
        raise NegativeKernelValue("radial profile produced a negative or non-finite value")
    return vals


def _pair_matrix(spec: KernelSpec, grid: Grid, t: float) -> np.ndarray:
    """Two-point sample T[i, j] = K(y_j, x_i - y_j) at time t."""
    N = grid.cell_count
    if isinstance(spec, ConstantKernel):
        return np.full((N, N), float(spec.value))
    if isinstance(spec, RadialKernel):
        vals = _radial_level_values(spec, grid)
        return vals[_level_index_matrix(grid)]
    if isinstance(spec, ProjectionKernel):
        target_col = spec.weight.values * spec.steady.values
        return target_col[:, None] * spec.weight.values[None, :]
    if isinstance(spec, SymmetricKernel):
        return spec.table / spec.steady.values[None, :]
    if isinstance(spec, DetailedBalanceKernel):
        return spec.table * spec.steady.values[:, None]
    if isinstance(spec, TableKernel):
        return np.array(spec.entries, dtype=float)
    if isinstance(spec, TimeDependentKernel):
        return _modulation_value(spec, t) * _pair_matrix(spec.base, grid, 0.0)
    raise NonEvaluable(f"unknown kernel spec {type(spec).__name__}")


def eval_kernel(spec: KernelSpec, grid: Grid, i: int, j: int, t: float = 0.0) -> float:
    """K(y_j, x_i - y_j) at time t; bitwise identical to the sampled matrix entry."""
    N = grid.cell_count
    if not 0 <= i < N or not 0 <= j < N:
        raise IndexOutOfRange(f"cell indices ({i}, {j}) not in [0, {N})")
    validate_kernel(spec, grid)
    return _eval_unchecked(spec, grid, i, j, t)


def _eval_unchecked(spec: KernelSpec, grid: Grid, i: int, j: int, t: float) -> float:
    if isinstance(spec, ConstantKernel):
        return float(spec.value)
    if isinstance(spec, RadialKernel):
        vals = _radial_level_values(spec, grid)
        return float(vals[_level_index_matrix(grid)[i, j]])
    if isinstance(spec, ProjectionKernel):
        return float((spec.weight.values[i] * spec.steady.values[i]) * spec.weight.values[j])
    if isinstance(spec, SymmetricKernel):
        return float(spec.table[i, j] / spec.steady.values[j])
    if isinstance(spec, DetailedBalanceKernel):
        return float(spec.table[i, j] * spec.steady.values[i])
    if isinstance(spec, TableKernel):
        return float(spec.entries[i, j])
    if isinstance(spec, TimeDependentKernel):
        return float(_modulation_value(spec, t) * _eval_unchecked(spec.base, grid, i, j, 0.0))
    raise NonEvaluable(f"unknown kernel spec {type(spec).__name__}")


def build_kernel_matrix(spec: KernelSpec, grid: Grid, t: float = 0.0) -> KernelMatrix:
    """Sample the kernel into a full matrix at time t."""
    validate_kernel(spec, grid)
    entries = _pair_matrix(spec, grid, t)
    if not np.all(np.isfinite(entries)):
        raise NegativeKernelValue("sampled kernel has non-finite entries")
    if np.any(entries < 0):
        raise NegativeKernelValue("sampled kernel has negative entries")
    return KernelMatrix(grid=grid, entries=entries, t=float(t))


def detailed_balance_residual(spec: DetailedBalanceKernel, grid: Grid) -> float:
    """max |K(y,x) N(x) - K(x,y) N(y)| over all cell pairs.

    Both sides are evaluated with the symmetric mass product N(x) N(y) formed
    first, the grouping under which the construction's algebraic symmetry
    survives floating point exactly; a bitwise-symmetric input table therefore
    yields exactly 0.0.
    """
    validate_kernel(spec, grid)
    v = spec.steady.values
    pair_mass = v[:, None] * v[None, :]
    lhs = spec.table.T * pair_mass.T
    rhs = spec.table * pair_mass
    return float(np.max(np.abs(lhs - rhs)))


def is_radial(spec: KernelSpec) -> bool:
    """True for kernels that depend on the displacement norm only."""
    if isinstance(spec, (RadialKernel, ConstantKernel)):
        return True
    if isinstance(spec, TimeDependentKernel):
        return is_radial(spec.base)
    return False


def load_kernel_table(path, grid: Grid) -> TableKernel:
    """Read a cell_count x cell_count nonnegative CSV table.

    Row i, column j holds K(y_j, x_i - y_j).  Lines starting with '#' are
    ignored.  Negative entries raise NegativeKernelValue.
    """
    entries = np.loadtxt(path, delimiter=",", comments="#", dtype=float, ndmin=2)
    _check_square(entries, grid, f"kernel table from {path}")
    spec = TableKernel(entries=entries)
    validate_kernel(spec, grid)
    return spec
