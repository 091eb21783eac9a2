"""Discrete gain-loss generator of the scattering balance equation.

The semi-discrete system is dn/dt = A n - k * n, with gain matrix
A[i, j] = K(y_j, x_i - y_j) * mu (mu the cell measure) and loss vector k.

In column_sum mode the loss is defined as the column sums of the gain,
computed through the identical vector-matrix product used by apply_dual.
That makes two statements bitwise exact rather than approximate: every
column of the generator sums to zero as summed, and the constant function
solves the dual balance equation with residual exactly 0.0.  The analytic
mode accepts an externally supplied loss and offers no conservation
guarantee.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    GridMismatch,
    MissingAnalyticK,
    NegativeKernelValue,
    NegativeLoss,
    NonRadialKernel,
)
from .kernel import (
    ConstantKernel,
    KernelMatrix,
    KernelSpec,
    RadialKernel,
    TimeDependentKernel,
    _pair_matrix,
    _radial_level_values,
    build_kernel_matrix,
    validate_kernel,
)
from .padic_core import (
    Grid,
    LatticeFunction,
    _level_index_matrix,
    _residue_table,
)

COLUMN_SUM = "column_sum"
ANALYTIC = "analytic"


@dataclass(frozen=True)
class RescaleLevel:
    """Hyperbolic scaling level l >= 0; the scaling scalar has p-adic norm p**-l."""

    l: int

    def __post_init__(self):
        if self.l < 0:
            raise ValueError("rescale level must be >= 0")

    def abs_eps(self, p: int) -> float:
        return float(p) ** (-self.l)


def _as_level(level: "int | RescaleLevel") -> RescaleLevel:
    return level if isinstance(level, RescaleLevel) else RescaleLevel(int(level))


@dataclass(frozen=True)
class Generator:
    """Assembled gain matrix and loss vector on one grid; immutable."""

    grid: Grid
    gain: np.ndarray
    loss: np.ndarray
    k_mode: str
    rescale_level: int = 0

    def __post_init__(self):
        gain = np.asarray(self.gain, dtype=float)
        loss = np.asarray(self.loss, dtype=float)
        gain.flags.writeable = False
        loss.flags.writeable = False
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "loss", loss)

    @property
    def k_max(self) -> float:
        return float(self.loss.max(initial=0.0))

    def apply(self, f: LatticeFunction) -> LatticeFunction:
        return apply(self, f)

    def apply_dual(self, phi: LatticeFunction) -> LatticeFunction:
        return apply_dual(self, phi)

    def dense_matrix(self) -> np.ndarray:
        """G = A - diag(k), for spectral work and exponential oracles."""
        return self.gain - np.diag(self.loss)


@dataclass(frozen=True)
class ModulatedGenerator:
    """Separable time dependence: the generator at time t is rate(t) * base."""

    base: Generator
    rate: Callable[[float], float]

    @property
    def grid(self) -> Grid:
        return self.base.grid

    def rate_at(self, t: float) -> float:
        g = float(self.rate(float(t)))
        if not np.isfinite(g) or g < 0.0:
            raise NegativeKernelValue(f"modulation({t}) = {g} is not a nonnegative real")
        return g


def _column_sums(gain: np.ndarray) -> np.ndarray:
    # identical float operation to apply_dual's phi @ gain with phi == 1
    return np.ones(gain.shape[0]) @ gain


def assemble(
    kmat: KernelMatrix,
    grid: Grid,
    k_mode: str = COLUMN_SUM,
    analytic_k: LatticeFunction | None = None,
) -> Generator:
    """Build the generator from a sampled kernel matrix.

    column_sum mode defines the loss from the sampled gain, restoring exact
    discrete mass conservation on the truncated domain; analytic mode uses
    the supplied loss profile verbatim.
    """
    if kmat.grid != grid:
        raise GridMismatch("kernel matrix lives on a different grid")
    gain = grid.cell_measure * kmat.entries
    if k_mode == COLUMN_SUM:
        if analytic_k is not None:
            raise ValueError("analytic_k is only accepted in analytic mode")
        loss = _column_sums(gain)
    elif k_mode == ANALYTIC:
        if analytic_k is None:
            raise MissingAnalyticK("analytic mode requires a loss profile")
        if analytic_k.grid != grid:
            raise GridMismatch("analytic loss lives on a different grid")
        if np.any(analytic_k.values < 0):
            raise NegativeLoss("analytic loss must be nonnegative")
        loss = analytic_k.values.copy()
    else:
        raise ValueError(f"unknown k_mode {k_mode!r}")
    return Generator(grid=grid, gain=gain, loss=loss, k_mode=k_mode)


def assemble_spec(
    spec: KernelSpec,
    grid: Grid,
    k_mode: str = COLUMN_SUM,
    analytic_k: LatticeFunction | None = None,
) -> "Generator | ModulatedGenerator":
    """Assemble directly from a kernel spec.

    Time-dependent specs return a ModulatedGenerator wrapping the generator
    of the base kernel, so integrators can rescale it per stage time.
    """
    if isinstance(spec, TimeDependentKernel):
        validate_kernel(spec, grid)
        base = assemble(build_kernel_matrix(spec.base, grid), grid, k_mode, analytic_k)
        return ModulatedGenerator(base=base, rate=spec.modulation)
    return assemble(build_kernel_matrix(spec, grid), grid, k_mode, analytic_k)


def apply(gen: Generator, f: LatticeFunction) -> LatticeFunction:
    """Right-hand side of the balance equation: (A f) - k * f."""
    if f.grid != gen.grid:
        raise GridMismatch("function lives on a different grid")
    return LatticeFunction(gen.grid, gen.gain @ f.values - gen.loss * f.values)


def apply_dual(gen: Generator, phi: LatticeFunction) -> LatticeFunction:
    """Transpose action (A^T phi) - k * phi; zero at a steady dual state."""
    if phi.grid != gen.grid:
        raise GridMismatch("function lives on a different grid")
    return LatticeFunction(gen.grid, phi.values @ gen.gain - gen.loss * phi.values)


def l1_lipschitz_bound(gen: Generator) -> float:
    """Lipschitz constant of the right-hand side on integrable data: 2 max k."""
    return 2.0 * gen.k_max


def rescale(spec: KernelSpec, grid: Grid, level: "int | RescaleLevel") -> Generator:
    """Generator of the hyperbolically rescaled system for a radial kernel.

    With scaling scalar of p-adic norm p**-l, gain entries become
    mu * p**(l*(n+1)) * profile(norm * p**l); the loss is the column sums, so
    mass conservation holds at every level.  Only kernels depending on the
    displacement norm alone are accepted: for those, dividing the displacement
    by the scaling scalar just multiplies the norm by p**l.
    """
    lvl = _as_level(level)
    validate_kernel(spec, grid)
    if isinstance(spec, ConstantKernel):
        scaled_vals = np.full(len(np.atleast_1d(_scaled_levels(grid, lvl.l))), float(spec.value))
    elif isinstance(spec, RadialKernel):
        base_vals = _radial_level_values(spec, grid)  # validates the diagonal policy
        scaled = _scaled_levels(grid, lvl.l)
        scaled_vals = np.empty_like(scaled)
        scaled_vals[0] = base_vals[0]
        for idx in range(1, len(scaled)):
            scaled_vals[idx] = float(spec.profile(float(scaled[idx])))
        if not np.all(np.isfinite(scaled_vals)) or np.any(scaled_vals < 0):
            raise NegativeKernelValue("radial profile produced a negative or non-finite value")
    else:
        raise NonRadialKernel(
            f"rescaling requires a radial kernel, got {type(spec).__name__}"
        )
    prefactor = grid.cell_measure * float(grid.p) ** (lvl.l * (grid.n + 1))
    gain = prefactor * scaled_vals[_level_index_matrix(grid)]
    loss = _column_sums(gain)
    return Generator(
        grid=grid, gain=gain, loss=loss, k_mode=COLUMN_SUM, rescale_level=lvl.l
    )


def _scaled_levels(grid: Grid, l: int) -> np.ndarray:
    """Distinct norm values multiplied by p**l, computed in exponent arithmetic."""
    exps = np.arange(1 - grid.m, grid.M + 1, dtype=float) + l
    if grid.M + grid.m == 0:
        return np.array([0.0])
    return np.concatenate(([0.0], float(grid.p) ** exps))


def _flat_index(grid: Grid, residues: np.ndarray) -> np.ndarray:
    """Canonical flat index of (N, n) residue rows."""
    B = grid.cells_per_axis
    weights = B ** np.arange(grid.n - 1, -1, -1, dtype=np.int64)
    return residues @ weights


def regularity_constant(spec: KernelSpec, grid: Grid, level: "int | RescaleLevel") -> float:
    """Translation-regularity estimate of the kernel at scaling level l.

    Returns the maximum over cells x of
    p**l * sum_z [K(x - eps*z, z) - K(x, z)] * mu,
    where eps*z is realized by scaling displacement residues by p**l.
    Translation-invariant (radial) kernels give exactly 0.
    """
    lvl = _as_level(level)
    validate_kernel(spec, grid)
    pair = _pair_matrix(spec, grid, 0.0)
    B = grid.cells_per_axis
    res = _residue_table(grid)
    scale = grid.p**lvl.l
    N = grid.cell_count
    all_idx = np.arange(N)
    acc = np.zeros(N)
    for z in range(N):
        disp = res[z]
        shifted_src = _flat_index(grid, (res - (disp * scale) % B) % B)
        shifted_tgt = _flat_index(grid, (res[shifted_src] + disp) % B)
        plain_tgt = _flat_index(grid, (res + disp) % B)
        acc += pair[shifted_tgt, shifted_src] - pair[plain_tgt, all_idx]
    return float(np.max(acc) * grid.cell_measure * float(grid.p) ** lvl.l)
