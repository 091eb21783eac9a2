"""Truncated p-adic lattice: ball enumeration, ultrametric norms, Haar quadrature.

The computational domain is the ball of radius p**M in each of n coordinates,
partitioned into cells (balls) of radius p**-m.  Per axis there are p**(M+m)
cells; a cell is identified by an integer residue r in [0, p**(M+m)) whose
representative coordinate value is r * p**-M.  Arithmetic on residues is
modular, so subtraction of representatives is exact at resolution p**-m.

Haar measure is normalized so the unit ball of one coordinate has measure 1,
giving each n-dimensional cell measure p**(-m*n).

Cells are enumerated lexicographically over the per-axis residues
(last axis fastest), which fixes a canonical flat index for vectors and
matrices throughout the package.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from .errors import GridMismatch, GridTooLarge, IndexOutOfRange, NonPrimeP

DEFAULT_MAX_CELLS = 10**6
MAX_CELLS_ENV = "USCATTER_MAX_CELLS"


def _is_prime(p: int) -> bool:
    if p < 2:
        return False
    if p % 2 == 0:
        return p == 2
    d = 3
    while d * d <= p:
        if p % d == 0:
            return False
        d += 2
    return True


@dataclass(frozen=True)
class Grid:
    """Truncated ultrametric lattice over (Q_p)^n.

    Attributes
    ----------
    p:
        Prime base.
    n:
        Number of coordinates.
    M:
        Outer level; the domain is the ball of radius p**M per coordinate.
    m:
        Inner level; cells are balls of radius p**-m.
    """

    p: int
    n: int
    M: int
    m: int

    @property
    def cells_per_axis(self) -> int:
        return self.p ** (self.M + self.m)

    @property
    def cell_count(self) -> int:
        return self.cells_per_axis**self.n

    @property
    def cell_measure(self) -> float:
        return float(self.p) ** (-self.m * self.n)

    @property
    def total_measure(self) -> float:
        return float(self.p) ** (self.M * self.n)


@dataclass(frozen=True)
class CellCoords:
    """Per-axis residues identifying one cell; values live in [0, p**(M+m))."""

    residues: tuple[int, ...]


class LatticeFunction:
    """A locally constant function: one real value per cell.

    Instances are immutable; the backing array is marked read-only so a
    lattice function can be shared freely across computations.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values: Iterable[float]):
        arr = np.array(values, dtype=float)
        if arr.shape != (grid.cell_count,):
            raise GridMismatch(
                f"expected {grid.cell_count} values, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("lattice function values must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("LatticeFunction is immutable")

    def __repr__(self) -> str:
        return f"LatticeFunction(grid={self.grid!r}, values={self.values!r})"


def lattice_function(grid: Grid, values: Iterable[float]) -> LatticeFunction:
    """Wrap per-cell values as a LatticeFunction on grid (validates shape)."""
    return LatticeFunction(grid, values)


def constant_function(grid: Grid, value: float) -> LatticeFunction:
    """The function equal to value on every cell."""
    return LatticeFunction(grid, np.full(grid.cell_count, float(value)))


def _max_cells(limit: int | None) -> int:
    if limit is not None:
        return int(limit)
    env = os.environ.get(MAX_CELLS_ENV)
    if env is not None:
        return int(env)
    return DEFAULT_MAX_CELLS


def build_grid(p: int, n: int, M: int, m: int, max_cells: int | None = None) -> Grid:
    """Construct a truncated lattice, validating primality and size.

    The cell-count limit defaults to 10**6 and can be overridden either by
    the max_cells argument or the USCATTER_MAX_CELLS environment variable.
    """
    p, n, M, m = int(p), int(n), int(M), int(m)
    if not _is_prime(p):
        raise NonPrimeP(f"p = {p} is not prime")
    if n < 1:
        raise ValueError("dimension n must be >= 1")
    if M < 0 or m < 0:
        raise ValueError("levels M and m must be >= 0")
    count = (p ** (M + m)) ** n
    limit = _max_cells(max_cells)
    if count > limit:
        raise GridTooLarge(f"cell_count {count} exceeds limit {limit}")
    return Grid(p=p, n=n, M=M, m=m)


@lru_cache(maxsize=64)
def _residue_table(grid: Grid) -> np.ndarray:
    """(cell_count, n) int64 array of per-axis residues, canonical order."""
    B = grid.cells_per_axis
    idx = np.arange(grid.cell_count, dtype=np.int64)
    cols = []
    for axis in range(grid.n - 1, -1, -1):
        cols.append(idx % B)
        idx = idx // B
    table = np.stack(cols[::-1], axis=1)
    table.flags.writeable = False
    return table


@lru_cache(maxsize=64)
def _axis_valuations(grid: Grid) -> np.ndarray:
    """p-adic valuation of each residue in [0, B); residue 0 gets M + m."""
    B = grid.cells_per_axis
    v = np.zeros(B, dtype=np.int64)
    r = np.arange(B, dtype=np.int64)
    mask = r > 0
    work = r.copy()
    while True:
        div = mask & (work % grid.p == 0)
        if not div.any():
            break
        v[div] += 1
        work[div] //= grid.p
        mask = div
    v[0] = grid.M + grid.m
    v.flags.writeable = False
    return v


@lru_cache(maxsize=64)
def _axis_norms(grid: Grid) -> np.ndarray:
    """p-adic norm of the representative of each axis residue; 0 for residue 0."""
    v = _axis_valuations(grid)
    norms = float(grid.p) ** (grid.M - v.astype(float))
    norms[0] = 0.0
    norms.flags.writeable = False
    return norms


def norm_levels(grid: Grid) -> np.ndarray:
    """Ascending distinct values cell_norm can take, starting with 0."""
    exps = np.arange(1 - grid.m, grid.M + 1, dtype=float)
    levels = np.concatenate(([0.0], float(grid.p) ** exps))
    if grid.M + grid.m == 0:
        levels = np.array([0.0])
    return levels


@lru_cache(maxsize=64)
def _level_index_matrix(grid: Grid) -> np.ndarray:
    """(N, N) int matrix: index into norm_levels of cell_norm(diff(i, j))."""
    B = grid.cells_per_axis
    v = _axis_valuations(grid)
    res = _residue_table(grid)
    # per-axis level index of a residue: 0 for residue 0, else (M + m) - v
    axis_level = (grid.M + grid.m) - v
    axis_level[0] = 0
    out = np.zeros((grid.cell_count, grid.cell_count), dtype=np.int64)
    for a in range(grid.n):
        d = (res[:, a][:, None] - res[:, a][None, :]) % B
        np.maximum(out, axis_level[d], out=out)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=64)
def norm_matrix(grid: Grid) -> np.ndarray:
    """(N, N) matrix of cell_norm(cell_diff(i, j)); shared read-only cache."""
    levels = norm_levels(grid)
    mat = levels[_level_index_matrix(grid)]
    mat.flags.writeable = False
    return mat


def coords_of(grid: Grid, i: int) -> CellCoords:
    """Per-axis residues of cell i in the canonical enumeration."""
    if not 0 <= i < grid.cell_count:
        raise IndexOutOfRange(f"cell index {i} not in [0, {grid.cell_count})")
    return CellCoords(tuple(int(r) for r in _residue_table(grid)[i]))


def cell_index(grid: Grid, coords: CellCoords) -> int:
    """Flat canonical index of the cell with the given residues."""
    if len(coords.residues) != grid.n:
        raise IndexOutOfRange("coordinate arity does not match grid dimension")
    B = grid.cells_per_axis
    idx = 0
    for r in coords.residues:
        if not 0 <= r < B:
            raise IndexOutOfRange(f"residue {r} not in [0, {B})")
        idx = idx * B + int(r)
    return idx


def representatives(grid: Grid) -> np.ndarray:
    """(cell_count, n) array of representative coordinate values r * p**-M."""
    return _residue_table(grid) * float(grid.p) ** (-grid.M)


def cell_diff(grid: Grid, i: int, j: int) -> CellCoords:
    """Exact p-adic difference of cell representatives, as residues mod p**(M+m)."""
    if not 0 <= i < grid.cell_count or not 0 <= j < grid.cell_count:
        raise IndexOutOfRange(
            f"cell indices ({i}, {j}) not in [0, {grid.cell_count})"
        )
    B = grid.cells_per_axis
    res = _residue_table(grid)
    diff = (res[i] - res[j]) % B
    return CellCoords(tuple(int(r) for r in diff))


def cell_norm(grid: Grid, c: CellCoords) -> float:
    """p-adic max-norm of the representative of c; the zero coset gives 0."""
    if len(c.residues) != grid.n:
        raise IndexOutOfRange("coordinate arity does not match grid dimension")
    norms = _axis_norms(grid)
    best = 0.0
    for r in c.residues:
        if not 0 <= r < grid.cells_per_axis:
            raise IndexOutOfRange(f"residue {r} out of range")
        best = max(best, float(norms[r]))
    return best


def integrate(grid: Grid, f: LatticeFunction) -> float:
    """Haar integral of a locally constant function: sum of values times cell measure."""
    if f.grid != grid:
        raise GridMismatch("function lives on a different grid")
    return float(f.values.sum() * grid.cell_measure)


def l1_norm(grid: Grid, f: LatticeFunction) -> float:
    """Integral of |f|."""
    if f.grid != grid:
        raise GridMismatch("function lives on a different grid")
    return float(np.abs(f.values).sum() * grid.cell_measure)


def l2_norm(grid: Grid, f: LatticeFunction) -> float:
    """Haar-weighted Euclidean norm (integral of f**2) ** 0.5."""
    if f.grid != grid:
        raise GridMismatch("function lives on a different grid")
    return float(np.sqrt(np.square(f.values).sum() * grid.cell_measure))
