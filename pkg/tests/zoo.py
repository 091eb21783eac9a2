"""Shared builders for kernels and grids used across the test suite."""
import numpy as np

import uscatter as us

SMALL_GRIDS = [
    (2, 1, 1, 1),
    (2, 1, 2, 2),
    (3, 1, 1, 1),
    (2, 2, 1, 1),
    (5, 1, 1, 1),
    (2, 1, 2, 3),
    (3, 1, 1, 2),
    (2, 1, 3, 3),
]


def random_table(grid, rng, low=0.1, high=1.1):
    N = grid.cell_count
    return us.TableKernel(entries=rng.uniform(low, high, (N, N)))


def random_symmetric(grid, rng, low=0.1, high=1.1):
    N = grid.cell_count
    raw = rng.uniform(low, high, (N, N))
    return np.triu(raw) + np.triu(raw, 1).T


def random_steady(grid, rng):
    raw = rng.uniform(0.5, 1.5, grid.cell_count)
    return us.lattice_function(grid, raw / (raw.sum() * grid.cell_measure))


def normalized_weight(grid, rng, steady):
    raw = rng.uniform(0.5, 1.5, grid.cell_count)
    pairing = (raw * steady.values).sum() * grid.cell_measure
    return us.lattice_function(grid, raw / pairing)


def builtin_kernels(grid, rng):
    """One instance of every builtin variant, all strictly positive.

    Jump indicators of radius below p**M are reducible on the truncation
    (balls are clopen), so the indicator uses the full radius.
    """
    steady = random_steady(grid, rng)
    weight = normalized_weight(grid, rng, steady)
    full_radius = float(grid.p**grid.M)
    return [
        us.ConstantKernel(1.0),
        us.RadialKernel(profile=lambda r: 1.0 / (1.0 + r), diagonal=1.0),
        us.RadialKernel(profile=lambda r, _R=full_radius: float(r <= _R), diagonal=0.5),
        us.ProjectionKernel(weight=weight, steady=steady),
        us.SymmetricKernel(table=random_symmetric(grid, rng), steady=steady),
        us.DetailedBalanceKernel(table=random_symmetric(grid, rng), steady=steady),
        random_table(grid, rng),
    ]


def random_lattice(grid, rng, low=-1.0, high=1.0):
    return us.lattice_function(grid, rng.uniform(low, high, grid.cell_count))
