import numpy as np
import pytest

import uscatter as us
from uscatter.errors import (
    DiagonalSingularity,
    KernelValidationError,
    NegativeKernelValue,
)

from zoo import SMALL_GRIDS, builtin_kernels, random_steady


def test_constant_eval(u4):
    spec = us.ConstantKernel(1.0)
    for i in range(4):
        for j in range(4):
            assert us.eval_kernel(spec, u4, i, j) == 1.0


def test_radial_eval(u4):
    spec = us.RadialKernel(profile=lambda r: r, diagonal=0.0)
    assert us.eval_kernel(spec, u4, 0, 1) == 2.0
    assert us.eval_kernel(spec, u4, 0, 2) == 1.0
    assert us.eval_kernel(spec, u4, 0, 0) == 0.0


def test_radial_diagonal_policy(u4):
    def bad_at_zero(r):
        return 1.0 / r

    with pytest.raises(DiagonalSingularity):
        us.build_kernel_matrix(us.RadialKernel(profile=bad_at_zero, diagonal=None), u4)
    mat = us.build_kernel_matrix(us.RadialKernel(profile=bad_at_zero, diagonal=3.0), u4)
    assert np.all(np.diag(mat.entries) == 3.0)


def test_negative_profile_rejected(u4):
    with pytest.raises(NegativeKernelValue):
        us.build_kernel_matrix(us.RadialKernel(profile=lambda r: -r, diagonal=0.0), u4)


def test_matrix_matches_scalar_eval_bitwise():
    rng = np.random.default_rng(3)
    for spec_tuple in [(2, 1, 1, 1), (3, 1, 1, 1)]:
        g = us.build_grid(*spec_tuple)
        for spec in builtin_kernels(g, rng):
            mat = us.build_kernel_matrix(spec, g)
            for i in range(g.cell_count):
                for j in range(g.cell_count):
                    assert mat.entries[i, j] == us.eval_kernel(spec, g, i, j)


def test_constant_matrix(u4):
    mat = us.build_kernel_matrix(us.ConstantKernel(1.0), u4)
    assert np.array_equal(mat.entries, np.ones((4, 4)))


def test_detailed_balance_fixture_residual(u4):
    steady = us.lattice_function(u4, [0.1, 0.2, 0.3, 0.4])
    spec = us.DetailedBalanceKernel(table=np.ones((4, 4)), steady=steady)
    assert us.detailed_balance_residual(spec, u4) == 0.0
    # with a constant table even naive per-side products agree bitwise
    T = us.build_kernel_matrix(spec, u4).entries
    v = steady.values
    naive = np.max(np.abs(T.T * v[:, None] - T * v[None, :]))
    assert naive == 0.0


def test_detailed_balance_random_residual(u4):
    rng = np.random.default_rng(11)
    for _ in range(10):
        raw = rng.uniform(0.1, 1.0, (4, 4))
        table = np.triu(raw) + np.triu(raw, 1).T
        steady = us.lattice_function(u4, rng.uniform(0.1, 1.0, 4))
        spec = us.DetailedBalanceKernel(table=table, steady=steady)
        assert us.detailed_balance_residual(spec, u4) == 0.0
        # independent per-side evaluation agrees to rounding
        T = us.build_kernel_matrix(spec, u4).entries
        v = steady.values
        naive = np.max(np.abs(T.T * v[:, None] - T * v[None, :]))
        assert naive <= 1e-15


def test_detailed_balance_requires_symmetry(u4):
    table = np.ones((4, 4))
    table[0, 1] = 2.0
    with pytest.raises(KernelValidationError):
        us.build_kernel_matrix(
            us.DetailedBalanceKernel(table=table, steady=us.constant_function(u4, 1.0)), u4
        )


def test_projection_normalization_enforced(u4):
    steady = us.constant_function(u4, 0.5)  # unit mass
    good = us.ProjectionKernel(weight=us.constant_function(u4, 1.0), steady=steady)
    us.build_kernel_matrix(good, u4)
    bad = us.ProjectionKernel(weight=us.constant_function(u4, 1.5), steady=steady)
    with pytest.raises(KernelValidationError):
        us.build_kernel_matrix(bad, u4)


def test_symmetric_variant_identity():
    rng = np.random.default_rng(5)
    g = us.build_grid(2, 1, 2, 1)
    raw = rng.uniform(0.2, 1.0, (g.cell_count, g.cell_count))
    table = np.triu(raw) + np.triu(raw, 1).T
    steady = random_steady(g, rng)
    spec = us.SymmetricKernel(table=table, steady=steady)
    km = us.build_kernel_matrix(spec, g).entries
    mu = g.cell_measure
    lhs = km @ (steady.values * mu)
    rhs = table.sum(axis=1) * mu
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-14)


def test_nonnegativity_all_variants():
    rng = np.random.default_rng(17)
    for spec_tuple in SMALL_GRIDS[:4]:
        g = us.build_grid(*spec_tuple)
        for spec in builtin_kernels(g, rng):
            entries = us.build_kernel_matrix(spec, g).entries
            assert np.all(entries >= 0)
            assert np.all(np.isfinite(entries))


def test_time_dependent_sampling(u4):
    base = us.ConstantKernel(1.0)
    spec = us.TimeDependentKernel(base=base, modulation=lambda t: np.exp(-t))
    at0 = us.build_kernel_matrix(spec, u4, t=0.0)
    assert np.array_equal(at0.entries, np.ones((4, 4)))
    flat = us.TimeDependentKernel(base=base, modulation=lambda t: 0.5)
    a = us.build_kernel_matrix(flat, u4, t=0.3)
    b = us.build_kernel_matrix(flat, u4, t=1.7)
    assert np.array_equal(a.entries, b.entries)


def test_negative_modulation_rejected(u4):
    spec = us.TimeDependentKernel(base=us.ConstantKernel(1.0), modulation=lambda t: -1.0)
    with pytest.raises(NegativeKernelValue):
        us.build_kernel_matrix(spec, u4, t=1.0)


def test_kernel_table_csv_roundtrip(tmp_path, u4):
    rng = np.random.default_rng(23)
    table = rng.uniform(0.0, 1.0, (4, 4))
    path = tmp_path / "kernel.csv"
    with open(path, "w") as fh:
        fh.write("# test table\n")
        for row in table:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    spec = us.load_kernel_table(path, u4)
    assert np.array_equal(spec.entries, table)


def test_kernel_table_csv_negative_entry(tmp_path, u4):
    path = tmp_path / "kernel.csv"
    rows = np.ones((4, 4))
    rows[2, 1] = -0.25
    with open(path, "w") as fh:
        for row in rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with pytest.raises(NegativeKernelValue):
        us.load_kernel_table(path, u4)


def test_build_matrix_deterministic(u4):
    rng = np.random.default_rng(29)
    for spec in builtin_kernels(u4, rng):
        a = us.build_kernel_matrix(spec, u4).entries
        b = us.build_kernel_matrix(spec, u4).entries
        assert np.array_equal(a, b)
