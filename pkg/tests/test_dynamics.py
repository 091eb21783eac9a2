import math

import numpy as np
import pytest

import uscatter as us
from uscatter.errors import NonRadialKernel, StepTooLarge, ToleranceNotReached

from zoo import builtin_kernels, random_lattice, random_table


def test_step_rk4_zero_generator(u4):
    gen = us.assemble(us.build_kernel_matrix(us.ConstantKernel(0.0), u4), u4)
    f = us.lattice_function(u4, [1.0, -2.0, 3.0, 0.5])
    assert np.array_equal(us.step_rk4(gen, f, 0.1).values, f.values)


def test_step_rk4_fixed_point(u4_gen, u4):
    steady = us.constant_function(u4, 0.7)
    out = us.step_rk4(u4_gen, steady, 0.01)
    assert np.max(np.abs(out.values - 0.7)) <= 1e-15


def test_step_rk4_matches_oracle(u4_gen, u4_n0):
    stepped = us.step_rk4(u4_gen, u4_n0, 0.01)
    oracle = us.expm_apply(u4_gen, u4_n0, 0.01)
    assert np.max(np.abs(stepped.values - oracle.values)) <= 1e-9


def test_step_rk4_guard(u4_gen, u4_n0):
    with pytest.raises(StepTooLarge):
        us.step_rk4(u4_gen, u4_n0, 0.6)


def test_expm_examples(u4_gen, u4_n0):
    at0 = us.expm_apply(u4_gen, u4_n0, 0.0)
    assert np.array_equal(at0.values, u4_n0.values)
    closed = us.expm_apply(u4_gen, u4_n0, math.log(2.0))
    assert np.max(np.abs(closed.values - [0.875, 0.375, 0.375, 0.375])) <= 1e-13
    late = us.expm_apply(u4_gen, u4_n0, 20.0)
    assert np.max(np.abs(late.values - 0.5)) <= 1e-12


def test_expm_tolerance_not_reached(u4_gen, u4_n0):
    with pytest.raises(ToleranceNotReached):
        us.expm_apply(u4_gen, u4_n0, 1.0, tol=0.0, max_terms=3)


def test_expm_against_scipy():
    import scipy.linalg

    rng = np.random.default_rng(3)
    for spec_tuple in [(2, 1, 1, 1), (3, 1, 1, 1), (2, 1, 2, 1)]:
        g = us.build_grid(*spec_tuple)
        gen = us.assemble(us.build_kernel_matrix(random_table(g, rng), g), g)
        f = random_lattice(g, rng)
        for t in (0.3, 1.0, 5.0):
            mine = us.expm_apply(gen, f, t).values
            ref = scipy.linalg.expm(t * gen.dense_matrix()) @ f.values
            assert np.max(np.abs(mine - ref)) <= 1e-11 * max(1.0, np.max(np.abs(ref)))


def test_picard_examples(u4_gen, u4_n0):
    one = us.picard_iterate(u4_gen, u4_n0, 0.3, 1)
    expected = u4_n0.values + 0.3 * us.apply(u4_gen, u4_n0).values
    assert np.max(np.abs(one.values - expected)) <= 1e-15
    deep = us.picard_iterate(u4_gen, u4_n0, 1.0, 60)
    oracle = us.expm_apply(u4_gen, u4_n0, 1.0)
    assert np.max(np.abs(deep.values - oracle.values)) <= 1e-12
    at0 = us.picard_iterate(u4_gen, u4_n0, 0.0, 7)
    assert np.array_equal(at0.values, u4_n0.values)


def test_evolve_positivity_mass_l1(u4_gen):
    rng = np.random.default_rng(5)
    g = u4_gen.grid
    for _ in range(10):
        n0 = us.lattice_function(g, rng.uniform(0.0, 2.0, 4))
        traj = us.evolve(u4_gen, n0, us.IntegratorSpec(dt=0.01), t_end=10.0,
                         sample_every=50, with_diagnostics=False)
        mass0 = us.integrate(g, n0)
        for state in traj.states:
            assert np.min(state.values) >= -1e-12
            assert abs(us.integrate(g, state) - mass0) <= 1e-9 * abs(mass0)
    for _ in range(10):
        n0 = random_lattice(g, rng)
        traj = us.evolve(u4_gen, n0, us.IntegratorSpec(dt=0.01), t_end=5.0,
                         sample_every=50, with_diagnostics=False)
        l1s = [us.l1_norm(g, s) for s in traj.states]
        assert all(later <= l1s[0] + 1e-9 for later in l1s)
        assert np.diff(l1s).max(initial=0.0) <= 1e-9


def test_evolve_collects_diagnostics(u4_gen, u4_n0):
    traj = us.evolve(u4_gen, u4_n0, us.IntegratorSpec(dt=0.01), t_end=1.0, sample_every=10)
    assert traj.diagnostics is not None
    assert len(traj.diagnostics) == len(traj.states)
    assert traj.diagnostics[0].weighted_l2sq == pytest.approx(3.0, abs=1e-12)
    assert traj.times[0] == 0.0 and traj.times[-1] == 1.0


def test_evolve_expm_and_picard_methods(u4_gen, u4_n0):
    ref = us.expm_apply(u4_gen, u4_n0, 1.0)
    for method in ("expm_oracle", "picard"):
        traj = us.evolve(u4_gen, u4_n0, us.IntegratorSpec(method=method, dt=0.1),
                         t_end=1.0, sample_every=10, with_diagnostics=False)
        assert np.max(np.abs(traj.states[-1].values - ref.values)) <= 1e-10


def test_evolve_time_dependent_positivity(u4):
    spec = us.TimeDependentKernel(
        base=us.ConstantKernel(1.0), modulation=lambda t: math.exp(-t)
    )
    gen = us.assemble_spec(spec, u4)
    assert isinstance(gen, us.ModulatedGenerator)
    n0 = us.lattice_function(u4, [2.0, 0.0, 0.0, 0.0])
    traj = us.evolve(gen, n0, us.IntegratorSpec(dt=0.01), t_end=3.0, sample_every=30,
                     with_diagnostics=False)
    mass0 = us.integrate(u4, n0)
    for state in traj.states:
        assert np.min(state.values) >= -1e-12
        assert abs(us.integrate(u4, state) - mass0) <= 1e-9


def test_evolve_dual_constant_is_exact(u4_gen, u4):
    ones = us.constant_function(u4, 1.0)
    traj = us.evolve_dual(u4_gen, ones, us.IntegratorSpec(dt=0.01), 0.0, 2.0,
                          sample_every=20)
    for state in traj.states:
        assert np.array_equal(state.values, np.ones(4))
    assert traj.times[0] == 0.0 and traj.times[-1] == 2.0


def test_evolve_dual_zero_kernel_constant(u4):
    gen = us.assemble(us.build_kernel_matrix(us.ConstantKernel(0.0), u4), u4)
    phi_T = us.lattice_function(u4, [1.0, 2.0, 3.0, 4.0])
    traj = us.evolve_dual(gen, phi_T, us.IntegratorSpec(dt=0.05), 0.0, 1.0)
    for state in traj.states:
        assert np.array_equal(state.values, phi_T.values)


def test_forward_backward_pairing_invariant(u4):
    spec = us.TimeDependentKernel(
        base=us.ConstantKernel(1.0), modulation=lambda t: math.exp(-t)
    )
    gen = us.assemble_spec(spec, u4)
    rng = np.random.default_rng(7)
    n0 = us.lattice_function(u4, rng.uniform(0.2, 1.5, 4))
    phi_T = us.lattice_function(u4, rng.uniform(0.5, 2.0, 4))
    integ = us.IntegratorSpec(dt=0.002)
    t_end = 1.0
    fwd = us.evolve(gen, n0, integ, t_end, sample_every=50, with_diagnostics=False)
    bwd = us.evolve_dual(gen, phi_T, integ, 0.0, t_end, sample_every=50)
    assert np.allclose(fwd.times, bwd.times, atol=1e-12)
    pairings = [
        float((a.values * b.values).sum() * u4.cell_measure)
        for a, b in zip(fwd.states, bwd.states)
    ]
    assert max(pairings) - min(pairings) <= 1e-8


def test_time_dependent_entropy_inequality(u4):
    spec = us.TimeDependentKernel(
        base=us.ConstantKernel(1.0), modulation=lambda t: math.exp(-0.5 * t)
    )
    gen = us.assemble_spec(spec, u4)
    rng = np.random.default_rng(9)
    integ = us.IntegratorSpec(dt=0.002)
    t_end = 1.5
    n_traj = us.evolve(gen, us.lattice_function(u4, rng.uniform(0.1, 2.0, 4)),
                       integ, t_end, sample_every=25, with_diagnostics=False)
    ref_traj = us.evolve(gen, us.lattice_function(u4, rng.uniform(0.5, 1.5, 4)),
                         integ, t_end, sample_every=25, with_diagnostics=False)
    phi_traj = us.evolve_dual(gen, us.lattice_function(u4, rng.uniform(0.5, 2.0, 4)),
                              integ, 0.0, t_end, sample_every=25)
    H = us.square()
    series = []
    for phi_s, big_n, small_n in zip(phi_traj.states, ref_traj.states, n_traj.states):
        u = small_n.values / big_n.values
        series.append(
            float((phi_s.values * big_n.values * H.value(u)).sum() * u4.cell_measure)
        )
    assert np.diff(series).max(initial=0.0) <= 1e-8


def test_run_stability_examples(u4_gen, u4, u4_n0):
    same = us.run_stability(u4_gen, u4_n0, u4_n0, us.IntegratorSpec(dt=0.01), 1.0, 10)
    assert same.passed
    assert np.array_equal(same.distances, np.zeros(len(same.distances)))

    v0 = us.constant_function(u4, 0.5)
    rep = us.run_stability(u4_gen, u4_n0, v0, us.IntegratorSpec(dt=0.01), 2.0, 10)
    assert rep.passed
    assert rep.distances[0] == 1.5
    fitted = us.fit_decay_rate(rep.times, rep.distances)
    assert fitted == pytest.approx(2.0, abs=1e-3)


def test_run_stability_random_pairs():
    rng = np.random.default_rng(11)
    g = us.build_grid(2, 1, 2, 1)
    gen = us.assemble(us.build_kernel_matrix(random_table(g, rng), g), g)
    for _ in range(10):
        rep = us.run_stability(
            gen, random_lattice(g, rng), random_lattice(g, rng),
            us.IntegratorSpec(dt=0.01), 2.0, 10,
        )
        assert rep.passed


def test_run_rescaled_radial_levels():
    g = us.build_grid(2, 1, 1, 2)
    rng = np.random.default_rng(13)
    spec = us.RadialKernel(profile=lambda r: 1.0 / (1.0 + r) ** 2, diagonal=1.0)
    n0 = random_lattice(g, rng)
    for level in (0, 1, 2):
        rep = us.run_rescaled(spec, g, level, n0, us.IntegratorSpec(dt=0.001), 0.5, 25)
        assert rep.regularity == 0.0
        assert rep.passed
        assert np.diff(rep.l2_norms).max(initial=0.0) <= 1e-9


def test_run_rescaled_level0_reduces_to_plain(u4):
    rng = np.random.default_rng(15)
    spec = us.RadialKernel(profile=lambda r: math.exp(-r), diagonal=1.0)
    n0 = random_lattice(u4, rng)
    rep = us.run_rescaled(spec, u4, 0, n0, us.IntegratorSpec(dt=0.01), 1.0, 10)
    gen = us.assemble(us.build_kernel_matrix(spec, u4), u4)
    traj = us.evolve(gen, n0, us.IntegratorSpec(dt=0.01), 1.0, 10, with_diagnostics=False)
    direct = np.array([us.l2_norm(u4, s) for s in traj.states])
    assert np.array_equal(rep.l2_norms, direct)


def test_run_rescaled_zero_generator_constant_l2(u4):
    spec = us.RadialKernel(profile=lambda r: float(r <= 1.0), diagonal=0.0)
    n0 = us.lattice_function(u4, [1.0, -0.5, 0.25, 2.0])
    rep = us.run_rescaled(spec, u4, 1, n0, us.IntegratorSpec(dt=0.01), 1.0, 10)
    assert rep.passed
    assert np.all(rep.l2_norms == rep.l2_norms[0])


def test_run_rescaled_table_level0_bound(u4):
    table = np.ones((4, 4))
    table[1, :] += 0.75
    spec = us.TableKernel(table)
    n0 = us.lattice_function(u4, [1.0, 0.5, -0.25, 0.75])
    rep = us.run_rescaled(spec, u4, 0, n0, us.IntegratorSpec(dt=0.01), 1.0, 10)
    assert rep.regularity > 0.0
    assert rep.passed
    with pytest.raises(NonRadialKernel):
        us.run_rescaled(spec, u4, 1, n0, us.IntegratorSpec(dt=0.01), 1.0, 10)


def test_trajectory_csv(tmp_path, u4_gen, u4_n0):
    traj = us.evolve(u4_gen, u4_n0, us.IntegratorSpec(dt=0.1), 0.5, 2,
                     with_diagnostics=False)
    path = tmp_path / "traj.csv"
    us.write_trajectory_csv(traj, path, comment="probe")
    lines = path.read_text().splitlines()
    assert lines[0] == "# probe"
    assert lines[1] == "t,cell_0,cell_1,cell_2,cell_3"
    assert len(lines) == 2 + len(traj.states)
