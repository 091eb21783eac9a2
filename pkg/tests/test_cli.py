import os

import numpy as np
import pytest

import uscatter as us
from uscatter.cli import main

U4_CFG = """\
# canonical 4-cell fixture with the constant kernel
grid.p = 2
grid.n = 1
grid.M = 1
grid.m = 1
kernel.variant = constant
kernel.value = 1.0
generator.k_mode = column_sum
initial.variant = indicator
initial.cell = 0
initial.mass = 1.0
integrator.method = rk4
integrator.dt = 0.01
run.t_end = 2.0
run.sample_every = 10
run.seed = 42
run.fit_t_max = 1.0
stability.variant = indicator
stability.cell = 1
stability.mass = 1.0
"""


def _write_cfg(tmp_path, text=U4_CFG, name="u4.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _read(out_dir, name):
    with open(os.path.join(out_dir, name), "r", encoding="utf-8") as fh:
        return fh.read()


def _summary_dict(out_dir, name):
    lines = _read(out_dir, name).splitlines()
    assert lines[0].startswith("# uscatter p=2 n=1 M=1 m=1 k_mode=column_sum config_sha256=")
    assert lines[1] == "name,value"
    return dict(line.split(",", 1) for line in lines[2:])


def test_steady_subcommand(tmp_path):
    cfg = _write_cfg(tmp_path)
    out = str(tmp_path / "out")
    assert main(["steady", "--config", cfg, "--out", out]) == 0
    summary = _summary_dict(out, "steady_summary.csv")
    assert float(summary["rho"]) == pytest.approx(1.0, abs=1e-12)
    assert float(summary["primal_residual"]) <= 1e-10
    assert float(summary["dual_residual"]) <= 1e-10
    body = _read(out, "steady.csv").splitlines()
    assert body[1] == "cell,N,phi"
    cells = [line.split(",") for line in body[2:]]
    assert [float(c[1]) for c in cells] == pytest.approx([0.5] * 4, abs=1e-12)
    assert [float(c[2]) for c in cells] == pytest.approx([1.0] * 4, abs=1e-12)


def test_alpha_subcommand(tmp_path):
    cfg = _write_cfg(tmp_path)
    out = str(tmp_path / "out")
    assert main(["alpha", "--config", cfg, "--out", out]) == 0
    summary = _summary_dict(out, "alpha_summary.csv")
    assert float(summary["alpha"]) == pytest.approx(4.0, abs=1e-6)


def test_decay_subcommand(tmp_path):
    cfg = _write_cfg(tmp_path)
    out = str(tmp_path / "out")
    assert main(["decay", "--config", cfg, "--out", out]) == 0
    summary = _summary_dict(out, "decay_summary.csv")
    assert float(summary["fitted_rate"]) == pytest.approx(4.0, abs=1e-3)
    assert summary["bound_holds"] == "True"


def test_simulate_and_diagnostics(tmp_path):
    cfg = _write_cfg(tmp_path)
    out = str(tmp_path / "out")
    assert main(["simulate", "--config", cfg, "--out", out]) == 0
    traj = _read(out, "trajectory.csv").splitlines()
    assert traj[1] == "t,cell_0,cell_1,cell_2,cell_3"
    diag = _read(out, "diagnostics.csv").splitlines()
    assert diag[1] == us.DIAGNOSTICS_HEADER
    first = [float(x) for x in diag[2].split(",")]
    assert first[1] == pytest.approx(1.0, abs=1e-12)  # mass
    assert first[3] == pytest.approx(3.0, abs=1e-12)  # weighted_l2sq
    summary = _summary_dict(out, "simulate_summary.csv")
    assert float(summary["initial_l1"]) == pytest.approx(1.0, abs=1e-12)


def test_stability_subcommand(tmp_path):
    cfg = _write_cfg(tmp_path)
    out = str(tmp_path / "out")
    assert main(["stability", "--config", cfg, "--out", out]) == 0
    summary = _summary_dict(out, "stability_summary.csv")
    assert summary["non_increasing"] == "True"
    assert float(summary["initial_distance"]) == pytest.approx(2.0, abs=1e-12)


def test_rescale_subcommand(tmp_path):
    text = U4_CFG.replace(
        "kernel.variant = constant\nkernel.value = 1.0",
        "kernel.variant = radial\nkernel.profile = inverse_power\n"
        "kernel.exponent = 2.0\nkernel.diagonal = 1.0",
    ) + "run.rescale_level = 1\n"
    cfg = _write_cfg(tmp_path, text)
    out = str(tmp_path / "out")
    assert main(["rescale", "--config", cfg, "--out", out]) == 0
    summary = _summary_dict(out, "rescale_summary.csv")
    assert float(summary["regularity_L1"]) == 0.0
    assert summary["bound_holds"] == "True"
    assert summary["level"] == "1"
    assert float(summary["initial_l1"]) == pytest.approx(1.0, abs=1e-12)


def test_check_subcommand_and_determinism(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    out1 = str(tmp_path / "out1")
    out2 = str(tmp_path / "out2")
    assert main(["check", "--config", cfg, "--out", out1]) == 0
    assert main(["check", "--config", cfg, "--out", out2]) == 0
    assert _read(out1, "check.csv") == _read(out2, "check.csv")
    rows = _read(out1, "check.csv").splitlines()[2:]
    assert all(row.endswith(",pass") for row in rows)
    names = {row.split(",")[0] for row in rows}
    assert "dual_of_ones_exact" in names
    assert "mass_conservation" in names


def test_all_artifacts_deterministic(tmp_path):
    cfg = _write_cfg(tmp_path)
    for sub, files in [
        ("simulate", ["trajectory.csv", "diagnostics.csv", "simulate_summary.csv"]),
        ("steady", ["steady.csv", "steady_summary.csv"]),
        ("decay", ["decay.csv", "decay_summary.csv"]),
    ]:
        out1 = str(tmp_path / f"{sub}_a")
        out2 = str(tmp_path / f"{sub}_b")
        assert main([sub, "--config", cfg, "--out", out1]) == 0
        assert main([sub, "--config", cfg, "--out", out2]) == 0
        for name in files:
            assert _read(out1, name) == _read(out2, name)


def test_negative_kernel_csv_exits_1(tmp_path, capsys):
    rows = np.ones((4, 4))
    rows[1, 2] = -1.0
    kpath = tmp_path / "bad_kernel.csv"
    with open(kpath, "w") as fh:
        for row in rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    text = U4_CFG.replace(
        "kernel.variant = constant\nkernel.value = 1.0",
        "kernel.variant = table\nkernel.csv = bad_kernel.csv",
    )
    cfg = _write_cfg(tmp_path, text)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "out")]) == 1
    assert "NegativeKernelValue" in capsys.readouterr().err


def test_missing_config_exits_1(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "nope.cfg")]) == 1
    assert "config error" in capsys.readouterr().err


def test_malformed_config_exits_1(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "grid.p 2\n", name="bad.cfg")
    assert main(["steady", "--config", cfg]) == 1


def test_random_positive_initial_reproducible(tmp_path):
    text = U4_CFG.replace(
        "initial.variant = indicator\ninitial.cell = 0\ninitial.mass = 1.0",
        "initial.variant = random_positive",
    )
    cfg = _write_cfg(tmp_path, text)
    out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert main(["simulate", "--config", cfg, "--out", out1]) == 0
    assert main(["simulate", "--config", cfg, "--out", out2]) == 0
    assert _read(out1, "trajectory.csv") == _read(out2, "trajectory.csv")
    # the documented splitmix64 stream drives the draw
    stream = us.SplitMix64(42)
    expected = [stream.next_unit() for _ in range(4)]
    first_row = _read(out1, "trajectory.csv").splitlines()[2].split(",")
    assert [float(x) for x in first_row[1:]] == pytest.approx(expected, abs=0.0)


def test_max_cells_env_override(tmp_path, monkeypatch, capsys):
    text = U4_CFG.replace("grid.M = 1", "grid.M = 10").replace("grid.m = 1", "grid.m = 10")
    cfg = _write_cfg(tmp_path, text)
    assert main(["steady", "--config", cfg, "--out", str(tmp_path / "out")]) == 1
    assert "GridTooLarge" in capsys.readouterr().err
    monkeypatch.setenv("USCATTER_MAX_CELLS", "3000000")
    # now the grid builds; the run is too large to be useful but must not
    # fail at the size gate, so probe the gate directly instead of running
    cfg_obj = us.build_grid(2, 1, 10, 10)
    assert cfg_obj.cell_count == 2**20


def test_time_dependent_config(tmp_path):
    text = U4_CFG.replace(
        "kernel.variant = constant\nkernel.value = 1.0",
        "kernel.variant = time_dependent\nkernel.base_variant = constant\n"
        "kernel.value = 1.0\nkernel.modulation = exp_decay\nkernel.modulation_rate = 1.0",
    )
    cfg = _write_cfg(tmp_path, text)
    out = str(tmp_path / "out")
    assert main(["simulate", "--config", cfg, "--out", out]) == 0
    lines = _read(out, "trajectory.csv").splitlines()
    masses = [sum(float(x) for x in line.split(",")[1:]) * 0.5 for line in lines[2:]]
    assert masses == pytest.approx([masses[0]] * len(masses), abs=1e-9)


def test_help_exits_zero():
    assert main(["--help"]) == 0
    assert main([]) == 1
