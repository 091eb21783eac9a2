"""Configuration-driven experiment runner: the `uscatter` command.

Subcommands (all take --config <path> and optional --out <dir>):

    simulate    trajectory + diagnostics CSVs
    steady      steady state, dual state, conserved pairing, residuals
    alpha       Poincaré constant with minimizing direction
    decay       simulate, fit the weighted L2 decay rate, check the bound
    rescale     hyperbolically rescaled run with its L2 growth bound
    stability   L1 distance between two configured solutions
    check       full property suite on the configured instance

Exit codes: 0 success, 1 configuration or runtime error, 2 a verified
property assertion failed.  Given the same config file, reruns produce
byte-identical CSV artifacts; every artifact embeds a comment header with
the grid parameters, loss mode, and the config hash.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from typing import Sequence

import numpy as np

from .config import Experiment, load_experiment, parse_config
from .dynamics import (
    IntegratorSpec,
    evolve,
    expm_apply,
    picard_iterate,
    run_rescaled,
    run_stability,
    write_trajectory_csv,
)
from .entropy import (
    absolute,
    diagnostics,
    fit_decay_rate,
    gre_dissipation_rhs,
    neg_part_sq,
    pos_part_sq,
    square,
    write_diagnostics_csv,
)
from .errors import CheckFailure, ConfigError, UscatterError
from .generator import COLUMN_SUM, ModulatedGenerator
from .kernel import build_kernel_matrix
from .padic_core import LatticeFunction, constant_function, integrate, l1_norm
from .spectral import compute_rho, estimate_alpha

_SUBCOMMANDS = ("simulate", "steady", "alpha", "decay", "rescale", "stability", "check")


def _fmt(x) -> str:
    return repr(float(x))


def _write_rows(path: str, comment: str, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {comment}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(str(c) for c in row) + "\n")


def _summary(path: str, comment: str, items: dict) -> None:
    _write_rows(path, comment, "name,value", list(items.items()))


def _base_gen(exp: Experiment):
    gen = exp.generator()
    return gen.base if isinstance(gen, ModulatedGenerator) else gen


def _oracle_l2sq_series(gen, n0, pair, times) -> np.ndarray:
    out = []
    state = n0
    prev_t = 0.0
    for t in times:
        state = expm_apply(gen, state, float(t) - prev_t)
        prev_t = float(t)
        out.append(diagnostics(gen.grid, state, pair, t=t).weighted_l2sq)
    return np.array(out)


def _cmd_simulate(exp: Experiment, out: str) -> int:
    gen = exp.generator()
    n0 = exp.initial()
    traj = evolve(gen, n0, exp.integrator, exp.t_end, exp.sample_every)
    write_trajectory_csv(traj, os.path.join(out, "trajectory.csv"), exp.provenance())
    if traj.diagnostics is not None:
        write_diagnostics_csv(
            traj.diagnostics, os.path.join(out, "diagnostics.csv"), exp.provenance()
        )
    _summary(
        os.path.join(out, "simulate_summary.csv"),
        exp.provenance(),
        {
            "seed": exp.seed,
            "initial_mass": _fmt(integrate(exp.grid, n0)),
            "initial_l1": _fmt(l1_norm(exp.grid, n0)),
            "samples": len(traj.states),
        },
    )
    return 0


def _cmd_steady(exp: Experiment, out: str) -> int:
    pair = exp.steady_pair()
    n0 = exp.initial()
    rho = compute_rho(pair.phi, n0)
    _write_rows(
        os.path.join(out, "steady.csv"),
        exp.provenance(),
        "cell,N,phi",
        (
            (i, _fmt(pair.N.values[i]), _fmt(pair.phi.values[i]))
            for i in range(exp.grid.cell_count)
        ),
    )
    _summary(
        os.path.join(out, "steady_summary.csv"),
        exp.provenance(),
        {
            "seed": exp.seed,
            "rho": _fmt(rho),
            "primal_residual": _fmt(pair.primal_residual),
            "dual_residual": _fmt(pair.dual_residual),
        },
    )
    return 0


def _cmd_alpha(exp: Experiment, out: str) -> int:
    pair = exp.steady_pair()
    est = estimate_alpha(_base_gen(exp), pair.N, pair.phi)
    _write_rows(
        os.path.join(out, "alpha_direction.csv"),
        exp.provenance(),
        "cell,u_star",
        ((i, _fmt(v)) for i, v in enumerate(est.direction.values)),
    )
    _summary(
        os.path.join(out, "alpha_summary.csv"),
        exp.provenance(),
        {
            "seed": exp.seed,
            "alpha": _fmt(est.alpha),
            "rayleigh_residual": _fmt(est.residual),
        },
    )
    return 0


def _cmd_decay(exp: Experiment, out: str) -> int:
    pair = exp.steady_pair()
    gen = exp.generator()
    if isinstance(gen, ModulatedGenerator):
        raise ConfigError("decay analysis requires a time-independent kernel")
    n0 = exp.initial()
    est = estimate_alpha(gen, pair.N, pair.phi)
    traj = evolve(gen, n0, exp.integrator, exp.t_end, exp.sample_every, steady=pair)
    values = np.array([row.weighted_l2sq for row in traj.diagnostics])
    # the decay bound is a statement about the exact semigroup; gate it on
    # the exponential oracle rather than on integrator samples
    oracle = _oracle_l2sq_series(gen, n0, pair, traj.times)
    bounds = math.e ** (-est.alpha * traj.times) * oracle[0]
    ok = bool(np.all(oracle <= bounds * (1.0 + 1e-8)))
    window = traj.times <= exp.fit_t_max
    fit_vals = values[window]
    fitted = fit_decay_rate(traj.times[window], fit_vals) if np.all(fit_vals > 0) else math.nan
    _write_rows(
        os.path.join(out, "decay.csv"),
        exp.provenance(),
        "t,weighted_l2sq,oracle_l2sq,bound",
        (
            (_fmt(t), _fmt(v), _fmt(o), _fmt(b))
            for t, v, o, b in zip(traj.times, values, oracle, bounds)
        ),
    )
    _summary(
        os.path.join(out, "decay_summary.csv"),
        exp.provenance(),
        {
            "seed": exp.seed,
            "alpha": _fmt(est.alpha),
            "fitted_rate": _fmt(fitted),
            "bound_holds": ok,
        },
    )
    return 0 if ok else 2


def _cmd_rescale(exp: Experiment, out: str) -> int:
    n0 = exp.initial()
    report = run_rescaled(
        exp.spec,
        exp.grid,
        exp.rescale_level,
        n0,
        exp.integrator,
        exp.t_end,
        exp.sample_every,
    )
    _write_rows(
        os.path.join(out, "rescale.csv"),
        exp.provenance(),
        "t,l2_norm,bound",
        (
            (_fmt(t), _fmt(v), _fmt(b))
            for t, v, b in zip(report.times, report.l2_norms, report.bounds)
        ),
    )
    _summary(
        os.path.join(out, "rescale_summary.csv"),
        exp.provenance(),
        {
            "seed": exp.seed,
            "level": report.level,
            "regularity_L1": _fmt(report.regularity),
            "initial_l1": _fmt(l1_norm(exp.grid, n0)),
            "bound_holds": report.passed,
        },
    )
    return 0 if report.passed else 2


def _cmd_stability(exp: Experiment, out: str) -> int:
    gen = exp.generator()
    n0 = exp.initial()
    v0 = exp.stability_initial()
    report = run_stability(gen, n0, v0, exp.integrator, exp.t_end, exp.sample_every)
    _write_rows(
        os.path.join(out, "stability.csv"),
        exp.provenance(),
        "t,l1_distance",
        ((_fmt(t), _fmt(d)) for t, d in zip(report.times, report.distances)),
    )
    _summary(
        os.path.join(out, "stability_summary.csv"),
        exp.provenance(),
        {
            "seed": exp.seed,
            "initial_distance": _fmt(report.distances[0]),
            "max_violation": _fmt(report.max_violation),
            "non_increasing": report.passed,
        },
    )
    return 0 if report.passed else 2


def _cmd_check(exp: Experiment, out: str) -> int:
    if exp.k_mode != COLUMN_SUM:
        raise ConfigError("the check suite requires generator.k_mode = column_sum")
    gen = exp.generator()
    base = _base_gen(exp)
    grid = exp.grid
    pair = exp.steady_pair()
    n0 = exp.initial()
    rows = []

    def gate(name: str, value: float, bound: float, ok: bool) -> None:
        rows.append((name, _fmt(value), _fmt(bound), "pass" if ok else "fail"))

    traj = evolve(gen, n0, exp.integrator, exp.t_end, exp.sample_every, steady=pair)
    masses = np.array([r.mass for r in traj.diagnostics])
    mass_dev = float(np.max(np.abs(masses - masses[0])))
    mass_bound = 1e-9 * max(abs(masses[0]), 1e-300)
    gate("mass_conservation", mass_dev, mass_bound, mass_dev <= mass_bound)

    if np.all(n0.values >= 0):
        min_n = min(float(r.min_n) for r in traj.diagnostics)
        gate("positivity", min_n, -1e-12, min_n >= -1e-12)

    l1s = np.array([r.l1 for r in traj.diagnostics])
    l1_growth = float(np.diff(l1s).max(initial=0.0))
    gate("l1_contraction", l1_growth, 1e-9, l1_growth <= 1e-9)

    time_independent = not isinstance(gen, ModulatedGenerator)
    if time_independent:
        t_probe = min(1.0, exp.t_end)
        oracle = expm_apply(base, n0, t_probe)
        rk = evolve(base, n0, IntegratorSpec(method="rk4", dt=1e-3), t_probe, 10**9,
                    with_diagnostics=False).states[-1]
        rk_err = float(np.max(np.abs(rk.values - oracle.values)))
        gate("rk4_vs_oracle", rk_err, 1e-7, rk_err <= 1e-7)
        pic = picard_iterate(base, n0, t_probe, 60)
        pic_err = float(np.max(np.abs(pic.values - oracle.values)))
        gate("picard_vs_oracle", pic_err, 1e-12, pic_err <= 1e-12)

    gate("steady_residual", pair.primal_residual, 1e-10, pair.primal_residual <= 1e-10)
    gate("dual_residual", pair.dual_residual, 1e-10, pair.dual_residual <= 1e-10)
    ones_resid = float(
        np.max(np.abs(base.apply_dual(constant_function(grid, 1.0)).values))
    )
    gate("dual_of_ones_exact", ones_resid, 0.0, ones_resid == 0.0)

    kmat = build_kernel_matrix(exp.spec, grid) if not isinstance(gen, ModulatedGenerator) else None
    if kmat is not None:
        for H in (square(), absolute()):
            rhs0 = gre_dissipation_rhs(kmat, grid, pair.phi, pair.N, n0, H)
            gate(f"gre_rhs_nonpositive_{H.name}", rhs0, 1e-12, rhs0 <= 1e-12)

    ratios0 = n0.values / pair.N.values
    c_hi, c_lo = float(ratios0.max()), float(ratios0.min())
    max_ratios = np.array([r.max_ratio for r in traj.diagnostics])
    min_ratios = np.array([r.min_ratio for r in traj.diagnostics])
    hi_dev = float(max_ratios.max())
    lo_dev = float(min_ratios.min())
    gate("max_principle_upper", hi_dev, c_hi * (1 + 1e-9) + 1e-300,
         hi_dev <= c_hi * (1 + 1e-9) + 1e-15)
    gate("max_principle_lower", lo_dev, c_lo * (1 - 1e-9) - 1e-300,
         lo_dev >= c_lo - abs(c_lo) * 1e-9 - 1e-15)

    ent_sq = np.array([r.rel_entropy_square for r in traj.diagnostics])
    ent_abs = np.array([r.rel_entropy_abs for r in traj.diagnostics])
    for name, series in (("entropy_square", ent_sq), ("entropy_abs", ent_abs)):
        growth = float(np.diff(series).max(initial=0.0))
        gate(f"{name}_monotone", growth, 1e-12, growth <= 1e-12)

    est = estimate_alpha(base, pair.N, pair.phi)
    gate("alpha_positive", est.alpha, 0.0, est.alpha > 0.0)
    q_series = np.array([r.weighted_l2sq for r in traj.diagnostics])
    q_bounds = np.exp(-est.alpha * traj.times) * q_series[0]
    decay_dev = float(np.max(q_series - q_bounds * (1.0 + 1e-8)))
    gate("l2sq_decay_bound", decay_dev, 0.0, decay_dev <= 0.0)

    _write_rows(
        os.path.join(out, "check.csv"),
        exp.provenance(),
        "check,value,bound,result",
        rows,
    )
    failed = [r[0] for r in rows if r[3] == "fail"]
    if failed:
        print(f"check: FAIL ({', '.join(failed)})", file=sys.stderr)
        return 2
    print(f"check: all {len(rows)} properties hold")
    return 0


_RUNNERS = {
    "simulate": _cmd_simulate,
    "steady": _cmd_steady,
    "alpha": _cmd_alpha,
    "decay": _cmd_decay,
    "rescale": _cmd_rescale,
    "stability": _cmd_stability,
    "check": _cmd_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="uscatter",
        description="Simulate and verify the p-adic scattering equation on truncated lattices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default="uscatter_out", help="output directory")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1

    try:
        cfg = parse_config(args.config)
        exp = load_experiment(cfg)
        os.makedirs(args.out, exist_ok=True)
        return _RUNNERS[args.command](exp, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except CheckFailure as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return 2
    except UscatterError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
