"""Time integration: forward evolution, backward dual evolution, experiments.

Three integrators are available:

* rk4         -- classical explicit 4-stage steps with a dt * k_max <= 1
                 stability guard; the workhorse.
* expm_oracle -- the exact semigroup e^(tG) applied by scaling-and-squaring
                 of a truncated series; the ground truth every other
                 integrator is tested against.
* picard      -- the truncated fixed-point series sum_{j<=iters} (tG)^j f / j!,
                 converging to the oracle as iters grows.

Backward dual solves are realized as forward integration of the
time-reversed system on the transposed generator, reusing one stepper.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import entropy as entropy_mod
from . import spectral as spectral_mod
from .errors import (
    GridMismatch,
    InsufficientSamples,
    NonRadialKernel,
    StepTooLarge,
    ToleranceNotReached,
)
from .generator import (
    COLUMN_SUM,
    Generator,
    ModulatedGenerator,
    assemble_spec,
    regularity_constant,
    rescale,
)
from .kernel import KernelSpec, is_radial
from .padic_core import Grid, LatticeFunction, l1_norm, l2_norm

RK4 = "rk4"
EXPM_ORACLE = "expm_oracle"
PICARD = "picard"

System = "Generator | ModulatedGenerator"


@dataclass(frozen=True)
class IntegratorSpec:
    """Integration method and its parameters.

    dt=None lets rk4 pick min(0.01, 1 / (4 k_max)), tying the step to the
    stiffness of the loss term.
    """

    method: str = RK4
    dt: float | None = None
    picard_iterations: int = 60
    expm_tol: float = 1e-13

    def resolve_dt(self, gen: Generator) -> float:
        if self.dt is not None:
            dt = float(self.dt)
        elif gen.k_max > 0:
            dt = min(0.01, 1.0 / (4.0 * gen.k_max))
        else:
            dt = 0.01
        if dt <= 0:
            raise StepTooLarge("dt must be positive")
        if dt * gen.k_max > 1.0 + 1e-12:
            raise StepTooLarge(
                f"dt = {dt} violates the stability guard dt * k_max <= 1 "
                f"(k_max = {gen.k_max})"
            )
        return dt


@dataclass(frozen=True)
class Trajectory:
    """Sampled states of one evolution, with optional per-sample diagnostics."""

    grid: Grid
    times: np.ndarray
    states: tuple[LatticeFunction, ...]
    diagnostics: "tuple[entropy_mod.DiagnosticsRow, ...] | None" = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if np.any(np.diff(t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        t.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", tuple(self.states))


def _base_generator(system) -> Generator:
    return system.base if isinstance(system, ModulatedGenerator) else system


def _system_rhs(system) -> Callable[[float, np.ndarray], np.ndarray]:
    if isinstance(system, ModulatedGenerator):
        gain, loss = system.base.gain, system.base.loss

        def rhs(t: float, v: np.ndarray) -> np.ndarray:
            return system.rate_at(t) * (gain @ v - loss * v)

    else:
        gain, loss = system.gain, system.loss

        def rhs(t: float, v: np.ndarray) -> np.ndarray:
            return gain @ v - loss * v

    return rhs


def _dual_rhs(system, t_end: float) -> Callable[[float, np.ndarray], np.ndarray]:
    """Right-hand side of the time-reversed dual system in reversed time sigma."""
    if isinstance(system, ModulatedGenerator):
        gain, loss = system.base.gain, system.base.loss

        def rhs(sigma: float, v: np.ndarray) -> np.ndarray:
            return system.rate_at(t_end - sigma) * (v @ gain - loss * v)

    else:
        gain, loss = system.gain, system.loss

        def rhs(sigma: float, v: np.ndarray) -> np.ndarray:
            return v @ gain - loss * v

    return rhs


def _rk4_step(rhs, t: float, v: np.ndarray, dt: float) -> np.ndarray:
    s1 = rhs(t, v)
    s2 = rhs(t + dt / 2.0, v + (dt / 2.0) * s1)
    s3 = rhs(t + dt / 2.0, v + (dt / 2.0) * s2)
    s4 = rhs(t + dt, v + dt * s3)
    return v + (dt / 6.0) * (s1 + 2.0 * s2 + 2.0 * s3 + s4)


def step_rk4(gen: Generator, f: LatticeFunction, dt: float) -> LatticeFunction:
    """One classical 4-stage step of df/dt = A f - k * f."""
    if f.grid != gen.grid:
        raise GridMismatch("function lives on a different grid")
    if dt * gen.k_max > 1.0 + 1e-12:
        raise StepTooLarge(f"dt * k_max = {dt * gen.k_max} exceeds 1")
    return LatticeFunction(gen.grid, _rk4_step(_system_rhs(gen), 0.0, f.values, dt))


def _expm_values(
    gen: Generator, v: np.ndarray, t: float, tol: float, max_terms: int, dual: bool = False
) -> np.ndarray:
    gain, loss = gen.gain, gen.loss
    if dual:
        def act(w):
            return w @ gain - loss * w
    else:
        def act(w):
            return gain @ w - loss * w

    # infinity norm of t*G bounds the series argument; halve until <= 1
    row_abs = np.abs(gain).sum(axis=1) - np.abs(gain.diagonal()) + np.abs(
        gain.diagonal() - loss
    )
    if dual:
        col_abs = np.abs(gen.gain).sum(axis=0) - np.abs(gain.diagonal()) + np.abs(
            gain.diagonal() - loss
        )
        op_norm = float(col_abs.max(initial=0.0))
    else:
        op_norm = float(row_abs.max(initial=0.0))
    scale = abs(t) * op_norm
    squarings = max(0, int(math.ceil(math.log2(scale))) if scale > 1.0 else 0)
    tau = t / (2**squarings)

    out = v.copy()
    for _ in range(2**squarings):
        acc = out.copy()
        term = out
        converged = scale == 0.0
        for j in range(1, max_terms + 1):
            term = (tau / j) * act(term)
            acc = acc + term
            if np.max(np.abs(term)) <= tol * max(np.max(np.abs(acc)), 1e-300):
                converged = True
                break
        if not converged:
            raise ToleranceNotReached(
                f"exponential series did not reach tolerance {tol} in {max_terms} terms"
            )
        out = acc
    return out


def expm_apply(
    gen: Generator,
    f: LatticeFunction,
    t: float,
    tol: float = 1e-13,
    max_terms: int = 120,
) -> LatticeFunction:
    """Exact-solution oracle e^(tG) f via scaling-and-squaring of the series."""
    if f.grid != gen.grid:
        raise GridMismatch("function lives on a different grid")
    if t < 0:
        raise ValueError("oracle evolves forward in time only")
    if t == 0.0:
        return LatticeFunction(gen.grid, f.values)
    return LatticeFunction(gen.grid, _expm_values(gen, f.values, t, tol, max_terms))


def picard_iterate(
    gen: Generator, f: LatticeFunction, t: float, iters: int
) -> LatticeFunction:
    """Truncated fixed-point series sum_{j<=iters} (tG)^j f / j!."""
    if f.grid != gen.grid:
        raise GridMismatch("function lives on a different grid")
    if iters < 1:
        raise ValueError("picard iteration count must be >= 1")
    gain, loss = gen.gain, gen.loss
    acc = f.values.copy()
    term = f.values
    for j in range(1, iters + 1):
        term = (t / j) * (gain @ term - loss * term)
        acc = acc + term
    return LatticeFunction(gen.grid, acc)


def _sample_plan(t_end: float, dt: float, sample_every: int) -> tuple[int, float, list[int]]:
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    n_steps = max(1, int(math.ceil(t_end / dt - 1e-12)))
    dt_eff = t_end / n_steps
    recorded = list(range(0, n_steps, sample_every))
    if recorded[-1] != n_steps:
        recorded.append(n_steps)
    return n_steps, dt_eff, recorded


def _resolve_steady(system, steady):
    if steady is not None:
        return steady
    base = _base_generator(system)
    if base.k_mode != COLUMN_SUM:
        return None
    try:
        return spectral_mod.make_steady_pair(base)
    except Exception:
        return None


def evolve(
    system,
    n0: LatticeFunction,
    integ: IntegratorSpec | None = None,
    t_end: float = 1.0,
    sample_every: int = 1,
    steady: "spectral_mod.SteadyPair | None" = None,
    with_diagnostics: bool = True,
) -> Trajectory:
    """Integrate the balance equation from n0 to t_end, sampling along the way.

    Accepts a Generator or, for separable time dependence, a
    ModulatedGenerator.  When a steady pair is supplied (or solvable from a
    conservative generator) each sample carries a diagnostics row; otherwise
    the trajectory records states only.
    """
    integ = integ or IntegratorSpec()
    base = _base_generator(system)
    if n0.grid != base.grid:
        raise GridMismatch("initial data lives on a different grid")
    if integ.method in (EXPM_ORACLE, PICARD) and isinstance(system, ModulatedGenerator):
        raise ValueError(f"{integ.method} supports time-independent generators only")

    dt = integ.resolve_dt(base)
    n_steps, dt_eff, recorded = _sample_plan(t_end, dt, sample_every)
    rhs = _system_rhs(system)

    times: list[float] = []
    states: list[LatticeFunction] = []
    v = n0.values.copy()
    next_record = 0
    for step in range(n_steps + 1):
        if step == recorded[next_record]:
            t = t_end if step == n_steps else step * dt_eff
            times.append(t)
            states.append(LatticeFunction(base.grid, v))
            next_record += 1
        if step == n_steps:
            break
        t_now = step * dt_eff
        if integ.method == RK4:
            v = _rk4_step(rhs, t_now, v, dt_eff)
        elif integ.method == EXPM_ORACLE:
            v = _expm_values(base, v, dt_eff, integ.expm_tol, 120)
        elif integ.method == PICARD:
            v = picard_iterate(
                base, LatticeFunction(base.grid, v), dt_eff, integ.picard_iterations
            ).values
        else:
            raise ValueError(f"unknown integrator method {integ.method!r}")

    diagnostics = None
    if with_diagnostics:
        pair = _resolve_steady(system, steady)
        if pair is not None:
            diagnostics = tuple(
                entropy_mod.diagnostics(base.grid, state, pair, t=t)
                for t, state in zip(times, states)
            )
    return Trajectory(
        grid=base.grid, times=np.array(times), states=tuple(states), diagnostics=diagnostics
    )


def evolve_dual(
    system,
    phi_T: LatticeFunction,
    integ: IntegratorSpec | None = None,
    t_start: float = 0.0,
    t_end: float = 1.0,
    sample_every: int = 1,
) -> Trajectory:
    """Solve the dual equation backward from the terminal state phi_T at t_end.

    Returned samples are in ascending time order over [t_start, t_end]; the
    last state is phi_T itself.
    """
    integ = integ or IntegratorSpec()
    base = _base_generator(system)
    if phi_T.grid != base.grid:
        raise GridMismatch("terminal state lives on a different grid")
    if t_end <= t_start:
        raise ValueError("t_end must exceed t_start")
    horizon = t_end - t_start
    dt = integ.resolve_dt(base)
    n_steps, dt_eff, recorded = _sample_plan(horizon, dt, sample_every)
    rhs = _dual_rhs(system, t_end)

    sigmas: list[float] = []
    states: list[LatticeFunction] = []
    v = phi_T.values.copy()
    next_record = 0
    for step in range(n_steps + 1):
        if step == recorded[next_record]:
            sigma = horizon if step == n_steps else step * dt_eff
            sigmas.append(sigma)
            states.append(LatticeFunction(base.grid, v))
            next_record += 1
        if step == n_steps:
            break
        sigma_now = step * dt_eff
        if integ.method == RK4:
            v = _rk4_step(rhs, sigma_now, v, dt_eff)
        elif integ.method in (EXPM_ORACLE, PICARD):
            if isinstance(system, ModulatedGenerator):
                raise ValueError(f"{integ.method} supports time-independent generators only")
            if integ.method == EXPM_ORACLE:
                v = _expm_values(base, v, dt_eff, integ.expm_tol, 120, dual=True)
            else:
                dual_gen = transpose_generator(base)
                v = picard_iterate(
                    dual_gen, LatticeFunction(base.grid, v), dt_eff, integ.picard_iterations
                ).values
        else:
            raise ValueError(f"unknown integrator method {integ.method!r}")

    times = [t_end - s for s in reversed(sigmas)]
    times[0] = t_start
    states.reverse()
    return Trajectory(grid=base.grid, times=np.array(times), states=tuple(states))


def transpose_generator(gen: Generator) -> Generator:
    """Generator whose forward action is the dual action of gen."""
    return Generator(
        grid=gen.grid,
        gain=gen.gain.T.copy(),
        loss=gen.loss,
        k_mode=gen.k_mode,
        rescale_level=gen.rescale_level,
    )


@dataclass(frozen=True)
class StabilityReport:
    """L1 distance between two solutions along shared sample times."""

    times: np.ndarray
    distances: np.ndarray
    tol: float
    passed: bool
    max_violation: float


def run_stability(
    gen,
    n0: LatticeFunction,
    v0: LatticeFunction,
    integ: IntegratorSpec | None = None,
    t_end: float = 1.0,
    sample_every: int = 1,
    tol: float = 1e-9,
) -> StabilityReport:
    """Evolve two initial data and report the integral of |n - v| per sample.

    The report asserts non-increase of the distance sequence within tol.
    """
    base = _base_generator(gen)
    if n0.grid != v0.grid:
        raise GridMismatch("the two initial data live on different grids")
    traj_n = evolve(gen, n0, integ, t_end, sample_every, with_diagnostics=False)
    traj_v = evolve(gen, v0, integ, t_end, sample_every, with_diagnostics=False)
    dists = np.array(
        [
            l1_norm(base.grid, LatticeFunction(base.grid, a.values - b.values))
            for a, b in zip(traj_n.states, traj_v.states)
        ]
    )
    increments = np.diff(dists)
    max_violation = float(increments.max(initial=0.0))
    return StabilityReport(
        times=traj_n.times,
        distances=dists,
        tol=tol,
        passed=bool(max_violation <= tol),
        max_violation=max_violation,
    )


@dataclass(frozen=True)
class RescaledReport:
    """L2 growth of the rescaled system against its regularity bound."""

    level: int
    times: np.ndarray
    l2_norms: np.ndarray
    regularity: float
    bounds: np.ndarray
    tol: float
    passed: bool


def run_rescaled(
    spec: KernelSpec,
    grid: Grid,
    level: int,
    n0: LatticeFunction,
    integ: IntegratorSpec | None = None,
    t_end: float = 1.0,
    sample_every: int = 1,
    tol: float = 1e-9,
) -> RescaledReport:
    """Evolve the hyperbolically rescaled system and check its L2 bound.

    Radial kernels rescale at any level; other kernels are accepted only at
    level 0, where the rescaling is the identity.  The report asserts
    l2(t) <= exp(L1 * t) * l2(0) * (1 + tol) with L1 the computed
    translation-regularity constant.
    """
    lvl = int(level if not hasattr(level, "l") else level.l)
    if is_radial(spec):
        gen = rescale(spec, grid, lvl)
    elif lvl == 0:
        gen = assemble_spec(spec, grid, COLUMN_SUM)
        if isinstance(gen, ModulatedGenerator):
            raise NonRadialKernel("rescaled runs require time-independent kernels")
    else:
        raise NonRadialKernel("levels above 0 require a radial kernel")
    reg = regularity_constant(spec, grid, lvl)
    traj = evolve(gen, n0, integ, t_end, sample_every, with_diagnostics=False)
    norms = np.array([l2_norm(grid, s) for s in traj.states])
    bounds = np.exp(reg * traj.times) * norms[0]
    passed = bool(np.all(norms <= bounds * (1.0 + tol)))
    return RescaledReport(
        level=lvl,
        times=traj.times,
        l2_norms=norms,
        regularity=reg,
        bounds=bounds,
        tol=tol,
        passed=passed,
    )


def write_trajectory_csv(traj: Trajectory, path, comment: str | None = None) -> None:
    """Write samples as CSV with header t,cell_0,...,cell_{N-1}."""
    n_cells = traj.grid.cell_count
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("t," + ",".join(f"cell_{i}" for i in range(n_cells)) + "\n")
        for t, state in zip(traj.times, traj.states):
            fh.write(repr(float(t)) + "," + ",".join(repr(float(x)) for x in state.values) + "\n")
