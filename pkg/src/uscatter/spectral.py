"""Steady states, dual states, conserved pairings, and the Poincaré constant.

The conservative generator has a zero eigenvalue whose Perron direction is
the steady state N > 0; the transpose problem yields the dual state phi > 0
(the constant function, exactly, in column-sum mode).  Both are found by
deterministic power iteration on the shifted operator I + G / (k_max + 1),
which is nonnegative and stochastic, from a uniform positive start.

The Poincaré constant alpha is the best lower bound of the entropy
dissipation quadratic form against the weighted L2 norm on directions with
vanishing weighted mean.  Discretely it is the second-smallest eigenvalue of
a symmetrized weighted graph Laplacian, computed by deflated inverse
iteration and cross-checkable against a dense eigensolve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    GridMismatch,
    NonConvergence,
    NonPositiveN,
    NoPositiveSteadyState,
    ReducibleGenerator,
)
from .generator import Generator
from .padic_core import LatticeFunction, integrate


@dataclass(frozen=True)
class SteadyPair:
    """Steady state N and dual state phi with their balance residuals.

    Normalized so that integrate(N) = 1 and integrate(N * phi) = 1.
    """

    N: LatticeFunction
    phi: LatticeFunction
    primal_residual: float
    dual_residual: float
    normalization: str = "unit_mass_unit_pairing"


@dataclass(frozen=True)
class AlphaEstimate:
    """Poincaré constant with its minimizing direction and Rayleigh residual."""

    alpha: float
    direction: LatticeFunction
    residual: float


def _check_irreducible(gen: Generator) -> None:
    """Strong connectivity of the gain graph via boolean reachability closure."""
    N = gen.grid.cell_count
    if N == 1:
        return
    reach = ((gen.gain > 0.0) | np.eye(N, dtype=bool)).astype(np.float64)
    for _ in range(int(math.ceil(math.log2(N))) + 1):
        reach = ((reach @ reach) > 0).astype(np.float64)
    if not reach.all():
        raise ReducibleGenerator(
            "gain graph is not strongly connected; no unique positive steady state"
        )


def solve_steady(gen: Generator, tol: float = 1e-10, max_iters: int = 200_000) -> LatticeFunction:
    """Positive steady state with unit mass and balance residual <= tol (max norm).

    Power iteration on the nonnegative column-stochastic shift of the
    generator, from the uniform positive start, converging to the Perron
    direction.  Reducible gain graphs are rejected up front.
    """
    _check_irreducible(gen)
    grid = gen.grid
    mu = grid.cell_measure
    c = gen.k_max + 1.0
    gain, loss = gen.gain, gen.loss
    x = np.full(grid.cell_count, 1.0 / grid.cell_count)
    for it in range(1, max_iters + 1):
        act = gain @ x - loss * x
        x = x + act / c
        s = x.sum()
        if s <= 0 or not np.isfinite(s):
            raise NoPositiveSteadyState("iteration left the positive cone")
        x = x / s
        if it % 16 == 0 or it == 1:
            cand = x / (x.sum() * mu)
            resid = float(np.max(np.abs(gain @ cand - loss * cand)))
            if resid <= tol:
                if np.any(cand <= 0):
                    raise NoPositiveSteadyState(
                        "steady candidate is not strictly positive"
                    )
                return LatticeFunction(grid, cand)
    raise NonConvergence(
        f"steady iteration still above tolerance {tol} after {max_iters} iterations"
    )


def solve_dual_steady(
    gen: Generator,
    steady: LatticeFunction | None = None,
    tol: float = 1e-10,
    max_iters: int = 200_000,
) -> LatticeFunction:
    """Positive dual steady state, normalized so integrate(N * phi) = 1."""
    _check_irreducible(gen)
    if steady is None:
        steady = solve_steady(gen, tol=tol, max_iters=max_iters)
    grid = gen.grid
    mu = grid.cell_measure
    c = gen.k_max + 1.0
    gain, loss = gen.gain, gen.loss
    y = np.full(grid.cell_count, 1.0 / grid.cell_count)
    for it in range(1, max_iters + 1):
        if it > 1:
            act = y @ gain - loss * y
            y = y + act / c
            s = y.sum()
            if s <= 0 or not np.isfinite(s):
                raise NoPositiveSteadyState("dual iteration left the positive cone")
            y = y / s
        if it % 16 == 0 or it <= 2:
            pairing = float((steady.values * y).sum() * mu)
            if pairing <= 0:
                continue
            cand = y / pairing
            resid = float(np.max(np.abs(cand @ gain - loss * cand)))
            if resid <= tol:
                if np.any(cand <= 0):
                    raise NoPositiveSteadyState("dual candidate is not strictly positive")
                return LatticeFunction(grid, cand)
    raise NonConvergence(
        f"dual iteration still above tolerance {tol} after {max_iters} iterations"
    )


def make_steady_pair(
    gen: Generator, tol: float = 1e-10, max_iters: int = 200_000
) -> SteadyPair:
    """Solve both balance equations and package the normalized pair."""
    N = solve_steady(gen, tol=tol, max_iters=max_iters)
    phi = solve_dual_steady(gen, steady=N, tol=tol, max_iters=max_iters)
    return SteadyPair(
        N=N,
        phi=phi,
        primal_residual=float(np.max(np.abs(gen.apply(N).values))),
        dual_residual=float(np.max(np.abs(gen.apply_dual(phi).values))),
    )


def compute_rho(phi: LatticeFunction, n0: LatticeFunction) -> float:
    """Conserved pairing of the dual state with the solution: integral of phi * n."""
    if phi.grid != n0.grid:
        raise GridMismatch("operands live on different grids")
    return integrate(phi.grid, LatticeFunction(phi.grid, phi.values * n0.values))


def dissipation_form(gen: Generator, N: LatticeFunction, phi: LatticeFunction) -> np.ndarray:
    """Weight matrix W[i, j] = K_ij * phi_i * N_j * mu**2 of the dissipation form."""
    mu = gen.grid.cell_measure
    return gen.gain * phi.values[:, None] * N.values[None, :] * mu


def estimate_alpha(
    gen: Generator,
    N: LatticeFunction,
    phi: LatticeFunction,
    rtol: float = 1e-8,
    max_iters: int = 50_000,
) -> AlphaEstimate:
    """Best constant alpha with dissipation(u) >= alpha * weighted_l2sq(u).

    The minimum runs over directions u with vanishing weighted mean
    sum_i phi_i N_i u_i mu = 0.  Discretely alpha is the second-smallest
    eigenvalue of the symmetrized dissipation Laplacian against the weight
    diag(phi * N * mu), obtained by inverse iteration with the known zero
    mode deflated.  Single-cell grids admit only u = 0; the estimate is then
    the +inf sentinel.
    """
    grid = gen.grid
    if N.grid != grid or phi.grid != grid:
        raise GridMismatch("steady pair lives on a different grid")
    if np.any(N.values <= 0):
        raise NonPositiveN("steady state must be strictly positive")
    if np.any(phi.values <= 0):
        raise NonPositiveN("dual state must be strictly positive")

    n_cells = grid.cell_count
    if n_cells == 1:
        return AlphaEstimate(
            alpha=math.inf,
            direction=LatticeFunction(grid, np.zeros(1)),
            residual=0.0,
        )

    q = phi.values * N.values * grid.cell_measure
    W = dissipation_form(gen, N, phi)
    lap = np.diag(W.sum(axis=1) + W.sum(axis=0)) - (W + W.T)
    sq = np.sqrt(q)
    S = lap / np.outer(sq, sq)

    w = sq / np.linalg.norm(sq)
    shift = 2.0 * float(np.max(np.diag(S))) + 1.0
    Minv = np.linalg.inv(S + shift * np.outer(w, w))

    x = np.arange(1.0, n_cells + 1.0)
    x -= (w @ x) * w
    x /= np.linalg.norm(x)
    lam_prev = math.inf
    lam = math.inf
    for _ in range(max_iters):
        x = Minv @ x
        x -= (w @ x) * w
        nx = np.linalg.norm(x)
        if nx == 0 or not np.isfinite(nx):
            raise NonConvergence("inverse iteration collapsed")
        x /= nx
        lam = float(x @ (S @ x))
        if lam_prev != math.inf and abs(lam - lam_prev) <= rtol * max(abs(lam), 1e-300):
            break
        lam_prev = lam
    else:
        raise NonConvergence(
            f"alpha iteration still above tolerance after {max_iters} iterations"
        )

    res_vec = S @ x - lam * x
    res_vec -= (w @ res_vec) * w
    residual = float(np.linalg.norm(res_vec))
    direction = LatticeFunction(grid, x / sq)
    return AlphaEstimate(alpha=max(lam, 0.0), direction=direction, residual=residual)
