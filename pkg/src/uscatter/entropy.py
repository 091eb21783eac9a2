"""Convex entropies, relative entropy, dissipation identity, decay-rate fitting.

For a convex H, a steady pair (N, phi), and a solution n, the weighted
relative entropy sum_i phi_i N_i H(n_i / N_i) mu is non-increasing in time,
and its exact time derivative equals a double sum over cell pairs weighted
by the kernel -- the general-relative-entropy identity.  This module
evaluates both sides, checks them against each other along trajectories,
and fits empirical exponential decay rates.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    GridMismatch,
    InsufficientSamples,
    NonPositiveN,
    NonPositiveValue,
)
from .kernel import KernelMatrix
from .padic_core import Grid, LatticeFunction


@dataclass(frozen=True)
class EntropyFn:
    """Convex function with its derivative, vectorized over numpy arrays."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]


def linear() -> EntropyFn:
    """H(u) = u; turns the relative entropy into the conserved pairing."""
    return EntropyFn("linear", lambda u: u, lambda u: np.ones_like(u))


def absolute() -> EntropyFn:
    """H(u) = |u|; drives the weighted L1 contraction statements."""
    return EntropyFn("abs", np.abs, np.sign)


def square() -> EntropyFn:
    """H(u) = u**2; drives the exponential-decay estimates."""
    return EntropyFn("square", np.square, lambda u: 2.0 * u)


def pos_part_sq(c: float) -> EntropyFn:
    """H(u) = ((u - c)_+)**2; enforces the upper maximum-principle bound."""
    c = float(c)
    return EntropyFn(
        "pos_part_sq",
        lambda u: np.square(np.maximum(u - c, 0.0)),
        lambda u: 2.0 * np.maximum(u - c, 0.0),
    )


def neg_part_sq(c: float) -> EntropyFn:
    """H(u) = ((c - u)_+)**2; enforces the lower maximum-principle bound."""
    c = float(c)
    return EntropyFn(
        "neg_part_sq",
        lambda u: np.square(np.maximum(c - u, 0.0)),
        lambda u: -2.0 * np.maximum(c - u, 0.0),
    )


def smoothed_sign(delta: float) -> EntropyFn:
    """Smooth convex approximation of the positive part.

    H_delta(u) = (sqrt(u**2 + delta**2) + u) / 2 has derivative in [0, 1]
    and decreases pointwise to u_+ as delta -> 0.
    """
    d2 = float(delta) ** 2
    return EntropyFn(
        "smoothed_sign",
        lambda u: 0.5 * (np.sqrt(u * u + d2) + u),
        lambda u: 0.5 * (u / np.sqrt(u * u + d2) + 1.0),
    )


def _ratio(n: LatticeFunction, N: LatticeFunction) -> np.ndarray:
    if np.any(N.values <= 0):
        raise NonPositiveN("reference steady state must be strictly positive")
    return n.values / N.values


def relative_entropy(
    grid: Grid,
    phi: LatticeFunction,
    N: LatticeFunction,
    n: LatticeFunction,
    H: EntropyFn,
) -> float:
    """Weighted relative entropy sum_i phi_i N_i H(n_i / N_i) mu."""
    for f in (phi, N, n):
        if f.grid != grid:
            raise GridMismatch("operands live on different grids")
    u = _ratio(n, N)
    return float((phi.values * N.values * H.value(u)).sum() * grid.cell_measure)


def gre_dissipation_rhs(
    kmat: KernelMatrix,
    grid: Grid,
    phi: LatticeFunction,
    N: LatticeFunction,
    n: LatticeFunction,
    H: EntropyFn,
) -> float:
    """Exact dissipation rate of the weighted relative entropy.

    Returns sum_{i,j} K_ij phi_i N_j mu^2 [H'(u_i)(u_j - u_i) + H(u_i) - H(u_j)]
    with u = n / N.  Convexity makes every bracket nonpositive, so the total
    is <= 0 for any state, steady or not.
    """
    if kmat.grid != grid:
        raise GridMismatch("kernel matrix lives on a different grid")
    for f in (phi, N, n):
        if f.grid != grid:
            raise GridMismatch("operands live on different grids")
    u = _ratio(n, N)
    mu = grid.cell_measure
    weights = kmat.entries * phi.values[:, None] * N.values[None, :] * (mu * mu)
    hu = H.value(u)
    bracket = H.deriv(u)[:, None] * (u[None, :] - u[:, None]) + hu[:, None] - hu[None, :]
    return float((weights * bracket).sum())


@dataclass(frozen=True)
class EntropyProductionReport:
    """Finite-difference entropy derivative against the dissipation identity."""

    times: np.ndarray
    entropy: np.ndarray
    rhs: np.ndarray
    derivative: np.ndarray
    max_mismatch: float
    monotone: bool
    passed: bool


def entropy_production_check(
    kmat: KernelMatrix,
    trajectory,
    phi: LatticeFunction,
    N: LatticeFunction,
    H: EntropyFn,
    tol: float = 1e-5,
    mono_tol: float = 1e-12,
) -> EntropyProductionReport:
    """Verify d/dt of the relative entropy against the dissipation identity.

    At each interior sample the centered difference of the entropy series is
    compared with the Simpson average of the identity's right-hand side over
    the same stencil, which matches it to fourth order in the sample spacing;
    mismatches above tol fail the report.  Endpoint derivatives are estimated
    one-sidedly and reported but not gated.  Monotonicity of the entropy
    itself is asserted within mono_tol per step (H is assumed convex).
    """
    times = np.asarray(trajectory.times, dtype=float)
    states = trajectory.states
    if len(states) < 3:
        raise InsufficientSamples("need at least 3 samples for centered differences")
    grid = kmat.grid
    ent = np.array([relative_entropy(grid, phi, N, s, H) for s in states])
    rhs = np.array([gre_dissipation_rhs(kmat, grid, phi, N, s, H) for s in states])

    deriv = np.empty_like(ent)
    deriv[0] = (-3.0 * ent[0] + 4.0 * ent[1] - ent[2]) / (times[2] - times[0])
    deriv[-1] = (3.0 * ent[-1] - 4.0 * ent[-2] + ent[-3]) / (times[-1] - times[-3])
    deriv[1:-1] = (ent[2:] - ent[:-2]) / (times[2:] - times[:-2])

    max_mismatch = 0.0
    spacing = np.diff(times)
    for k in range(1, len(ent) - 1):
        if not np.isclose(spacing[k - 1], spacing[k], rtol=1e-9, atol=0.0):
            continue  # irregular final interval: no Simpson stencil
        rhs_avg = (rhs[k - 1] + 4.0 * rhs[k] + rhs[k + 1]) / 6.0
        max_mismatch = max(max_mismatch, abs(deriv[k] - rhs_avg))

    increments = np.diff(ent)
    monotone = bool(increments.max(initial=0.0) <= mono_tol)
    return EntropyProductionReport(
        times=times,
        entropy=ent,
        rhs=rhs,
        derivative=deriv,
        max_mismatch=max_mismatch,
        monotone=monotone,
        passed=bool(max_mismatch <= tol and monotone),
    )


def fit_decay_rate(times: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares exponential decay rate: slope of -log(values) against t.

    A pure series c * exp(-a t) returns a exactly (up to rounding).
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError("times and values must be 1-d of equal length")
    if len(t) < 2:
        raise InsufficientSamples("need at least 2 samples to fit a rate")
    if np.any(v <= 0):
        raise NonPositiveValue("decay fitting requires strictly positive values")
    return float(np.polyfit(t, -np.log(v), 1)[0])


@dataclass(frozen=True)
class DiagnosticsRow:
    """Monitored quantities of one sampled state."""

    t: float
    mass: float
    l1: float
    weighted_l2sq: float
    rel_entropy_square: float
    rel_entropy_abs: float
    min_n: float
    max_ratio: float
    min_ratio: float


DIAGNOSTICS_HEADER = (
    "t,mass,l1,weighted_l2sq,rel_entropy_square,rel_entropy_abs,"
    "min_n,max_ratio,min_ratio"
)


def diagnostics(grid: Grid, n: LatticeFunction, steady, t: float = 0.0) -> DiagnosticsRow:
    """Assemble the standard monitored quantities of a state against a steady pair.

    weighted_l2sq is evaluated on the mean-free part h = n - rho * N with
    rho the conserved pairing of the given state; the two relative-entropy
    columns are evaluated on n itself.
    """
    from .spectral import compute_rho  # local import; spectral depends on generator only

    N, phi = steady.N, steady.phi
    if n.grid != grid or N.grid != grid or phi.grid != grid:
        raise GridMismatch("operands live on different grids")
    mu = grid.cell_measure
    rho = compute_rho(phi, n)
    h = n.values - rho * N.values
    ratio = _ratio(n, N)
    weighted_l2sq = float((phi.values * N.values * np.square(h / N.values)).sum() * mu)
    return DiagnosticsRow(
        t=float(t),
        mass=float(n.values.sum() * mu),
        l1=float(np.abs(n.values).sum() * mu),
        weighted_l2sq=weighted_l2sq,
        rel_entropy_square=relative_entropy(grid, phi, N, n, square()),
        rel_entropy_abs=relative_entropy(grid, phi, N, n, absolute()),
        min_n=float(n.values.min()),
        max_ratio=float(ratio.max()),
        min_ratio=float(ratio.min()),
    )


def write_diagnostics_csv(rows: Sequence[DiagnosticsRow], path, comment: str | None = None) -> None:
    """Write diagnostics rows with the pinned CSV header."""
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(DIAGNOSTICS_HEADER + "\n")
        for r in rows:
            fh.write(
                ",".join(
                    repr(float(x))
                    for x in (
                        r.t,
                        r.mass,
                        r.l1,
                        r.weighted_l2sq,
                        r.rel_entropy_square,
                        r.rel_entropy_abs,
                        r.min_n,
                        r.max_ratio,
                        r.min_ratio,
                    )
                )
                + "\n"
            )
