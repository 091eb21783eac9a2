"""Flat line-oriented experiment configuration: `section.key = value`.

One experiment per file.  Lines are `key = value` with dotted section keys;
blank lines and `#` comments are ignored.  Relative file paths resolve
against the config file's directory.  All configured randomness flows from
the single 64-bit run.seed through one splitmix64 stream, consumed in a
fixed documented order: kernel synthesis first, then the initial datum,
then the stability comparison datum.

Recognized keys (defaults in parentheses):

    grid.p, grid.n, grid.M, grid.m          lattice parameters (required)
    kernel.variant                          constant | radial | table |
                                            projection | symmetric |
                                            detailed_balance | time_dependent
    kernel.value (1.0)                      constant kernel level
    kernel.profile                          radial: indicator | inverse_power |
                                            exp_decay
    kernel.radius (1.0), kernel.exponent (1.0), kernel.diagonal (0.0)
    kernel.csv                              table / symmetric / detailed_balance
    kernel.weight_csv, kernel.steady_csv    explicit construction inputs
    kernel.synthetic (false)                draw construction inputs from seed
    kernel.base_variant, kernel.modulation  time_dependent wrapper
    kernel.modulation_rate (1.0)            rate of the exp_decay modulation
    generator.k_mode (column_sum)           column_sum | analytic
    generator.analytic_k_value / _csv       loss profile for analytic mode
    initial.variant                         indicator | steady_perturbation |
                                            random_positive | csv
    initial.cell (0), initial.mass (1.0), initial.amplitude (0.5)
    initial.csv
    stability.*                             same keys as initial.* (second datum)
    integrator.method (rk4), integrator.dt, integrator.picard_iterations (60),
    integrator.expm_tol (1e-13)
    run.t_end (1.0), run.sample_every (1), run.seed (0),
    run.rescale_level (0), run.fit_t_max (t_end)
"""
from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernel as kernel_mod
from .errors import ConfigError
from .generator import ANALYTIC, COLUMN_SUM
from .kernel import (
    ConstantKernel,
    DetailedBalanceKernel,
    KernelSpec,
    ProjectionKernel,
    RadialKernel,
    SymmetricKernel,
    TableKernel,
    TimeDependentKernel,
    load_kernel_table,
)
from .dynamics import IntegratorSpec
from .padic_core import Grid, LatticeFunction, build_grid, constant_function, integrate
from .rng import SplitMix64


@dataclass
class ExperimentConfig:
    """Parsed key-value pairs plus provenance of the source text."""

    pairs: dict[str, str]
    sha256: str
    base_dir: str

    def has(self, key: str) -> bool:
        return key in self.pairs

    def get_str(self, key: str, default: str | None = None) -> str:
        if key in self.pairs:
            return self.pairs[key]
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default

    def get_int(self, key: str, default: int | None = None) -> int:
        raw = self.get_str(key, None if default is None else str(default))
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r} must be an integer, got {raw!r}") from exc

    def get_float(self, key: str, default: float | None = None) -> float:
        raw = self.get_str(key, None if default is None else repr(default))
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r} must be a number, got {raw!r}") from exc

    def get_bool(self, key: str, default: bool = False) -> bool:
        raw = self.get_str(key, "true" if default else "false").lower()
        if raw in ("true", "yes", "1", "on"):
            return True
        if raw in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"config key {key!r} must be a boolean, got {raw!r}")

    def resolve_path(self, raw: str) -> str:
        return raw if os.path.isabs(raw) else os.path.join(self.base_dir, raw)


def parse_config(path: str) -> ExperimentConfig:
    """Read and validate a flat config file; raises ConfigError on problems."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if not key or "." not in key:
            raise ConfigError(f"{path}:{lineno}: keys must look like section.name")
        if key in pairs:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        pairs[key] = value
    canonical = "".join(f"{k}={v}\n" for k, v in sorted(pairs.items()))
    digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
    return ExperimentConfig(
        pairs=pairs, sha256=digest, base_dir=os.path.dirname(os.path.abspath(path))
    )


def _load_lattice_csv(path: str, grid: Grid) -> LatticeFunction:
    values = np.loadtxt(path, delimiter=",", comments="#", dtype=float)
    values = np.atleast_1d(values)
    if values.ndim != 1 or values.shape[0] != grid.cell_count:
        raise ConfigError(
            f"{path}: expected one column of {grid.cell_count} values, got shape {values.shape}"
        )
    return LatticeFunction(grid, values)


_RADIAL_PROFILES: dict[str, Callable[[ExperimentConfig], Callable[[float], float]]] = {
    "indicator": lambda cfg: (
        lambda r, _rad=cfg.get_float("kernel.radius", 1.0): 1.0 if r <= _rad else 0.0
    ),
    "inverse_power": lambda cfg: (
        lambda r, _a=cfg.get_float("kernel.exponent", 1.0): (1.0 + r) ** (-_a)
    ),
    "exp_decay": lambda cfg: (
        lambda r, _a=cfg.get_float("kernel.exponent", 1.0): math.exp(-_a * r)
    ),
}


def _synthetic_steady(grid: Grid, stream: SplitMix64) -> LatticeFunction:
    raw = np.array([0.5 + stream.next_unit() for _ in range(grid.cell_count)])
    return LatticeFunction(grid, raw / (raw.sum() * grid.cell_measure))


def _synthetic_symmetric(grid: Grid, stream: SplitMix64) -> np.ndarray:
    N = grid.cell_count
    table = np.empty((N, N))
    for i in range(N):
        for j in range(i, N):
            table[i, j] = table[j, i] = 0.1 + stream.next_unit()
    return table


def _build_kernel(
    cfg: ExperimentConfig, grid: Grid, stream: SplitMix64, prefix: str = "kernel"
) -> KernelSpec:
    variant = cfg.get_str(f"{prefix}.variant", "constant")
    if variant == "constant":
        return ConstantKernel(cfg.get_float(f"{prefix}.value", 1.0))
    if variant == "radial":
        profile_name = cfg.get_str(f"{prefix}.profile")
        if profile_name not in _RADIAL_PROFILES:
            raise ConfigError(
                f"unknown radial profile {profile_name!r}; "
                f"expected one of {sorted(_RADIAL_PROFILES)}"
            )
        return RadialKernel(
            profile=_RADIAL_PROFILES[profile_name](cfg),
            diagonal=cfg.get_float(f"{prefix}.diagonal", 0.0),
        )
    if variant == "table":
        return load_kernel_table(cfg.resolve_path(cfg.get_str(f"{prefix}.csv")), grid)
    if variant in ("projection", "symmetric", "detailed_balance"):
        synthetic = cfg.get_bool(f"{prefix}.synthetic", False)
        if cfg.has(f"{prefix}.steady_csv"):
            steady = _load_lattice_csv(cfg.resolve_path(cfg.get_str(f"{prefix}.steady_csv")), grid)
        elif synthetic:
            steady = _synthetic_steady(grid, stream)
        else:
            raise ConfigError(
                f"{variant} kernel needs {prefix}.steady_csv or {prefix}.synthetic = true"
            )
        if variant == "projection":
            if cfg.has(f"{prefix}.weight_csv"):
                weight = _load_lattice_csv(
                    cfg.resolve_path(cfg.get_str(f"{prefix}.weight_csv")), grid
                )
            else:
                # uniform acceptance profile: pairs to 1 against any unit-mass steady
                weight = constant_function(grid, 1.0)
            return ProjectionKernel(weight=weight, steady=steady)
        if cfg.has(f"{prefix}.csv"):
            table = np.loadtxt(
                cfg.resolve_path(cfg.get_str(f"{prefix}.csv")), delimiter=",", comments="#",
                dtype=float, ndmin=2,
            )
        elif synthetic:
            table = _synthetic_symmetric(grid, stream)
        else:
            raise ConfigError(f"{variant} kernel needs {prefix}.csv or {prefix}.synthetic = true")
        if variant == "symmetric":
            return SymmetricKernel(table=table, steady=steady)
        return DetailedBalanceKernel(table=table, steady=steady)
    if variant == "time_dependent":
        base_variant = cfg.get_str(f"{prefix}.base_variant", "constant")
        if base_variant == "time_dependent":
            raise ConfigError("time-dependent kernels cannot be nested")
        inner_pairs = dict(cfg.pairs)
        inner_pairs[f"{prefix}.variant"] = base_variant
        inner = ExperimentConfig(pairs=inner_pairs, sha256=cfg.sha256, base_dir=cfg.base_dir)
        base = _build_kernel(inner, grid, stream, prefix)
        mod_name = cfg.get_str(f"{prefix}.modulation", "one")
        if mod_name == "one":
            modulation = lambda t: 1.0  # noqa: E731
        elif mod_name == "exp_decay":
            rate = cfg.get_float(f"{prefix}.modulation_rate", 1.0)
            modulation = lambda t, _r=rate: math.exp(-_r * t)  # noqa: E731
        else:
            raise ConfigError(f"unknown modulation {mod_name!r}; expected one | exp_decay")
        return TimeDependentKernel(base=base, modulation=modulation)
    raise ConfigError(f"unknown kernel variant {variant!r}")


def _build_initial(
    cfg: ExperimentConfig,
    grid: Grid,
    stream: SplitMix64,
    steady: LatticeFunction | None,
    prefix: str,
) -> LatticeFunction:
    variant = cfg.get_str(f"{prefix}.variant", "indicator")
    if variant == "indicator":
        cell = cfg.get_int(f"{prefix}.cell", 0)
        mass = cfg.get_float(f"{prefix}.mass", 1.0)
        if not 0 <= cell < grid.cell_count:
            raise ConfigError(f"{prefix}.cell = {cell} outside [0, {grid.cell_count})")
        values = np.zeros(grid.cell_count)
        values[cell] = mass / grid.cell_measure
        return LatticeFunction(grid, values)
    if variant == "steady_perturbation":
        if steady is None:
            raise ConfigError(
                f"{prefix}.variant = steady_perturbation requires a solvable steady state"
            )
        amplitude = cfg.get_float(f"{prefix}.amplitude", 0.5)
        noise = np.array(
            [2.0 * stream.next_unit() - 1.0 for _ in range(grid.cell_count)]
        )
        return LatticeFunction(grid, steady.values * (1.0 + amplitude * noise))
    if variant == "random_positive":
        values = np.array([stream.next_unit() for _ in range(grid.cell_count)])
        return LatticeFunction(grid, values)
    if variant == "csv":
        return _load_lattice_csv(cfg.resolve_path(cfg.get_str(f"{prefix}.csv")), grid)
    raise ConfigError(f"unknown initial-data variant {variant!r}")


@dataclass
class Experiment:
    """Everything the runner needs, assembled from one config."""

    cfg: ExperimentConfig
    grid: Grid
    spec: KernelSpec
    k_mode: str
    analytic_k: LatticeFunction | None
    integrator: IntegratorSpec
    seed: int
    t_end: float
    sample_every: int
    rescale_level: int
    fit_t_max: float
    _stream: SplitMix64 = field(repr=False, default=None)
    _steady_cache: object = field(repr=False, default=None)

    def provenance(self) -> str:
        return (
            f"uscatter p={self.grid.p} n={self.grid.n} M={self.grid.M} m={self.grid.m} "
            f"k_mode={self.k_mode} config_sha256={self.cfg.sha256}"
        )

    def generator(self):
        from .generator import assemble_spec

        return assemble_spec(self.spec, self.grid, self.k_mode, self.analytic_k)

    def steady_pair(self):
        from .dynamics import _base_generator
        from .spectral import make_steady_pair

        if self._steady_cache is None:
            self._steady_cache = make_steady_pair(_base_generator(self.generator()))
        return self._steady_cache

    def initial(self) -> LatticeFunction:
        steady = self._maybe_steady()
        return _build_initial(self.cfg, self.grid, self._stream, steady, "initial")

    def stability_initial(self) -> LatticeFunction:
        if not any(k.startswith("stability.") for k in self.cfg.pairs):
            raise ConfigError("stability runs need stability.* initial-data keys")
        steady = self._maybe_steady()
        return _build_initial(self.cfg, self.grid, self._stream, steady, "stability")

    def _maybe_steady(self) -> LatticeFunction | None:
        wants = "steady_perturbation" in (
            self.cfg.get_str("initial.variant", "indicator"),
            self.cfg.get_str("stability.variant", "-"),
        )
        if not wants or self.k_mode != COLUMN_SUM:
            return None
        return self.steady_pair().N


def load_experiment(cfg: ExperimentConfig) -> Experiment:
    """Build grid, kernel, integrator, and run options from parsed pairs."""
    grid = build_grid(
        cfg.get_int("grid.p"),
        cfg.get_int("grid.n"),
        cfg.get_int("grid.M"),
        cfg.get_int("grid.m"),
    )
    seed = cfg.get_int("run.seed", 0)
    stream = SplitMix64(seed)
    spec = _build_kernel(cfg, grid, stream)
    k_mode = cfg.get_str("generator.k_mode", COLUMN_SUM)
    if k_mode not in (COLUMN_SUM, ANALYTIC):
        raise ConfigError(f"generator.k_mode must be column_sum or analytic, got {k_mode!r}")
    analytic_k = None
    if k_mode == ANALYTIC:
        if cfg.has("generator.analytic_k_csv"):
            analytic_k = _load_lattice_csv(
                cfg.resolve_path(cfg.get_str("generator.analytic_k_csv")), grid
            )
        else:
            analytic_k = constant_function(grid, cfg.get_float("generator.analytic_k_value"))
    method = cfg.get_str("integrator.method", "rk4")
    if method not in ("rk4", "expm_oracle", "picard"):
        raise ConfigError(f"unknown integrator.method {method!r}")
    integrator = IntegratorSpec(
        method=method,
        dt=cfg.get_float("integrator.dt") if cfg.has("integrator.dt") else None,
        picard_iterations=cfg.get_int("integrator.picard_iterations", 60),
        expm_tol=cfg.get_float("integrator.expm_tol", 1e-13),
    )
    t_end = cfg.get_float("run.t_end", 1.0)
    if t_end <= 0:
        raise ConfigError("run.t_end must be positive")
    sample_every = cfg.get_int("run.sample_every", 1)
    if sample_every < 1:
        raise ConfigError("run.sample_every must be >= 1")
    rescale_level = cfg.get_int("run.rescale_level", 0)
    if rescale_level < 0:
        raise ConfigError("run.rescale_level must be >= 0")
    fit_t_max = cfg.get_float("run.fit_t_max", t_end)
    exp = Experiment(
        cfg=cfg,
        grid=grid,
        spec=spec,
        k_mode=k_mode,
        analytic_k=analytic_k,
        integrator=integrator,
        seed=seed,
        t_end=t_end,
        sample_every=sample_every,
        rescale_level=rescale_level,
        fit_t_max=fit_t_max,
    )
    exp._stream = stream
    return exp
