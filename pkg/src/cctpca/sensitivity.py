"""Trajectory sensitivities of the machine angles along the fault-on period.

Sensitivities are central finite differences taken end to end: each
perturbed parameter vector goes through power flow, network reduction and
integration again, so the chain through the operating point is included.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import (
    DEFAULT_STEP,
    DEFAULT_TOL,
    FaultScenario,
    PowerFlowError,
    Trajectory,
    critical_clearing_time,
    initial_state,
    integrate,
)
from .netmodel import (
    NetworkReductionError,
    ParameterVector,
    PowerSystem,
    Topology,
    reduce_network,
    solve_power_flow,
)

DEFAULT_SAMPLES = 50
DEFAULT_H_REL = 1e-4
DEFAULT_H_ABS = 1e-8
EPS_X = 1e-4


class SensitivityError(RuntimeError):
    pass


@dataclass(frozen=True)
class PerturbationSpec:
    index: int
    h_rel: float = DEFAULT_H_REL
    h_abs: float = DEFAULT_H_ABS

    def __post_init__(self):
        if not (self.h_rel > 0 and self.h_abs > 0):
            raise ValueError("h_rel and h_abs must be positive")

    def step(self, value: float) -> float:
        return max(self.h_rel * abs(value), self.h_abs)


@dataclass(frozen=True)
class SampleGrid:
    """Fault-on integration grid whose every ``stride``-th point is a sample."""

    horizon: float
    n_samples: int
    nsteps: int
    stride: int

    @classmethod
    def build(cls, horizon: float, n_samples: int = DEFAULT_SAMPLES, step: float = DEFAULT_STEP) -> "SampleGrid":
        if n_samples < 2:
            raise ValueError("need at least two samples")
        if not (horizon > 0 and math.isfinite(horizon)):
            raise ValueError("sampling horizon must be positive and finite")
        intervals = n_samples - 1
        stride = max(1, math.ceil(horizon / (step * intervals) - 1e-9))
        return cls(horizon, n_samples, stride * intervals, stride)

    @property
    def step(self) -> float:
        return self.horizon / self.nsteps

    @property
    def times(self) -> np.ndarray:
        return self.step * self.stride * np.arange(self.n_samples)


@dataclass(frozen=True)
class SensitivitySeries:
    times: np.ndarray
    matrices: np.ndarray  # (r, n, m)
    ids: tuple[str, ...]
    steps: np.ndarray  # perturbation actually used per parameter


@dataclass(frozen=True)
class NormalizedSensitivitySeries:
    times: np.ndarray
    matrices: np.ndarray  # (r, n, m), dimensionless
    ids: tuple[str, ...]
    guarded: np.ndarray  # (r, n) bool, rows zeroed because |x_i(t_j)| < eps

    @property
    def guarded_count(self) -> int:
        return int(self.guarded.sum())


def fault_on_run(system: PowerSystem, lam: ParameterVector, scenario: FaultScenario, grid: SampleGrid) -> Trajectory:
    """Fault-on trajectory of ``lam`` on ``grid``, restricted to the sample points."""
    sol = solve_power_flow(system, lam)
    if not sol.converged:
        raise PowerFlowError("power flow did not converge")
    faulted = reduce_network(system, lam, sol, Topology.faulted(scenario.faulted_bus))
    full = integrate(faulted, initial_state(sol, system), grid.horizon, grid.step)
    if full.diverged or len(full) != grid.nsteps + 1:
        raise SensitivityError("fault-on integration diverged")
    sel = slice(0, None, grid.stride)
    return Trajectory(full.times[sel], full.delta[sel], full.omega[sel], "fault_on")


def nominal_horizon(
    system: PowerSystem, lam: ParameterVector, scenario: FaultScenario, tol: float = DEFAULT_TOL, step: float = DEFAULT_STEP
) -> float:
    res = critical_clearing_time(system, lam, scenario, tol=tol, step=step)
    if not res.ok:
        raise SensitivityError("nominal system is stable beyond the clearing horizon; no fault-on window")
    return res.t_cr


def fault_on_samples(
    system: PowerSystem,
    lam: ParameterVector,
    scenario: FaultScenario,
    n_samples: int = DEFAULT_SAMPLES,
    horizon: float | None = None,
    step: float = DEFAULT_STEP,
) -> Trajectory:
    """Nominal fault-on trajectory at ``n_samples`` uniformly spaced grid points on ``[0, T_s]``.

    ``T_s`` defaults to the nominal critical clearing time.
    """
    if horizon is None:
        horizon = nominal_horizon(system, lam, scenario, step=step)
    return fault_on_run(system, lam, scenario, SampleGrid.build(horizon, n_samples, step))


def perturbation_column(
    system: PowerSystem,
    lam: ParameterVector,
    scenario: FaultScenario,
    grid: SampleGrid,
    k: int,
    delta: float,
    retries: int = 3,
) -> tuple[np.ndarray, float]:
    """Central difference of the sampled angles w.r.t. parameter ``k``.

    Returns the (r, n) block and the perturbation used. A failed power flow
    halves the perturbation, at most ``retries`` times.
    """
    for attempt in range(retries + 1):
        v_plus = lam.values.copy()
        v_minus = lam.values.copy()
        v_plus[k] += delta
        v_minus[k] -= delta
        try:
            up = fault_on_run(system, lam.with_values(v_plus), scenario, grid)
            down = fault_on_run(system, lam.with_values(v_minus), scenario, grid)
        except (PowerFlowError, NetworkReductionError):
            if attempt == retries:
                break
            delta *= 0.5
            continue
        return (up.delta - down.delta) / (2.0 * delta), delta
    raise SensitivityError(f"parameter {lam.ids[k]}: perturbed power flow failed after {retries} step halvings")


def _column_task(args):
    return perturbation_column(*args)


def sensitivity_series(
    system: PowerSystem,
    lam: ParameterVector,
    scenario: FaultScenario,
    horizon: float | None = None,
    n_samples: int = DEFAULT_SAMPLES,
    h_rel: float = DEFAULT_H_REL,
    h_abs: float = DEFAULT_H_ABS,
    step: float = DEFAULT_STEP,
    specs: dict[int, PerturbationSpec] | None = None,
    workers: int = 1,
) -> SensitivitySeries:
    """Angle sensitivities S_j (machines x parameters) at every fault-on sample.

    ``specs`` overrides the perturbation rule for individual parameters.
    """
    if horizon is None:
        horizon = nominal_horizon(system, lam, scenario, step=step)
    grid = SampleGrid.build(horizon, n_samples, step)
    specs = specs or {}
    tasks = []
    for k, value in enumerate(lam.values):
        spec = specs.get(k, PerturbationSpec(k, h_rel, h_abs))
        tasks.append((system, lam, scenario, grid, k, spec.step(value)))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_column_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_column_task(t) for t in tasks]

    r, n = grid.n_samples, len(system.generators)
    S = np.empty((r, n, len(lam)))
    steps = np.empty(len(lam))
    for k, (block, used) in enumerate(results):
        S[:, :, k] = block
        steps[k] = used
    return SensitivitySeries(grid.times, S, lam.ids, steps)


def normalize(
    series: SensitivitySeries,
    nominal: Trajectory,
    lam: ParameterVector,
    eps_x: float = EPS_X,
) -> NormalizedSensitivitySeries:
    """Scale entry (i, k) of S_j by lambda_k / x_i(t_j).

    Rows whose nominal angle is within ``eps_x`` of zero are set to zero and
    flagged in ``guarded``.
    """
    x = np.asarray(nominal.delta, dtype=float)
    if x.shape != series.matrices.shape[:2]:
        raise ValueError("nominal trajectory does not match the sensitivity sample grid")
    guarded = np.abs(x) < eps_x
    inv_x = np.where(guarded, 0.0, 1.0 / np.where(guarded, 1.0, x))
    lam_v = np.asarray(lam.values, dtype=float)
    out = series.matrices * inv_x[:, :, None] * lam_v[None, None, :]
    return NormalizedSensitivitySeries(series.times, out, series.ids, guarded)


def write_series_csv(directory: str | Path, series, prefix: str = "S") -> list[Path]:
    """One CSV per sample time: rows are machines, columns parameter ids."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for j, (t, mat) in enumerate(zip(series.times, series.matrices)):
        path = directory / f"{prefix}_{j:03d}.csv"
        header = "machine," + ",".join(series.ids)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# t={float(t)!r}\n{header}\n")
            for i, row in enumerate(mat):
                fh.write(f"{i + 1}," + ",".join(repr(float(v)) for v in row) + "\n")
        paths.append(path)
    return paths
