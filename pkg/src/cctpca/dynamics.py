"""Classical swing-equation dynamics in the centre-of-inertia frame.

Each machine carries an angle ``delta`` (rad, relative to the inertia-weighted
centre of inertia) and a per-unit speed deviation ``omega``::

    d(delta_i)/dt = w_s * omega_i
    M_i d(omega_i)/dt = Pm_i - Pe_i(delta) - D_i omega_i - (M_i / M_T) * P_coi

with ``P_coi = sum_k (Pm_k - Pe_k - D_k omega_k)``. Machines with infinite
inertia are held fixed and define the reference on their own.

The integrator is fixed-step RK4. A period of length ``T`` is split into
``ceil(T / step)`` equal steps, so every period has a uniform grid no coarser
than ``step``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .netmodel import (
    ParameterVector,
    PowerFlowSolution,
    PowerSystem,
    ReducedNetwork,
    Topology,
    internal_emf,
    reduce_network,
    solve_power_flow,
)

DEFAULT_STEP = 1e-3
DEFAULT_TOL = 1e-4
DEFAULT_MAX_CLEARING = 2.0
DEFAULT_HORIZON = 5.0
ANGLE_LIMIT = math.pi

OK, UNSTABLE, OVERFLOW = 0, 1, 2


class PowerFlowError(RuntimeError):
    pass


class UnstableAtZeroClearing(RuntimeError):
    pass


@dataclass(frozen=True)
class MachineState:
    delta: np.ndarray
    omega: np.ndarray

    def coi_angle(self, inertia: np.ndarray) -> float:
        return float(np.dot(_coi_weights(inertia), self.delta))


@dataclass(frozen=True)
class FaultScenario:
    faulted_bus: int
    cleared_line: str
    max_clearing_time: float = DEFAULT_MAX_CLEARING
    post_fault_horizon: float = DEFAULT_HORIZON
    name: str = ""

    def __post_init__(self):
        if not (self.max_clearing_time > 0 and self.post_fault_horizon > 0):
            raise ValueError("scenario horizons must be positive")


CASES = {
    "I": FaultScenario(1, "1-5", name="I"),
    "II": FaultScenario(9, "4-9", name="II"),
    "III": FaultScenario(2, "2-5", name="III"),
}


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    delta: np.ndarray  # (k, n)
    omega: np.ndarray  # (k, n)
    period: str = "fault_on"
    diverged: bool = False

    def __len__(self) -> int:
        return len(self.times)

    def state(self, i: int) -> MachineState:
        return MachineState(self.delta[i].copy(), self.omega[i].copy())

    @property
    def final(self) -> MachineState:
        return self.state(-1)


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    max_coi_angle: float
    diverged_at: float | None = None


# ---------------------------------------------------------------------------
# numerical kernel


@njit(cache=True)
def _rhs(delta, omega, G, B, E, pm, minv, damp, inv_mt, ws, dd, dw):
    n = delta.shape[0]
    vr = np.empty(n)
    vi = np.empty(n)
    for i in range(n):
        vr[i] = E[i] * math.cos(delta[i])
        vi[i] = E[i] * math.sin(delta[i])
    acc = np.empty(n)
    pcoi = 0.0
    for i in range(n):
        ir = 0.0
        ii = 0.0
        for j in range(n):
            ir += G[i, j] * vr[j] - B[i, j] * vi[j]
            ii += G[i, j] * vi[j] + B[i, j] * vr[j]
        acc[i] = pm[i] - (vr[i] * ir + vi[i] * ii) - damp[i] * omega[i]
        pcoi += acc[i]
    for i in range(n):
        dd[i] = ws * omega[i]
        if minv[i] > 0.0:
            dw[i] = acc[i] * minv[i] - pcoi * inv_mt
        else:
            dw[i] = 0.0


@njit(cache=True)
def _rk4(delta0, omega0, G, B, E, pm, minv, damp, inv_mt, ws, h, nsteps, store, limit):
    """Integrate ``nsteps`` RK4 steps of size ``h``.

    Returns (samples, n_done, status, max_abs_angle). ``samples`` holds every
    state when ``store`` is set, otherwise only the last one. Integration
    stops early once ``|delta|`` exceeds ``limit`` (status UNSTABLE) or a
    state turns non-finite (status OVERFLOW).
    """
    n = delta0.shape[0]
    rows = nsteps + 1 if store else 1
    out = np.empty((rows, 2 * n))
    d = delta0.copy()
    w = omega0.copy()
    k1d = np.empty(n)
    k1w = np.empty(n)
    k2d = np.empty(n)
    k2w = np.empty(n)
    k3d = np.empty(n)
    k3w = np.empty(n)
    k4d = np.empty(n)
    k4w = np.empty(n)
    td = np.empty(n)
    tw = np.empty(n)

    peak = 0.0
    for i in range(n):
        out[0, i] = d[i]
        out[0, n + i] = w[i]
        peak = max(peak, abs(d[i]))
    status = 0
    if peak > limit:
        return out, 0, 1, peak

    done = 0
    for s in range(nsteps):
        _rhs(d, w, G, B, E, pm, minv, damp, inv_mt, ws, k1d, k1w)
        for i in range(n):
            td[i] = d[i] + 0.5 * h * k1d[i]
            tw[i] = w[i] + 0.5 * h * k1w[i]
        _rhs(td, tw, G, B, E, pm, minv, damp, inv_mt, ws, k2d, k2w)
        for i in range(n):
            td[i] = d[i] + 0.5 * h * k2d[i]
            tw[i] = w[i] + 0.5 * h * k2w[i]
        _rhs(td, tw, G, B, E, pm, minv, damp, inv_mt, ws, k3d, k3w)
        for i in range(n):
            td[i] = d[i] + h * k3d[i]
            tw[i] = w[i] + h * k3w[i]
        _rhs(td, tw, G, B, E, pm, minv, damp, inv_mt, ws, k4d, k4w)
        finite = True
        step_peak = 0.0
        for i in range(n):
            d[i] += h / 6.0 * (k1d[i] + 2.0 * k2d[i] + 2.0 * k3d[i] + k4d[i])
            w[i] += h / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i])
            if not (math.isfinite(d[i]) and math.isfinite(w[i])):
                finite = False
            step_peak = max(step_peak, abs(d[i]))
        if not finite:
            status = 2
            break
        done = s + 1
        row = done if store else 0
        for i in range(n):
            out[row, i] = d[i]
            out[row, n + i] = w[i]
        peak = max(peak, step_peak)
        if step_peak > limit:
            status = 1
            break
    return out, done, status, peak


def _coi_weights(inertia: np.ndarray) -> np.ndarray:
    inertia = np.asarray(inertia, dtype=float)
    fixed = np.isinf(inertia)
    if fixed.any():
        return fixed / fixed.sum()
    return inertia / inertia.sum()


def coi_project(delta_abs: np.ndarray, inertia: np.ndarray) -> np.ndarray:
    """Absolute rotor angles -> angles relative to the centre of inertia."""
    delta_abs = np.asarray(delta_abs, dtype=float)
    return delta_abs - np.dot(_coi_weights(inertia), delta_abs)


def _kernel_args(network: ReducedNetwork):
    M = np.asarray(network.inertia, dtype=float)
    finite = np.isfinite(M)
    minv = np.where(finite, 1.0 / np.where(finite, M, 1.0), 0.0)
    inv_mt = 0.0 if (~finite).any() else 1.0 / M.sum()
    return (
        np.ascontiguousarray(network.y_red.real),
        np.ascontiguousarray(network.y_red.imag),
        np.abs(network.internal_emf).astype(float),
        np.asarray(network.mechanical_power, dtype=float),
        minv,
        np.asarray(network.damping, dtype=float),
        inv_mt,
        2.0 * math.pi * network.frequency,
    )


def _grid(t_span: float, step: float) -> tuple[int, float]:
    if not step > 0:
        raise ValueError("step must be positive")
    if not t_span > 0:
        raise ValueError("time span must be positive")
    nsteps = max(1, math.ceil(t_span / step - 1e-9))
    return nsteps, t_span / nsteps


def _run(network, state0, t_span, step, store=True, limit=math.inf):
    nsteps, h = _grid(t_span, step)
    out, done, status, peak = _rk4(
        np.asarray(state0.delta, dtype=float),
        np.asarray(state0.omega, dtype=float),
        *_kernel_args(network),
        h,
        nsteps,
        store,
        limit,
    )
    return out, done, status, peak, h


def integrate(
    network: ReducedNetwork,
    state0: MachineState,
    t_span: float,
    step: float = DEFAULT_STEP,
    t0: float = 0.0,
    period: str = "fault_on",
) -> Trajectory:
    """Fixed-step RK4 trajectory over ``[t0, t0 + t_span]``.

    A non-finite state truncates the trajectory and sets ``diverged``.
    """
    if t_span < step * (1 - 1e-12):
        raise ValueError("t_span must be at least one step")
    out, done, status, _, h = _run(network, state0, t_span, step)
    n = network.n
    times = t0 + h * np.arange(done + 1)
    return Trajectory(times, out[: done + 1, :n], out[: done + 1, n:], period, diverged=status == OVERFLOW)


# ---------------------------------------------------------------------------
# scenarios


def initial_state(solution: PowerFlowSolution, system: PowerSystem) -> MachineState:
    """Pre-fault equilibrium: internal EMF angles shifted to the COI frame, zero speed."""
    if not solution.converged:
        raise PowerFlowError("power flow did not converge")
    delta_abs = np.angle(internal_emf(system, solution))
    n = len(system.generators)
    return MachineState(coi_project(delta_abs, system.inertia), np.zeros(n))


def derivative(network: ReducedNetwork, state: MachineState) -> tuple[np.ndarray, np.ndarray]:
    """Vector field of the swing equations at ``state``."""
    n = network.n
    dd, dw = np.empty(n), np.empty(n)
    _rhs(np.asarray(state.delta, float), np.asarray(state.omega, float), *_kernel_args(network), dd, dw)
    return dd, dw


@dataclass(frozen=True)
class PreparedScenario:
    """Everything a clearing-time sweep needs, computed once per parameter vector."""

    scenario: FaultScenario
    solution: PowerFlowSolution
    prefault: ReducedNetwork
    faulted: ReducedNetwork
    postfault: ReducedNetwork
    state0: MachineState
    inertia: np.ndarray = field(repr=False)


def prepare_scenario(system: PowerSystem, lam: ParameterVector, scenario: FaultScenario) -> PreparedScenario:
    sol = solve_power_flow(system, lam)
    if not sol.converged:
        raise PowerFlowError(f"power flow did not converge (mismatch {sol.max_mismatch:.3g})")
    return PreparedScenario(
        scenario=scenario,
        solution=sol,
        prefault=reduce_network(system, lam, sol, Topology.prefault()),
        faulted=reduce_network(system, lam, sol, Topology.faulted(scenario.faulted_bus)),
        postfault=reduce_network(system, lam, sol, Topology.postfault(scenario.cleared_line)),
        state0=initial_state(sol, system),
        inertia=system.inertia,
    )


def _simulate(prep: PreparedScenario, t_cl: float, step: float, store: bool):
    sc = prep.scenario
    if not 0 < t_cl <= sc.max_clearing_time * (1 + 1e-12):
        raise ValueError(f"clearing time {t_cl} outside (0, {sc.max_clearing_time}]")
    n = prep.faulted.n
    out_f, done_f, status_f, _, h_f = _run(prep.faulted, prep.state0, t_cl, step, store)
    fault_end = MachineState(out_f[done_f if store else 0, :n], out_f[done_f if store else 0, n:])
    if status_f == OVERFLOW:
        verdict = StabilityVerdict(False, math.inf, diverged_at=h_f * (done_f + 1))
        return (out_f, done_f, h_f), None, verdict

    out_p, done_p, status_p, peak, h_p = _run(
        prep.postfault, fault_end, sc.post_fault_horizon, step, store, ANGLE_LIMIT
    )
    if status_p == OK:
        verdict = StabilityVerdict(True, float(peak))
    else:
        peak = math.inf if status_p == OVERFLOW else float(peak)
        t_event = t_cl + h_p * (done_p + (status_p == OVERFLOW))
        verdict = StabilityVerdict(False, peak, diverged_at=t_event)
    return (out_f, done_f, h_f), (out_p, done_p, h_p), verdict


def simulate_scenario(
    system: PowerSystem | None,
    lam: ParameterVector | None,
    scenario: FaultScenario,
    t_cl: float,
    step: float = DEFAULT_STEP,
    prepared: PreparedScenario | None = None,
) -> tuple[Trajectory, Trajectory | None, StabilityVerdict]:
    """Fault-on run on ``(0, t_cl]`` followed by the post-fault run.

    The system is unstable as soon as any COI-relative angle exceeds pi
    during the post-fault period, or if the integration overflows.
    """
    prep = prepared or prepare_scenario(system, lam, scenario)
    if prepared is not None and prepared.scenario != scenario:
        raise ValueError("prepared scenario does not match")
    f, p, verdict = _simulate(prep, t_cl, step, store=True)
    n = prep.faulted.n
    out_f, done_f, h_f = f
    fault_on = Trajectory(
        h_f * np.arange(done_f + 1), out_f[: done_f + 1, :n], out_f[: done_f + 1, n:], "fault_on", p is None
    )
    if p is None:
        return fault_on, None, verdict
    out_p, done_p, h_p = p
    post = Trajectory(
        t_cl + h_p * np.arange(done_p + 1),
        out_p[: done_p + 1, :n],
        out_p[: done_p + 1, n:],
        "postfault",
        diverged=verdict.max_coi_angle == math.inf,
    )
    return fault_on, post, verdict


def is_stable(prep: PreparedScenario, t_cl: float, step: float = DEFAULT_STEP) -> bool:
    return _simulate(prep, t_cl, step, store=False)[2].stable


@dataclass(frozen=True)
class CctResult:
    """Outcome of a clearing-time bisection.

    ``status`` is "ok" or "stable_beyond_horizon"; in the latter case
    ``t_cr`` is ``inf``. ``history`` lists the bracket after every step.
    """

    t_cr: float
    lower: float
    upper: float
    iterations: int
    status: str = "ok"
    history: tuple[tuple[float, float], ...] = ()

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def critical_clearing_time(
    system: PowerSystem | None,
    lam: ParameterVector | None,
    scenario: FaultScenario,
    tol: float = DEFAULT_TOL,
    step: float = DEFAULT_STEP,
    prepared: PreparedScenario | None = None,
) -> CctResult:
    """Bisection for the largest stable clearing time on ``[0, max_clearing_time]``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    prep = prepared or prepare_scenario(system, lam, scenario)
    lo, hi = 0.0, scenario.max_clearing_time
    if not is_stable(prep, min(step, hi), step):
        raise UnstableAtZeroClearing(f"unstable even when cleared after {min(step, hi)} s")
    if is_stable(prep, hi, step):
        return CctResult(math.inf, hi, math.inf, 0, "stable_beyond_horizon", ((lo, hi),))
    history = [(lo, hi)]
    it = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if is_stable(prep, mid, step):
            lo = mid
        else:
            hi = mid
        it += 1
        history.append((lo, hi))
    return CctResult(0.5 * (lo + hi), lo, hi, it, "ok", tuple(history))


def scan_stability(prep: PreparedScenario, clearing_times, step: float = DEFAULT_STEP):
    """Stability on a grid of clearing times plus the indices that break monotonicity.

    A violation is a stable verdict following an unstable one.
    """
    verdicts = [is_stable(prep, float(t), step) for t in clearing_times]
    violations = []
    seen_unstable = False
    for i, s in enumerate(verdicts):
        if not s:
            seen_unstable = True
        elif seen_unstable:
            violations.append(i)
    return verdicts, violations


def write_trajectory_csv(path: str | Path, *trajectories: Trajectory) -> None:
    """CSV ``t,delta_1..delta_n,omega_1..omega_n``; consecutive periods share their boundary row once."""
    rows = []
    last_t = None
    for tr in trajectories:
        if tr is None:
            continue
        for t, d, w in zip(tr.times, tr.delta, tr.omega):
            if last_t is not None and t <= last_t:
                continue
            rows.append(np.r_[t, d, w])
            last_t = t
    n = trajectories[0].delta.shape[1]
    header = ",".join(["t"] + [f"delta_{i + 1}" for i in range(n)] + [f"omega_{i + 1}" for i in range(n)])
    np.savetxt(path, np.array(rows), delimiter=",", header=header, comments="", fmt="%.17g")
