import math

import numpy as np
import pytest

from cctpca.dynamics import (
    CASES,
    FaultScenario,
    MachineState,
    UnstableAtZeroClearing,
    coi_project,
    critical_clearing_time,
    derivative,
    initial_state,
    integrate,
    is_stable,
    prepare_scenario,
    scan_stability,
    simulate_scenario,
    write_trajectory_csv,
)
from cctpca.netmodel import Topology, nominal_parameters, parse_system, reduce_network, solve_power_flow

from oracles import OMIB_LOSSLESS, TWO_MACHINE


def _setup(text, topology=Topology.prefault()):
    s = parse_system(text)
    lam = nominal_parameters(s)
    sol = solve_power_flow(s, lam)
    return s, lam, sol, reduce_network(s, lam, sol, topology)


# -- equilibrium ----------------------------------------------------------------


def test_zero_transfer_omib_sits_at_zero_angle():
    s, _, sol, net = _setup(OMIB_LOSSLESS.format(p=0.0))
    x0 = initial_state(sol, s)
    np.testing.assert_allclose(x0.delta, 0.0, atol=1e-12)
    np.testing.assert_array_equal(x0.omega, 0.0)
    traj = integrate(net, x0, 1.0)
    np.testing.assert_allclose(traj.delta, 0.0, atol=1e-12)
    np.testing.assert_allclose(traj.omega, 0.0, atol=1e-12)


def test_loaded_omib_angle_satisfies_power_balance():
    s, _, sol, net = _setup(OMIB_LOSSLESS.format(p=0.7))
    x0 = initial_state(sol, s)
    E = abs(net.internal_emf[1])
    assert E / 0.8 * math.sin(x0.delta[1]) == pytest.approx(0.7, rel=1e-10)


def test_ieee14_prefault_state_is_an_equilibrium(system14, lam14):
    sol = solve_power_flow(system14, lam14)
    net = reduce_network(system14, lam14, sol)
    x0 = initial_state(sol, system14)
    dd, dw = derivative(net, x0)
    assert np.max(np.abs(dd)) <= 1e-6 and np.max(np.abs(dw)) <= 1e-6
    assert x0.coi_angle(system14.inertia) == pytest.approx(0.0, abs=1e-12)


# -- integration accuracy -------------------------------------------------------


def _fault_on_end(system, lam, step, t=0.3, case="I"):
    sol = solve_power_flow(system, lam)
    net = reduce_network(system, lam, sol, Topology.faulted(CASES[case].faulted_bus))
    return integrate(net, initial_state(sol, system), t, step).final.delta


def test_step_halving_changes_fault_on_angles_by_less_than_1e6(system14, lam14):
    coarse = _fault_on_end(system14, lam14, 1e-3)
    fine = _fault_on_end(system14, lam14, 5e-4)
    assert np.max(np.abs(coarse - fine)) <= 1e-6


def test_observed_order_of_accuracy(system14, lam14):
    d = [_fault_on_end(system14, lam14, h) for h in (0.02, 0.01, 0.005)]
    e1 = np.max(np.abs(d[0] - d[1]))
    e2 = np.max(np.abs(d[1] - d[2]))
    assert math.log2(e1 / e2) >= 3.5


def test_two_machine_energy_is_conserved():
    s, _, sol, net = _setup(TWO_MACHINE)
    M = s.inertia
    ws = 2 * math.pi * s.frequency
    x0 = initial_state(sol, s)
    kick = np.array([0.01, -0.01 * M[0] / M[1]])  # zero net momentum
    traj = integrate(net, MachineState(x0.delta, kick), 2.0, 1e-3)
    E = np.abs(net.internal_emf)
    b12 = net.y_red[0, 1].imag
    pm = net.mechanical_power

    def energy(d, w):
        return 0.5 * ws * np.sum(M * w**2, axis=-1) - d @ pm - E[0] * E[1] * b12 * np.cos(d[..., 0] - d[..., 1])

    W = energy(traj.delta, traj.omega)
    assert np.ptp(traj.delta[:, 0] - traj.delta[:, 1]) > 0.05  # the swing is not trivial
    assert np.max(np.abs(W - W[0])) <= 1e-6 * abs(W[0])


def test_uniform_angle_shift_leaves_relative_motion_unchanged(system14, lam14):
    sol = solve_power_flow(system14, lam14)
    net = reduce_network(system14, lam14, sol, Topology.faulted(4))
    x0 = initial_state(sol, system14)
    base = integrate(net, x0, 0.3)
    shifted = integrate(net, MachineState(x0.delta + 0.7, x0.omega), 0.3)
    M = system14.inertia
    rel_a = np.array([coi_project(d, M) for d in base.delta])
    rel_b = np.array([coi_project(d, M) for d in shifted.delta])
    np.testing.assert_allclose(rel_a, rel_b, atol=1e-12)
    np.testing.assert_allclose(base.omega, shifted.omega, atol=1e-12)


def test_grid_covers_span_exactly():
    s, _, sol, net = _setup(OMIB_LOSSLESS.format(p=0.2))
    traj = integrate(net, initial_state(sol, s), 0.2505, 1e-3)
    assert len(traj) == 252
    assert traj.times[-1] == pytest.approx(0.2505, abs=1e-15)


# -- scenarios and clearing times ----------------------------------------------


def test_immediate_clearing_is_stable_and_late_clearing_is_not(system14, lam14):
    sc = CASES["I"]
    prep = prepare_scenario(system14, lam14, sc)
    assert is_stable(prep, 1e-3)
    _, _, verdict = simulate_scenario(None, None, sc, sc.max_clearing_time, prepared=prep)
    assert not verdict.stable


def test_stability_is_monotone_on_a_clearing_grid(system14, lam14, cct14):
    sc = CASES["I"]
    prep = prepare_scenario(system14, lam14, sc)
    t_cr = cct14("I").t_cr
    grid = np.linspace(1e-3, min(3 * t_cr, sc.max_clearing_time), 25)
    verdicts, violations = scan_stability(prep, grid)
    assert violations == []
    assert verdicts[0] and not verdicts[-1]


def test_bisection_iteration_count():
    # double-circuit tie; the fault at the machine terminal trips one circuit
    text = OMIB_LOSSLESS.format(p=0.5).replace("x=0.5", "x=1.0, id=a\nline: from=1, to=2, x=1.0, id=b")
    s = parse_system(text)
    lam = nominal_parameters(s)
    sc = FaultScenario(2, "b", max_clearing_time=1.0)
    res = critical_clearing_time(s, lam, sc, tol=1e-4)
    assert res.ok
    assert res.iterations <= math.ceil(math.log2(1.0 / 1e-4))


@pytest.mark.parametrize("case", ["I", "II", "III"])
def test_bracket_invariant(system14, lam14, cct14, case):
    res = cct14(case)
    assert res.ok
    prep = prepare_scenario(system14, lam14, CASES[case])
    for lo, hi in res.history[1:]:
        assert lo < hi
        if lo > 0:
            assert is_stable(prep, lo)
        assert not is_stable(prep, hi)
    assert res.upper - res.lower <= 1e-4


def test_clearing_time_brackets_stability(system14, lam14, cct14):
    res = cct14("I")
    prep = prepare_scenario(system14, lam14, CASES["I"])
    assert is_stable(prep, res.t_cr - 1e-4)
    assert not is_stable(prep, res.t_cr + 1e-4)


def test_more_inertia_means_longer_clearing_time(system14, lam14, cct14):
    import dataclasses

    heavy = dataclasses.replace(
        system14, generators=tuple(dataclasses.replace(g, h=2 * g.h) for g in system14.generators)
    )
    assert critical_clearing_time(heavy, lam14, CASES["I"]).t_cr > cct14("I").t_cr


def test_remote_stub_fault_is_stable_beyond_horizon():
    stub = parse_system(_ieee14_with_stub())
    res = critical_clearing_time(stub, nominal_parameters(stub), FaultScenario(15, "14-15"))
    assert res.status == "stable_beyond_horizon"
    assert res.t_cr == math.inf


def _ieee14_with_stub():
    # bus 15 hangs off bus 14 through a weak line and feeds no machine
    from importlib import resources

    text = resources.files("cctpca.data").joinpath("ieee14.sys").read_text(encoding="utf-8")
    text = text.replace("[lines]", "bus: id=15, type=PQ\n[lines]\nline: from=14, to=15, r=0.1, x=2.0")
    return text.replace("[loads]", "[loads]\nload: bus=15, p=0.001, q=0.0005")


def test_losing_the_only_tie_is_unstable_at_zero_clearing():
    s = parse_system(OMIB_LOSSLESS.format(p=0.8))
    with pytest.raises(UnstableAtZeroClearing):
        critical_clearing_time(s, nominal_parameters(s), FaultScenario(2, "1-2"))


def test_clearing_time_is_deterministic(system14, lam14, cct14):
    again = critical_clearing_time(system14, lam14, CASES["I"])
    assert again == cct14("I")


def test_trajectory_csv_header(tmp_path, system14, lam14):
    f, p, _ = simulate_scenario(system14, lam14, CASES["I"], 0.05)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, f, p)
    lines = path.read_text().splitlines()
    assert lines[0] == "t," + ",".join(f"delta_{i}" for i in range(1, 6)) + "," + ",".join(
        f"omega_{i}" for i in range(1, 6)
    )
    times = np.array([float(r.split(",")[0]) for r in lines[1:]])
    assert np.all(np.diff(times) > 0)
    assert len(lines) - 1 == len(f) + len(p) - 1
