"""
Power flow and critical clearing time on the 14-bus system
==========================================================

Solve the nominal operating point, reduce the network to the machine
internal nodes, and search for the critical clearing time of each named
fault scenario. Run with ``python3 demos/01_power_flow_and_clearing_time.py``.
"""

import numpy as np

from cctpca.dynamics import CASES, critical_clearing_time, initial_state, prepare_scenario, simulate_scenario
from cctpca.netmodel import bus_table, ieee14, nominal_parameters, reduce_network, solve_power_flow

# the bundled system and its 82 uncertain parameters (loads and line R, X, B)
system = ieee14()
lam = nominal_parameters(system)
print(f"{len(system.buses)} buses, {len(system.lines)} lines, {len(lam)} parameters")

# Newton-Raphson from a flat start
sol = solve_power_flow(system, lam)
print(f"power flow: {sol.iterations} iterations, max mismatch {sol.max_mismatch:.1e} pu")
for row in bus_table(system, sol)[:5]:
    print(f"  bus {row['bus']:>2}  |V| {row['vm']:.4f}  angle {row['va_deg']:8.3f} deg")

# loads become constant impedances; the reduced network couples only machines
net = reduce_network(system, lam, sol)
x0 = initial_state(sol, system)
print("internal EMF magnitudes:", np.round(np.abs(net.internal_emf), 4))
print("initial rotor angles (COI frame, deg):", np.round(np.degrees(x0.delta), 2))

# bisection on the clearing time for each scenario
for name, scenario in CASES.items():
    res = critical_clearing_time(system, lam, scenario)
    print(
        f"case {name}: fault at bus {scenario.faulted_bus}, clear line {scenario.cleared_line} -> "
        f"t_cr = {res.t_cr:.4f} s after {res.iterations} bisection steps"
    )

# just below and just above the clearing time of case I
scenario = CASES["I"]
prep = prepare_scenario(system, lam, scenario)
t_cr = critical_clearing_time(None, None, scenario, prepared=prep).t_cr
for t_cl in (t_cr - 0.005, t_cr + 0.005):
    fault_on, post, verdict = simulate_scenario(None, None, scenario, t_cl, prepared=prep)
    swing = np.degrees(np.max(np.abs(post.delta)))
    print(f"clear at {t_cl:.4f} s: {'stable' if verdict.stable else 'unstable'}, largest angle {swing:.0f} deg")
