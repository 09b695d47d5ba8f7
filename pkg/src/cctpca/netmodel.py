"""Network data model, power flow and Kron reduction.

A :class:`PowerSystem` is parsed from a small sectioned text format::

    [base]
    base: mva=100, freq=60
    [buses]
    bus: id=1, type=slack, v=1.06, angle=0, kv=69
    [lines]
    line: from=1, to=5, r=0.05403, x=0.22304, b2=0.0246
    [generators]
    gen: bus=1, p=2.324, h=5.148, d=0, xd=0.2995
    [loads]
    load: bus=2, p=0.217, q=0.127

All electrical quantities are per-unit on the system base. The uncertain
quantities (loads and line parameters) are collected in a
:class:`ParameterVector`; every network computation takes such a vector
instead of reading nominal values from the system, so the same code serves
nominal, perturbed and Monte Carlo runs.
"""
from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PARAMETER_CLASSES = ("P_L", "Q_L", "R", "X", "B")

PF_TOLERANCE = 1e-8
PF_MAX_ITER = 50


class SystemFormatError(ValueError):
    """Malformed or inconsistent system-description document."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class NetworkReductionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str  # "slack" | "PV" | "PQ"
    voltage_magnitude: float = 1.0
    voltage_angle: float = 0.0
    base_kv: float = 1.0
    gs: float = 0.0
    bs: float = 0.0


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b2: float = 0.0
    in_service: bool = True
    name: str = ""

    @property
    def id(self) -> str:
        return self.name or f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class Load:
    bus: int
    p: float
    q: float


@dataclass(frozen=True)
class Generator:
    """Classical machine: constant EMF behind transient reactance.

    ``h = inf`` with ``xd = 0`` describes an infinite bus.
    """

    bus: int
    h: float
    xd: float
    d: float = 0.0
    p: float = 0.0

    @property
    def infinite(self) -> bool:
        return math.isinf(self.h)


@dataclass(frozen=True)
class PowerSystem:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    loads: tuple[Load, ...]
    generators: tuple[Generator, ...]
    mva_base: float = 100.0
    frequency: float = 60.0

    def __post_init__(self):
        _validate(self)

    @property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    def line_position(self, line_id: str) -> int:
        for i, ln in enumerate(self.lines):
            if ln.id == line_id:
                return i
        raise KeyError(f"unknown line {line_id!r}")

    @property
    def inertia(self) -> np.ndarray:
        """Inertia constants M = 2H (seconds)."""
        return np.array([2.0 * g.h for g in self.generators])

    @property
    def damping(self) -> np.ndarray:
        return np.array([g.d for g in self.generators])

    def with_generators(self, **changes) -> "PowerSystem":
        """Copy with the same field changes applied to every generator."""
        gens = tuple(dataclasses.replace(g, **changes) for g in self.generators)
        return dataclasses.replace(self, generators=gens)


def _validate(system: PowerSystem) -> None:
    ids = [b.id for b in system.buses]
    if len(set(ids)) != len(ids):
        raise SystemFormatError("duplicate bus ids")
    known = set(ids)
    slack = [b for b in system.buses if b.kind == "slack"]
    if len(slack) != 1:
        raise SystemFormatError(f"expected exactly one slack bus, found {len(slack)}")
    for b in system.buses:
        if b.kind not in ("slack", "PV", "PQ"):
            raise SystemFormatError(f"bus {b.id}: unknown type {b.kind!r}")
        if not b.voltage_magnitude > 0:
            raise SystemFormatError(f"bus {b.id}: voltage magnitude must be positive")

    line_ids = [ln.id for ln in system.lines]
    if len(set(line_ids)) != len(line_ids):
        raise SystemFormatError("duplicate line ids")
    for ln in system.lines:
        for end in (ln.from_bus, ln.to_bus):
            if end not in known:
                raise SystemFormatError(f"line {ln.id}: dangling reference to bus {end}")
        if ln.from_bus == ln.to_bus:
            raise SystemFormatError(f"line {ln.id}: from and to bus coincide")
        if ln.x == 0:
            raise SystemFormatError(f"line {ln.id}: zero reactance")
        if ln.r < 0 or ln.b2 < 0:
            raise SystemFormatError(f"line {ln.id}: negative resistance or shunt")

    load_buses = [ld.bus for ld in system.loads]
    if len(set(load_buses)) != len(load_buses):
        raise SystemFormatError("duplicate load ids (more than one load on a bus)")
    for ld in system.loads:
        if ld.bus not in known:
            raise SystemFormatError(f"load: dangling reference to bus {ld.bus}")
        if ld.p < 0:
            raise SystemFormatError(f"load at bus {ld.bus}: negative active power")

    gen_buses = [g.bus for g in system.generators]
    if len(set(gen_buses)) != len(gen_buses):
        raise SystemFormatError("duplicate generator ids (more than one generator on a bus)")
    kinds = {b.id: b.kind for b in system.buses}
    for g in system.generators:
        if g.bus not in known:
            raise SystemFormatError(f"generator: dangling reference to bus {g.bus}")
        if kinds[g.bus] == "PQ":
            raise SystemFormatError(f"generator at bus {g.bus}: bus is PQ")
        if not g.h > 0 or g.d < 0:
            raise SystemFormatError(f"generator at bus {g.bus}: need h > 0 and d >= 0")
        if g.xd < 0 or (g.xd == 0 and not g.infinite):
            raise SystemFormatError(f"generator at bus {g.bus}: xd must be positive")
    for b in system.buses:
        if b.kind != "PQ" and b.id not in gen_buses:
            raise SystemFormatError(f"bus {b.id}: {b.kind} bus without generator")

    # connectivity over in-service lines
    adj: dict[int, set[int]] = {i: set() for i in ids}
    for ln in system.lines:
        if ln.in_service:
            adj[ln.from_bus].add(ln.to_bus)
            adj[ln.to_bus].add(ln.from_bus)
    seen = {ids[0]}
    stack = [ids[0]]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    if len(seen) != len(ids):
        raise SystemFormatError(f"network is not connected: buses {sorted(known - seen)} isolated")


# ---------------------------------------------------------------------------
# parsing

_SECTIONS = {
    "base": ("base",),
    "buses": ("bus",),
    "lines": ("line",),
    "generators": ("gen", "generator"),
    "loads": ("load",),
}
_RECORD = re.compile(r"^(\w+)\s*:\s*(.*)$")


def _fields(body: str, lineno: int) -> dict[str, str]:
    out = {}
    for item in body.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise SystemFormatError(f"expected name=value, got {item!r}", lineno)
        key, value = (s.strip() for s in item.split("=", 1))
        if not key or not value:
            raise SystemFormatError(f"empty name or value in {item!r}", lineno)
        if key in out:
            raise SystemFormatError(f"field {key!r} given twice", lineno)
        out[key] = value
    return out


def _num(fields: dict, key: str, lineno: int, default=None, cast=float):
    if key not in fields:
        if default is None:
            raise SystemFormatError(f"missing field {key!r}", lineno)
        return default
    try:
        return cast(fields.pop(key))
    except ValueError:
        raise SystemFormatError(f"field {key!r}: not a number", lineno) from None


def _flag(value: str, lineno: int) -> bool:
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise SystemFormatError(f"not a boolean: {value!r}", lineno)


def parse_system(text: str) -> PowerSystem:
    """Parse a system-description document into a validated PowerSystem."""
    section = None
    buses, lines, loads, gens = [], [], [], []
    base = {"mva": 100.0, "freq": 60.0}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise SystemFormatError(f"unterminated section header {line!r}", lineno)
            section = line[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise SystemFormatError(f"unknown section [{section}]", lineno)
            continue
        if section is None:
            raise SystemFormatError("record outside of any section", lineno)
        m = _RECORD.match(line)
        if not m:
            raise SystemFormatError(f"cannot parse record {line!r}", lineno)
        tag, body = m.group(1).lower(), m.group(2)
        if tag not in _SECTIONS[section]:
            raise SystemFormatError(f"record {tag!r} not allowed in [{section}]", lineno)
        f = _fields(body, lineno)

        if section == "base":
            base["mva"] = _num(f, "mva", lineno, base["mva"])
            base["freq"] = _num(f, "freq", lineno, base["freq"])
        elif section == "buses":
            bid = _num(f, "id", lineno, cast=int)
            kind = f.pop("type", None)
            if kind is None:
                raise SystemFormatError("missing field 'type'", lineno)
            kind = {"slack": "slack", "pv": "PV", "pq": "PQ"}.get(kind.lower())
            if kind is None:
                raise SystemFormatError("bus type must be slack, PV or PQ", lineno)
            buses.append(Bus(
                id=bid,
                kind=kind,
                voltage_magnitude=_num(f, "v", lineno, 1.0),
                voltage_angle=math.radians(_num(f, "angle", lineno, 0.0)),
                base_kv=_num(f, "kv", lineno, 1.0),
                gs=_num(f, "gs", lineno, 0.0),
                bs=_num(f, "bs", lineno, 0.0),
            ))
        elif section == "lines":
            fb = _num(f, "from", lineno, cast=int)
            tb = _num(f, "to", lineno, cast=int)
            ln = Line(
                from_bus=fb,
                to_bus=tb,
                r=_num(f, "r", lineno, 0.0),
                x=_num(f, "x", lineno),
                b2=_num(f, "b2", lineno, 0.0),
                in_service=_flag(f.pop("status", "1"), lineno),
                name=f.pop("id", ""),
            )
            if ln.x == 0:
                raise SystemFormatError(f"line {ln.id}: zero reactance", lineno)
            lines.append(ln)
        elif section == "generators":
            h = f.pop("h", None)
            gens.append(
                Generator(
                    bus=_num(f, "bus", lineno, cast=int),
                    h=math.inf if h in ("inf", "infinite") else _num({"h": h}, "h", lineno),
                    xd=_num(f, "xd", lineno),
                    d=_num(f, "d", lineno, 0.0),
                    p=_num(f, "p", lineno, 0.0),
                )
            )
        else:
            loads.append(
                Load(bus=_num(f, "bus", lineno, cast=int), p=_num(f, "p", lineno, 0.0), q=_num(f, "q", lineno, 0.0))
            )
        if f:
            raise SystemFormatError(f"unknown field(s) {sorted(f)}", lineno)

    return PowerSystem(
        buses=tuple(buses),
        lines=tuple(lines),
        loads=tuple(loads),
        generators=tuple(gens),
        mva_base=base["mva"],
        frequency=base["freq"],
    )


def load_system(path: str | Path) -> PowerSystem:
    return parse_system(Path(path).read_text(encoding="utf-8"))


def ieee14() -> PowerSystem:
    """The bundled IEEE 14-bus system."""
    text = resources.files("cctpca.data").joinpath("ieee14.sys").read_text(encoding="utf-8")
    return parse_system(text)


# ---------------------------------------------------------------------------
# parameter vector


@dataclass(frozen=True)
class ParameterVector:
    """Uncertain parameters ordered as [P_L; Q_L; R; X; B/2].

    Ids are ``"P_L@<bus>"``, ``"Q_L@<bus>"``, ``"R@<line>"``, ``"X@<line>"``
    and ``"B@<line>"`` where ``<line>`` is a line id such as ``1-5``.
    """

    values: np.ndarray
    ids: tuple[str, ...]
    index_map: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "index_map", {pid: i for i, pid in enumerate(self.ids)})
        if len(self.index_map) != len(self.ids):
            raise ValueError("parameter ids are not unique")
        if values.shape != (len(self.ids),):
            raise ValueError("values and ids have different lengths")

    def __len__(self) -> int:
        return len(self.ids)

    def position(self, pid: str) -> int:
        return self.index_map[pid]

    def __getitem__(self, pid: str) -> float:
        return float(self.values[self.index_map[pid]])

    @property
    def classes(self) -> np.ndarray:
        return np.array([pid.split("@", 1)[0] for pid in self.ids])

    def with_values(self, values) -> "ParameterVector":
        return ParameterVector(np.asarray(values, dtype=float), self.ids)

    def replace(self, **updates: float) -> "ParameterVector":
        """Copy with selected entries changed, e.g. ``lam.replace(**{"X@1-2": 0.1})``."""
        v = self.values.copy()
        for pid, val in updates.items():
            v[self.index_map[pid]] = val
        return self.with_values(v)

    def __eq__(self, other):
        if not isinstance(other, ParameterVector):
            return NotImplemented
        return self.ids == other.ids and np.array_equal(self.values, other.values)

    __hash__ = None


def nominal_parameters(system: PowerSystem) -> ParameterVector:
    ids, values = [], []
    for cls, attr in (("P_L", "p"), ("Q_L", "q")):
        for ld in system.loads:
            ids.append(f"{cls}@{ld.bus}")
            values.append(getattr(ld, attr))
    for cls, attr in (("R", "r"), ("X", "x"), ("B", "b2")):
        for ln in system.lines:
            ids.append(f"{cls}@{ln.id}")
            values.append(getattr(ln, attr))
    return ParameterVector(np.array(values), tuple(ids))


def write_parameters(lam: ParameterVector) -> str:
    """CSV text ``parameter_id,value``; values are written with ``repr`` so they round-trip."""
    rows = ["parameter_id,value"]
    rows += [f"{pid},{float(v)!r}" for pid, v in zip(lam.ids, lam.values)]
    return "\n".join(rows) + "\n"


def read_parameters(text: str) -> ParameterVector:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "parameter_id,value":
        raise ValueError("missing 'parameter_id,value' header")
    ids, values = [], []
    for ln in lines[1:]:
        pid, val = ln.rsplit(",", 1)
        ids.append(pid.strip())
        values.append(float(val))
    return ParameterVector(np.array(values), tuple(ids))


def _split(system: PowerSystem, lam: ParameterVector):
    nl, nb = len(system.loads), len(system.lines)
    if len(lam) != 2 * nl + 3 * nb:
        raise ValueError("parameter vector does not match the system")
    v = lam.values
    return v[:nl], v[nl:2 * nl], v[2 * nl:2 * nl + nb], v[2 * nl + nb:2 * nl + 2 * nb], v[2 * nl + 2 * nb:]


# ---------------------------------------------------------------------------
# admittance matrix and power flow


def admittance_matrix(system: PowerSystem, lam: ParameterVector, removed_line: str | None = None) -> np.ndarray:
    """Dense bus admittance matrix built from the line parameters in ``lam``."""
    _, _, r, x, b2 = _split(system, lam)
    idx = system.bus_index
    n = len(system.buses)
    Y = np.zeros((n, n), dtype=complex)
    for k, ln in enumerate(system.lines):
        if not ln.in_service or ln.id == removed_line:
            continue
        i, j = idx[ln.from_bus], idx[ln.to_bus]
        ys = 1.0 / complex(r[k], x[k])
        ysh = 1j * b2[k]
        Y[i, i] += ys + ysh
        Y[j, j] += ys + ysh
        Y[i, j] -= ys
        Y[j, i] -= ys
    for i, b in enumerate(system.buses):
        Y[i, i] += complex(b.gs, b.bs)
    return Y


@dataclass(frozen=True)
class PowerFlowSolution:
    voltages: np.ndarray  # complex, one per bus in system order
    gen_power: np.ndarray  # complex injection of each generator
    converged: bool
    iterations: int
    max_mismatch: float


def _load_injection(system: PowerSystem, lam: ParameterVector) -> np.ndarray:
    pl, ql, *_ = _split(system, lam)
    idx = system.bus_index
    s = np.zeros(len(system.buses), dtype=complex)
    for k, ld in enumerate(system.loads):
        s[idx[ld.bus]] += complex(pl[k], ql[k])
    return s


def solve_power_flow(
    system: PowerSystem,
    lam: ParameterVector,
    tol: float = PF_TOLERANCE,
    max_iter: int = PF_MAX_ITER,
) -> PowerFlowSolution:
    """Newton-Raphson power flow in polar coordinates from a flat start.

    Non-convergence is reported through ``converged=False`` rather than raised.
    Once the mismatch is below ``tol`` one extra Newton step is taken so the
    solution error sits near machine precision; finite-difference sensitivities
    rely on this.
    """
    Y = admittance_matrix(system, lam)
    idx = system.bus_index
    n = len(system.buses)
    kinds = np.array([b.kind for b in system.buses])
    pv = np.flatnonzero(kinds == "PV")
    pq = np.flatnonzero(kinds == "PQ")
    pvpq = np.r_[pv, pq]

    s_load = _load_injection(system, lam)
    s_gen = np.zeros(n, dtype=complex)
    for g in system.generators:
        s_gen[idx[g.bus]] += g.p
    s_spec = s_gen - s_load

    vm = np.array([b.voltage_magnitude if b.kind != "PQ" else 1.0 for b in system.buses])
    va = np.array([b.voltage_angle if b.kind == "slack" else 0.0 for b in system.buses])
    V = vm * np.exp(1j * va)

    def mismatch(V):
        s = V * np.conj(Y @ V) - s_spec
        return np.r_[s.real[pvpq], s.imag[pq]]

    F = mismatch(V)
    err = float(np.max(np.abs(F), initial=0.0))
    it = 0
    polished = False
    while True:
        if err <= tol:
            if polished:
                break
            polished = True
        elif it >= max_iter:
            break
        Ibus = Y @ V
        vnorm = V / np.abs(V)
        dS_dva = 1j * np.diag(V) @ np.conj(np.diag(Ibus) - Y @ np.diag(V))
        dS_dvm = np.diag(V) @ np.conj(Y @ np.diag(vnorm)) + np.diag(vnorm) @ np.diag(np.conj(Ibus))
        J = np.block(
            [
                [dS_dva[np.ix_(pvpq, pvpq)].real, dS_dvm[np.ix_(pvpq, pq)].real],
                [dS_dva[np.ix_(pq, pvpq)].imag, dS_dvm[np.ix_(pq, pq)].imag],
            ]
        )
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        va = np.angle(V)
        vm = np.abs(V)
        va[pvpq] += dx[: len(pvpq)]
        vm[pq] += dx[len(pvpq):]
        V = vm * np.exp(1j * va)
        it += 1
        F = mismatch(V)
        err = float(np.max(np.abs(F), initial=0.0))
        if not np.isfinite(err):
            break
    converged = bool(np.isfinite(err) and err <= tol)

    s_inj = V * np.conj(Y @ V)
    gen_power = np.array([s_inj[idx[g.bus]] + s_load[idx[g.bus]] for g in system.generators])
    return PowerFlowSolution(V, gen_power, converged, it, float(err))


def bus_mismatch(system: PowerSystem, lam: ParameterVector, sol: PowerFlowSolution) -> np.ndarray:
    """Complex power mismatch per bus, re-evaluated from scratch.

    Generator buses use the generator injection in ``sol`` so every bus is
    checked against its own balance equation.
    """
    Y = admittance_matrix(system, lam)
    idx = system.bus_index
    s_gen = np.zeros(len(system.buses), dtype=complex)
    for g, sg in zip(system.generators, sol.gen_power):
        s_gen[idx[g.bus]] += sg
    return sol.voltages * np.conj(Y @ sol.voltages) - (s_gen - _load_injection(system, lam))


# ---------------------------------------------------------------------------
# network reduction


@dataclass(frozen=True)
class Topology:
    """``kind`` is "prefault", "faulted" (``bus`` set) or "postfault" (``line`` set)."""

    kind: str = "prefault"
    bus: int | None = None
    line: str | None = None

    @classmethod
    def prefault(cls):
        return cls("prefault")

    @classmethod
    def faulted(cls, bus: int):
        return cls("faulted", bus=bus)

    @classmethod
    def postfault(cls, line: str):
        return cls("postfault", line=line)


@dataclass(frozen=True)
class ReducedNetwork:
    """Admittance matrix among generator internal nodes plus machine data."""

    y_red: np.ndarray
    internal_emf: np.ndarray  # complex E' at the pre-fault operating point
    mechanical_power: np.ndarray
    inertia: np.ndarray  # M = 2H, may contain inf
    damping: np.ndarray
    frequency: float = 60.0

    @property
    def n(self) -> int:
        return len(self.internal_emf)


def internal_emf(system: PowerSystem, sol: PowerFlowSolution) -> np.ndarray:
    idx = system.bus_index
    E = np.empty(len(system.generators), dtype=complex)
    for k, g in enumerate(system.generators):
        vt = sol.voltages[idx[g.bus]]
        current = np.conj(sol.gen_power[k] / vt)
        E[k] = vt + 1j * g.xd * current
    return E


def reduce_network(
    system: PowerSystem,
    lam: ParameterVector,
    solution: PowerFlowSolution,
    topology: Topology = Topology(),
) -> ReducedNetwork:
    """Kron-reduce the network to the generator internal nodes.

    Loads become constant admittances from the pre-fault voltages. A faulted
    bus is a zero-voltage node and is dropped before elimination; a
    post-fault topology omits the cleared line.
    """
    if not solution.converged:
        raise NetworkReductionError("power flow did not converge")
    idx = system.bus_index
    nb = len(system.buses)
    if topology.kind == "postfault":
        system.line_position(topology.line)
    if topology.kind == "faulted" and topology.bus not in idx:
        raise KeyError(f"unknown bus {topology.bus}")

    Ybus = admittance_matrix(system, lam, removed_line=topology.line if topology.kind == "postfault" else None)
    s_load = _load_injection(system, lam)
    vm2 = np.abs(solution.voltages) ** 2
    Ybus[np.diag_indices(nb)] += np.conj(s_load) / vm2

    gens = system.generators
    internal = [k for k, g in enumerate(gens) if g.xd > 0]
    size = nb + len(internal)
    Y = np.zeros((size, size), dtype=complex)
    Y[:nb, :nb] = Ybus
    retained = []
    slot = {k: nb + i for i, k in enumerate(internal)}
    for k, g in enumerate(gens):
        b = idx[g.bus]
        if g.xd > 0:
            y = 1.0 / (1j * g.xd)
            a = slot[k]
            Y[a, a] += y
            Y[b, b] += y
            Y[a, b] -= y
            Y[b, a] -= y
            retained.append(a)
        else:
            retained.append(b)

    dropped = set()
    if topology.kind == "faulted":
        fb = idx[topology.bus]
        if fb in retained:
            raise NetworkReductionError(f"fault at bus {topology.bus} shorts an infinite bus")
        dropped.add(fb)
    eliminated = [i for i in range(size) if i not in retained and i not in dropped]

    Yrr = Y[np.ix_(retained, retained)]
    if eliminated:
        Yee = Y[np.ix_(eliminated, eliminated)]
        Yre = Y[np.ix_(retained, eliminated)]
        Yer = Y[np.ix_(eliminated, retained)]
        if np.linalg.cond(Yee) > 1e14:
            raise NetworkReductionError("singular reduction submatrix (isolated network part)")
        y_red = Yrr - Yre @ np.linalg.solve(Yee, Yer)
    else:
        y_red = Yrr

    return ReducedNetwork(
        y_red=y_red,
        internal_emf=internal_emf(system, solution),
        mechanical_power=solution.gen_power.real.copy(),
        inertia=system.inertia,
        damping=system.damping,
        frequency=system.frequency,
    )


def electrical_power(network: ReducedNetwork, emf: np.ndarray | None = None) -> np.ndarray:
    E = network.internal_emf if emf is None else emf
    return (E * np.conj(network.y_red @ E)).real


def bus_table(system: PowerSystem, sol: PowerFlowSolution) -> list[dict]:
    """Per-bus rows for reporting (angles in degrees)."""
    idx = system.bus_index
    s_net = np.zeros(len(system.buses), dtype=complex)
    for g, sg in zip(system.generators, sol.gen_power):
        s_net[idx[g.bus]] += sg
    rows = []
    for i, b in enumerate(system.buses):
        v = sol.voltages[i]
        rows.append(
            {
                "bus": b.id,
                "type": b.kind,
                "vm": float(abs(v)),
                "va_deg": float(np.degrees(np.angle(v))),
                "p_gen": float(s_net[i].real),
                "q_gen": float(s_net[i].imag),
            }
        )
    return rows


def parameter_label(pid: str) -> str:
    """Readable label, e.g. ``X@1-2`` -> ``X_{1-2}``."""
    cls, where = pid.split("@", 1)
    return f"{cls}_{{{where}}}"


def select_ids(lam: ParameterVector, ids: Iterable[str]) -> np.ndarray:
    mask = np.zeros(len(lam), dtype=bool)
    for pid in ids:
        mask[lam.position(pid)] = True
    return mask


__all__: Sequence[str] = [
    "Bus",
    "Line",
    "Load",
    "Generator",
    "PowerSystem",
    "ParameterVector",
    "PowerFlowSolution",
    "ReducedNetwork",
    "Topology",
    "SystemFormatError",
    "NetworkReductionError",
    "parse_system",
    "load_system",
    "ieee14",
    "nominal_parameters",
    "write_parameters",
    "read_parameters",
    "admittance_matrix",
    "solve_power_flow",
    "bus_mismatch",
    "reduce_network",
    "internal_emf",
    "electrical_power",
    "bus_table",
]
