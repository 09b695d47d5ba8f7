"""Run configuration shared by the command-line tools.

Every default lives in ``DEFAULTS``. A configuration file is flat
``key = value`` text (``#`` starts a comment); keys are the names below,
with dashes or underscores. Command-line flags override file values.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .dynamics import CASES, DEFAULT_HORIZON, DEFAULT_MAX_CLEARING, DEFAULT_STEP, DEFAULT_TOL, FaultScenario
from .montecarlo import DEFAULT_N
from .sensitivity import DEFAULT_H_ABS, DEFAULT_H_REL, DEFAULT_SAMPLES

# name: (default, description)
DEFAULTS: dict[str, tuple[object, str]] = {
    "system": (None, "system description file; the bundled IEEE 14-bus data when unset"),
    "case": (None, "named scenario I, II or III"),
    "fault_bus": (None, "faulted bus (overrides the case)"),
    "clear_line": (None, "line removed at clearing, e.g. 1-5 (overrides the case)"),
    "threshold": (0.95, "cumulative eigenvector share kept by the ranking"),
    "cv_load": (0.05, "coefficient of variation of load parameters"),
    "cv_line": (0.025, "coefficient of variation of line parameters"),
    "n": (DEFAULT_N, "Monte Carlo sample count"),
    "seed": (0, "root seed of the Monte Carlo streams"),
    "tol": (DEFAULT_TOL, "bisection tolerance on the clearing time [s]"),
    "step": (DEFAULT_STEP, "integration step [s]"),
    "samples": (DEFAULT_SAMPLES, "fault-on samples used by the ranking"),
    "h_rel": (DEFAULT_H_REL, "relative finite-difference step"),
    "h_abs": (DEFAULT_H_ABS, "absolute finite-difference floor"),
    "max_clearing": (DEFAULT_MAX_CLEARING, "upper end of the clearing-time bracket [s]"),
    "horizon": (DEFAULT_HORIZON, "post-fault simulation length [s]"),
    "workers": (None, "worker processes; CCTPCA_WORKERS or 1 when unset"),
    "out_dir": (None, "directory for CSV/JSON outputs"),
    "ranking": (None, "ranking CSV/JSON that selects the reduced uncertainty set"),
    "params": (None, "parameter-vector CSV replacing the nominal values"),
}

_INT = {"fault_bus", "n", "seed", "samples", "workers"}
_FLOAT = {"threshold", "cv_load", "cv_line", "tol", "step", "h_rel", "h_abs", "max_clearing", "horizon"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    system: str | None = None
    case: str | None = None
    fault_bus: int | None = None
    clear_line: str | None = None
    threshold: float = 0.95
    cv_load: float = 0.05
    cv_line: float = 0.025
    n: int = DEFAULT_N
    seed: int = 0
    tol: float = DEFAULT_TOL
    step: float = DEFAULT_STEP
    samples: int = DEFAULT_SAMPLES
    h_rel: float = DEFAULT_H_REL
    h_abs: float = DEFAULT_H_ABS
    max_clearing: float = DEFAULT_MAX_CLEARING
    horizon: float = DEFAULT_HORIZON
    workers: int | None = None
    out_dir: str | None = None
    ranking: str | None = None
    params: str | None = None

    def validate(self) -> "RunConfig":
        for name in ("system", "ranking", "params"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{name} file not found: {path}")
        if self.case is not None and self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}; expected one of {', '.join(CASES)}")
        if not 0 < self.threshold <= 1:
            raise ConfigError("threshold must be in (0, 1]")
        if self.cv_load < 0 or self.cv_line < 0:
            raise ConfigError("coefficients of variation must be non-negative")
        if self.n < 1:
            raise ConfigError("N must be at least 1")
        if self.samples < 2:
            raise ConfigError("samples must be at least 2")
        for name in ("tol", "step", "h_rel", "h_abs", "max_clearing", "horizon"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive and finite")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be at least 1")
        return self

    @property
    def worker_count(self) -> int:
        if self.workers is not None:
            return self.workers
        try:
            return max(1, int(os.environ.get("CCTPCA_WORKERS", "1")))
        except ValueError:
            raise ConfigError("CCTPCA_WORKERS must be an integer") from None

    def scenario(self) -> FaultScenario:
        """Scenario from ``case``, with ``fault_bus``/``clear_line`` taking precedence."""
        base = CASES[self.case] if self.case else None
        bus = self.fault_bus if self.fault_bus is not None else (base.faulted_bus if base else None)
        line = self.clear_line if self.clear_line is not None else (base.cleared_line if base else None)
        if bus is None or line is None:
            raise ConfigError("a scenario needs --case or both --fault-bus and --clear-line")
        name = self.case if base and (bus, line) == (base.faulted_bus, base.cleared_line) else f"bus{bus}/{line}"
        return FaultScenario(bus, line, self.max_clearing, self.horizon, name)


def _coerce(key: str, value):
    if value is None:
        return None
    try:
        if key in _INT:
            return int(value)
        if key in _FLOAT:
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    return str(value)


def read_config_file(path: str | Path) -> dict:
    """Parse flat ``key = value`` text into a dict of typed values."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_").lower()
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def build_config(file_values: dict | None = None, flag_values: dict | None = None) -> RunConfig:
    """Merge defaults, file values and flags (flags win); unset flags are ``None``."""
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    merged = {}
    for source in (file_values or {}, flag_values or {}):
        for k, v in source.items():
            if k in known and v is not None:
                merged[k] = _coerce(k, v)
    return replace(cfg, **merged).validate()
