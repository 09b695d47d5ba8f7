"""Monte Carlo distribution of the critical clearing time.

Random draws are stateless: sample ``i`` uses its own stream derived from
``(seed, i)`` and entry ``k`` of that stream always belongs to parameter
``k``. Results therefore do not depend on how samples are spread over
workers, and a reduced study that freezes some parameters reuses exactly the
draws of the full study for the others.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .dynamics import (
    DEFAULT_STEP,
    DEFAULT_TOL,
    FaultScenario,
    PowerFlowError,
    UnstableAtZeroClearing,
    critical_clearing_time,
)
from .netmodel import NetworkReductionError, ParameterVector, PowerSystem

DEFAULT_N = 1000
TRUNCATION = 4.0
UNRELIABLE_FRACTION = 0.10
_POSITIVE = ("P_L", "R", "X", "B")


def default_workers() -> int:
    return max(1, int(os.environ.get("CCTPCA_WORKERS", "1")))


@dataclass(frozen=True)
class UncertaintyModel:
    """Normal parameters with sigma = c_v * |mean|; c_v set per parameter class."""

    cv_load: float = 0.05
    cv_line: float = 0.025
    overrides: dict = field(default_factory=dict)  # class name -> c_v
    truncation: float = TRUNCATION

    def __post_init__(self):
        if self.cv_load < 0 or self.cv_line < 0 or any(v < 0 for v in self.overrides.values()):
            raise ValueError("coefficients of variation must be non-negative")

    def cv(self, cls: str) -> float:
        if cls in self.overrides:
            return self.overrides[cls]
        return self.cv_load if cls in ("P_L", "Q_L") else self.cv_line

    def sigma(self, nominal: ParameterVector) -> np.ndarray:
        cvs = np.array([self.cv(c) for c in nominal.classes])
        return cvs * np.abs(nominal.values)


@dataclass(frozen=True)
class SampleSet:
    seed: int
    samples: np.ndarray  # (N, m)
    frozen_mask: np.ndarray  # True = held at nominal
    ids: tuple[str, ...] = ()

    def __len__(self) -> int:
        return self.samples.shape[0]


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _draw_row(seed: int, i: int, mu: np.ndarray, sigma: np.ndarray, positive: np.ndarray, trunc: float) -> np.ndarray:
    z = _stream(seed, i).standard_normal(len(mu))
    row = mu + sigma * z
    bad = (np.abs(z) > trunc) | (positive & (row <= 0))
    for k in np.flatnonzero(bad):
        sub = _stream(seed, i, int(k))
        for _ in range(10_000):
            zk = sub.standard_normal()
            val = mu[k] + sigma[k] * zk
            if abs(zk) <= trunc and not (positive[k] and val <= 0):
                break
        else:
            val = mu[k]
        row[k] = val
    return row


def sample_parameters(
    nominal: ParameterVector,
    model: UncertaintyModel,
    mask=None,
    n: int = DEFAULT_N,
    seed: int = 0,
) -> SampleSet:
    """Draw ``n`` parameter vectors; entries where ``mask`` is True stay nominal."""
    if n < 1:
        raise ValueError("need at least one sample")
    mu = np.asarray(nominal.values, dtype=float)
    frozen = np.zeros(len(mu), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if frozen.shape != mu.shape:
        raise ValueError("mask does not match the parameter vector")
    sigma = model.sigma(nominal)
    positive = np.isin(nominal.classes, _POSITIVE) & (mu > 0)
    rows = np.empty((n, len(mu)))
    for i in range(n):
        rows[i] = _draw_row(seed, i, mu, sigma, positive, model.truncation)
    rows[:, frozen] = mu[frozen]
    rows[:, sigma == 0] = mu[sigma == 0]
    return SampleSet(int(seed), rows, frozen, nominal.ids)


@dataclass(frozen=True)
class CctDistribution:
    values: np.ndarray  # per sample, NaN where the sample failed
    failures: int
    reasons: tuple[str, ...] = ()

    @property
    def ok_values(self) -> np.ndarray:
        return self.values[np.isfinite(self.values)]

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def mu(self) -> float:
        v = self.ok_values
        return float(np.mean(v)) if v.size else math.nan

    @property
    def sigma(self) -> float:
        v = self.ok_values
        if v.size == 0:
            return math.nan
        return float(np.std(v, ddof=1)) if v.size > 1 else 0.0

    @property
    def unreliable(self) -> bool:
        return self.failures > UNRELIABLE_FRACTION * self.n

    def histogram(self, bins: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        v = self.ok_values
        if bins is None:
            bins = int(min(50, max(1, round(math.sqrt(max(v.size, 1))))))
        counts, edges = np.histogram(v, bins=bins)
        return edges, counts


# per-process state for worker pools
_CTX: dict = {}


def _init(system, ids, scenario, tol, step):
    _CTX.update(system=system, ids=ids, scenario=scenario, tol=tol, step=step)


def _evaluate(row) -> tuple[float, str]:
    c = _CTX
    lam = ParameterVector(row, c["ids"])
    try:
        res = critical_clearing_time(c["system"], lam, c["scenario"], tol=c["tol"], step=c["step"])
    except PowerFlowError:
        return math.nan, "power_flow"
    except NetworkReductionError:
        return math.nan, "reduction"
    except UnstableAtZeroClearing:
        return math.nan, "unstable_at_zero"
    if not res.ok:
        return math.nan, "no_instability"
    return res.t_cr, ""


def estimate_cct_distribution(
    system: PowerSystem,
    sample_set: SampleSet,
    scenario: FaultScenario,
    tol: float = DEFAULT_TOL,
    step: float = DEFAULT_STEP,
    workers: int | None = None,
) -> CctDistribution:
    """Critical clearing time of every sample; failed samples count as failures, in sample order."""
    workers = default_workers() if workers is None else workers
    ids = sample_set.ids
    rows = list(sample_set.samples)
    init_args = (system, ids, scenario, tol, step)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init, initargs=init_args) as pool:
            out = list(pool.map(_evaluate, rows, chunksize=max(1, len(rows) // (8 * workers))))
    else:
        _init(*init_args)
        out = [_evaluate(r) for r in rows]
    values = np.array([v for v, _ in out])
    reasons = tuple(r for _, r in out if r)
    return CctDistribution(values, len(reasons), reasons)


class RetentionError(ValueError):
    pass


def variance_retention(full: CctDistribution, reduced: CctDistribution) -> float:
    """sigma_reduced^2 / sigma_full^2."""
    if full.ok_values.size == 0 or reduced.ok_values.size == 0:
        raise RetentionError("empty distribution")
    if full.sigma == 0:
        raise RetentionError("full distribution has zero variance")
    return reduced.sigma**2 / full.sigma**2


def sigma_ratio(full: CctDistribution, reduced: CctDistribution) -> float:
    return math.sqrt(variance_retention(full, reduced))


@dataclass(frozen=True)
class PairedStudy:
    full: CctDistribution
    reduced: CctDistribution
    full_set: SampleSet
    reduced_set: SampleSet

    @property
    def retention(self) -> float:
        return variance_retention(self.full, self.reduced)

    @property
    def sigma_ratio(self) -> float:
        return sigma_ratio(self.full, self.reduced)


def paired_study(
    system: PowerSystem,
    nominal: ParameterVector,
    uncertain_ids,
    scenario: FaultScenario,
    model: UncertaintyModel | None = None,
    n: int = DEFAULT_N,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    step: float = DEFAULT_STEP,
    workers: int | None = None,
) -> PairedStudy:
    """Full-uncertainty and reduced-uncertainty runs on shared draws."""
    model = model or UncertaintyModel()
    keep = np.zeros(len(nominal), dtype=bool)
    for pid in uncertain_ids:
        keep[nominal.position(pid)] = True
    full_set = sample_parameters(nominal, model, None, n, seed)
    reduced_set = sample_parameters(nominal, model, ~keep, n, seed)
    full = estimate_cct_distribution(system, full_set, scenario, tol, step, workers)
    reduced = estimate_cct_distribution(system, reduced_set, scenario, tol, step, workers)
    return PairedStudy(full, reduced, full_set, reduced_set)


def report(
    dist: CctDistribution,
    scenario: FaultScenario,
    sample_set: SampleSet,
    retention: float | None = None,
    timestamp: bool = True,
) -> dict:
    frozen = np.asarray(sample_set.frozen_mask, dtype=bool)
    doc = {
        "scenario": {
            "name": scenario.name,
            "faulted_bus": scenario.faulted_bus,
            "cleared_line": scenario.cleared_line,
        },
        "seed": sample_set.seed,
        "N": len(sample_set),
        "mask": [pid for pid, f in zip(sample_set.ids, frozen) if not f],
        "mu": _num(dist.mu),
        "sigma": _num(dist.sigma),
        "variance_retention": _num(retention),
        "sigma_ratio": _num(math.sqrt(retention) if retention is not None else None),
        "failures": dist.failures,
        "unreliable": dist.unreliable,
    }
    if timestamp:
        doc["timestamp"] = datetime.now(timezone.utc).isoformat()
    return doc


def _num(x):
    if x is None or not math.isfinite(x):
        return None
    return float(x)


def write_outputs(out_dir: str | Path, stem: str, dist: CctDistribution, doc: dict) -> list[Path]:
    """``<stem>.json``, ``<stem>_cct.csv`` (raw values) and ``<stem>_hist.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    p_json = out_dir / f"{stem}.json"
    p_json.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    p_raw = out_dir / f"{stem}_cct.csv"
    with open(p_raw, "w", encoding="utf-8") as fh:
        fh.write("sample,t_cr\n")
        for i, v in enumerate(dist.values):
            fh.write(f"{i},{'' if not np.isfinite(v) else repr(float(v))}\n")
    p_hist = out_dir / f"{stem}_hist.csv"
    edges, counts = dist.histogram()
    with open(p_hist, "w", encoding="utf-8") as fh:
        fh.write("bin_left,bin_right,count\n")
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            fh.write(f"{float(lo)!r},{float(hi)!r},{int(c)}\n")
    return [p_json, p_raw, p_hist]
