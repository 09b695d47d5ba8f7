"""End-to-end ranking of uncertain parameters for one fault scenario."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DEFAULT_STEP, DEFAULT_TOL, FaultScenario, Trajectory
from .netmodel import ParameterVector, PowerSystem
from .pca import EigenPair, InfluenceRanking, dominant_eigenpair, gram, rank_parameters
from .sensitivity import (
    DEFAULT_H_ABS,
    DEFAULT_H_REL,
    DEFAULT_SAMPLES,
    EPS_X,
    NormalizedSensitivitySeries,
    SensitivitySeries,
    fault_on_samples,
    nominal_horizon,
    normalize,
    sensitivity_series,
)


@dataclass(frozen=True)
class RankingResult:
    t_cr: float
    nominal: Trajectory
    series: SensitivitySeries
    normalized: NormalizedSensitivitySeries
    gram: np.ndarray
    pair: EigenPair
    ranking: InfluenceRanking


def rank_scenario(
    system: PowerSystem,
    lam: ParameterVector,
    scenario: FaultScenario,
    threshold: float = 0.95,
    n_samples: int = DEFAULT_SAMPLES,
    h_rel: float = DEFAULT_H_REL,
    h_abs: float = DEFAULT_H_ABS,
    step: float = DEFAULT_STEP,
    tol: float = DEFAULT_TOL,
    eps_x: float = EPS_X,
    workers: int = 1,
) -> RankingResult:
    t_cr = nominal_horizon(system, lam, scenario, tol=tol, step=step)
    nominal = fault_on_samples(system, lam, scenario, n_samples, t_cr, step)
    series = sensitivity_series(system, lam, scenario, t_cr, n_samples, h_rel, h_abs, step, workers=workers)
    normalized = normalize(series, nominal, lam, eps_x)
    G = gram(normalized)
    pair = dominant_eigenpair(G)
    return RankingResult(t_cr, nominal, series, normalized, G, pair, rank_parameters(pair, lam.ids, threshold))
