"""Gram matrix of the normalized sensitivities and its dominant direction.

``G = sum_j S_j^T S_j`` is half the Gauss-Newton Hessian of the sampled
log-parameter loss; the factor 2 is left out because it changes neither the
eigenvectors nor the ranking.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .sensitivity import EPS_X, NormalizedSensitivitySeries

DENSE_CAP = 500


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class EigenPair:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int
    method: str = "power"


@dataclass(frozen=True)
class RankEntry:
    parameter_id: str
    index: int
    share: float
    cumulative: float
    selected: bool


@dataclass(frozen=True)
class InfluenceRanking:
    entries: tuple[RankEntry, ...]
    threshold: float
    cumulative_share: float
    eigenvalue: float = float("nan")
    residual: float = float("nan")

    @property
    def selected(self) -> list[str]:
        return [e.parameter_id for e in self.entries if e.selected]

    @property
    def selected_indices(self) -> list[int]:
        return [e.index for e in self.entries if e.selected]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "parameter_id", "share", "cumulative_share", "selected"])
        for rank, e in enumerate(self.entries, start=1):
            w.writerow([rank, e.parameter_id, repr(e.share), repr(e.cumulative), int(e.selected)])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "threshold": self.threshold,
            "cumulative_share": self.cumulative_share,
            "pi_max": self.eigenvalue,
            "residual": self.residual,
            "entries": [
                {
                    "rank": rank,
                    "parameter_id": e.parameter_id,
                    "share": e.share,
                    "cumulative_share": e.cumulative,
                    "selected": e.selected,
                }
                for rank, e in enumerate(self.entries, start=1)
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "InfluenceRanking":
        doc = json.loads(text)
        entries = tuple(
            RankEntry(e["parameter_id"], -1, e["share"], e["cumulative_share"], bool(e["selected"]))
            for e in doc["entries"]
        )
        return cls(entries, doc["threshold"], doc["cumulative_share"], doc.get("pi_max", float("nan")),
                   doc.get("residual", float("nan")))

    @classmethod
    def from_csv(cls, text: str) -> "InfluenceRanking":
        rows = list(csv.DictReader(io.StringIO(text)))
        entries = tuple(
            RankEntry(r["parameter_id"], -1, float(r["share"]), float(r["cumulative_share"]), r["selected"] == "1")
            for r in rows
        )
        chosen = [e.cumulative for e in entries if e.selected]
        return cls(entries, float("nan"), chosen[-1] if chosen else 0.0)


def gram(series: NormalizedSensitivitySeries | np.ndarray) -> np.ndarray:
    """Sum of S_j^T S_j over the samples, accumulated in sample order."""
    mats = series.matrices if hasattr(series, "matrices") else np.asarray(series, dtype=float)
    if mats.ndim != 3 or mats.shape[0] == 0:
        raise ValueError("expected a non-empty (r, n, m) stack")
    G = np.zeros((mats.shape[2], mats.shape[2]))
    for S in mats:
        G += S.T @ S
    return G


def _orient(u: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(u)))
    return -u if u[k] < 0 else u


def power_iteration(G: np.ndarray, tol: float = 1e-10, max_iter: int = 100_000, x0=None) -> EigenPair:
    """Dominant eigenpair of a symmetric PSD matrix.

    Stops when ``||G u - pi u|| <= tol * pi``. Raises ConvergenceError after
    ``max_iter`` iterations, which in practice means the two largest
    eigenvalues are nearly equal.
    """
    G = np.asarray(G, dtype=float)
    m = G.shape[0]
    if x0 is None:
        x0 = np.random.default_rng(0).standard_normal(m)
    u = np.asarray(x0, dtype=float)
    u = u / np.linalg.norm(u)
    if not np.any(G):
        raise ValueError("Gram matrix is zero")
    for it in range(1, max_iter + 1):
        y = G @ u
        pi = float(u @ y)
        res = float(np.linalg.norm(y - pi * u))
        if pi > 0 and res <= tol * pi:
            return EigenPair(pi, _orient(u), res, it)
        ny = np.linalg.norm(y)
        if ny == 0:
            raise ConvergenceError("start vector lies in the null space")
        u = y / ny
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations (residual {res:.3g})")


def full_eigendecomposition(G: np.ndarray, cap: int = DENSE_CAP) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs, eigenvalues descending, eigenvectors as columns."""
    G = np.asarray(G, dtype=float)
    if G.shape[0] > cap:
        raise ValueError(f"matrix size {G.shape[0]} exceeds the dense cap {cap}")
    w, U = np.linalg.eigh(G)
    order = np.argsort(w)[::-1]
    U = U[:, order]
    U = np.column_stack([_orient(U[:, i]) for i in range(U.shape[1])])
    return w[order], U


def dominant_eigenpair(G: np.ndarray, tol: float = 1e-10, max_iter: int = 100_000, cap: int = DENSE_CAP) -> EigenPair:
    """Power iteration, falling back to the dense solver when it stalls."""
    try:
        return power_iteration(G, tol, max_iter)
    except ConvergenceError:
        if G.shape[0] > cap:
            raise
    w, U = full_eigendecomposition(G, cap)
    u = U[:, 0]
    return EigenPair(float(w[0]), u, float(np.linalg.norm(G @ u - w[0] * u)), 0, "dense")


def principal_components(U: np.ndarray, dp: np.ndarray) -> np.ndarray:
    """Projections of a log-parameter displacement on the eigenbasis."""
    return U.T @ np.asarray(dp, dtype=float)


def rank_parameters(pair: EigenPair, ids, threshold: float) -> InfluenceRanking:
    """Order parameters by squared component of the dominant eigenvector.

    The selected set is the shortest prefix whose cumulative share reaches
    ``threshold``; ``threshold >= 1`` selects everything.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    ids = tuple(getattr(ids, "ids", ids))
    u = np.asarray(pair.vector, dtype=float)
    shares = u**2 / np.dot(u, u)
    order = sorted(range(len(ids)), key=lambda k: (-shares[k], k))
    cum = np.cumsum(shares[order])
    if threshold >= 1:
        count = len(ids)
    else:
        hit = np.flatnonzero(cum >= threshold)
        count = int(hit[0]) + 1 if hit.size else len(ids)
    entries = tuple(
        RankEntry(ids[k], k, float(shares[k]), float(cum[pos]), pos < count) for pos, k in enumerate(order)
    )
    return InfluenceRanking(entries, threshold, float(cum[count - 1]), pair.value, pair.residual)


def loss(perturbed, nominal, eps_x: float = EPS_X) -> float:
    """Sampled normalized squared deviation between two angle trajectories.

    Samples whose nominal angle is within ``eps_x`` of zero are skipped, the
    same rows that normalization zeroes.
    """
    xp = np.asarray(getattr(perturbed, "delta", perturbed), dtype=float)
    x0 = np.asarray(getattr(nominal, "delta", nominal), dtype=float)
    if xp.shape != x0.shape:
        raise ValueError("trajectories are not on the same sample grid")
    t_p = getattr(perturbed, "times", None)
    t_0 = getattr(nominal, "times", None)
    if t_p is not None and t_0 is not None and not np.allclose(t_p, t_0, rtol=0, atol=1e-12):
        raise ValueError("trajectories are not on the same sample grid")
    keep = np.abs(x0) >= eps_x
    rel = np.where(keep, (xp - x0) / np.where(keep, x0, 1.0), 0.0)
    return float(np.sum(rel**2))
