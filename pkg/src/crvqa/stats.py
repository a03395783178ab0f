"""Opinion-score processing and metric-agreement statistics.

MOS/DMOS, BT.500-style subject screening, the five-parameter logistic
mapping fitted by Levenberg-Marquardt, and SROCC / PLCC / RMSE.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

__all__ = [
    "ScoreMatrix",
    "ScreeningResult",
    "LogisticParams",
    "UndefinedCorrelation",
    "read_scores_csv",
    "mos",
    "dmos",
    "screen_subjects",
    "logistic",
    "fit_logistic",
    "rankdata",
    "srocc",
    "plcc_rmse",
]


class UndefinedCorrelation(ValueError):
    """Correlation requested for a constant vector."""


@dataclass
class ScoreMatrix:
    """Subjects x presentations opinion scores on the 1..5 scale (NaN = missing).

    ``sources[j]`` is the source id of presentation ``j`` and
    ``is_reference[j]`` marks the hidden reference of that source.
    """

    scores: np.ndarray
    subjects: list
    presentations: list
    sources: list
    is_reference: list

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        s, p = self.scores.shape
        if len(self.subjects) != s or len(self.presentations) != p:
            raise ValueError("labels do not match the score grid")
        if len(self.sources) != p or len(self.is_reference) != p:
            raise ValueError("presentation metadata does not match the score grid")
        seen = self.scores[~np.isnan(self.scores)]
        if np.any((seen < 1) | (seen > 5)):
            raise ValueError("scores must lie in 1..5")

    @property
    def missing(self):
        """(subject, presentation) pairs with no score."""
        return [(self.subjects[i], self.presentations[j]) for i, j in zip(*np.nonzero(np.isnan(self.scores)))]

    def subset(self, subjects):
        keep = [i for i, s in enumerate(self.subjects) if s in set(subjects)]
        return ScoreMatrix(self.scores[keep], [self.subjects[i] for i in keep], list(self.presentations),
                           list(self.sources), list(self.is_reference))


def read_scores_csv(text):
    """Parse ``subject_id,presentation_id,score[,source_id,is_reference]`` rows.

    Without the metadata columns each presentation is its own source and no
    hidden references are known.
    """
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("no score rows")
    for col in ("subject_id", "presentation_id", "score"):
        if col not in rows[0]:
            raise ValueError(f"missing column {col!r}")
    subjects = list(dict.fromkeys(r["subject_id"] for r in rows))
    pres = list(dict.fromkeys(r["presentation_id"] for r in rows))
    si = {s: i for i, s in enumerate(subjects)}
    pi = {p: i for i, p in enumerate(pres)}
    grid = np.full((len(subjects), len(pres)), np.nan)
    sources = list(pres)
    refs = [False] * len(pres)
    for r in rows:
        j = pi[r["presentation_id"]]
        grid[si[r["subject_id"]], j] = float(r["score"])
        if r.get("source_id"):
            sources[j] = r["source_id"]
        if r.get("is_reference"):
            refs[j] = r["is_reference"].strip().lower() in ("1", "true", "yes")
    return ScoreMatrix(grid, subjects, pres, sources, refs)


def mos(matrix):
    """Mean opinion score per presentation (missing scores ignored)."""
    return np.nanmean(matrix.scores, axis=0)


def dmos(matrix):
    """ACR-HR differential scores: mean over subjects of ``score - ref + 5``."""
    ref_col = {}
    for j, (src, is_ref) in enumerate(zip(matrix.sources, matrix.is_reference)):
        if is_ref:
            ref_col[src] = j
    missing = sorted({s for s in matrix.sources if s not in ref_col})
    if missing:
        raise ValueError(f"no hidden reference for source(s) {missing}")
    cols = [ref_col[s] for s in matrix.sources]
    diff = matrix.scores - matrix.scores[:, cols] + 5.0
    return np.nanmean(diff, axis=0)


@dataclass
class ScreeningResult:
    retained: list
    rejected: list
    P: np.ndarray
    Q: np.ndarray
    kurtosis: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def screen_subjects(matrix):
    """BT.500 outlier screening.

    Per presentation the population kurtosis ``m4 / m2**2`` selects bounds
    ``mean +- 2 std`` (kurtosis in [2, 4]) or ``mean +- sqrt(20) std``, with
    the sample standard deviation.  Subject ``i`` is rejected when
    ``(P_i + Q_i) / (J K) > 0.05`` and ``|(P_i - Q_i) / (P_i + Q_i)| < 0.3``,
    where ``P_i`` / ``Q_i`` count scores strictly above / below the bounds
    and ``J K`` is the number of presentations.
    """
    x = matrix.scores
    if x.shape[0] < 2:
        raise ValueError("screening needs at least 2 subjects")
    mean = np.nanmean(x, axis=0)
    dev = x - mean
    m2 = np.nanmean(dev**2, axis=0)
    m4 = np.nanmean(dev**4, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        kurt = np.where(m2 > 0, m4 / np.where(m2 > 0, m2, 1.0) ** 2, np.nan)
    std = np.nanstd(x, axis=0, ddof=1)
    normal = (kurt >= 2) & (kurt <= 4)
    width = np.where(normal, 2.0, math.sqrt(20.0)) * std
    width = np.where(m2 > 0, width, 0.0)
    upper, lower = mean + width, mean - width
    with np.errstate(invalid="ignore"):
        P = np.sum(x > upper, axis=1)
        Q = np.sum(x < lower, axis=1)
    n = x.shape[1]
    retained, rejected = [], []
    for i, subj in enumerate(matrix.subjects):
        tot = P[i] + Q[i]
        out = tot / n > 0.05 and abs((P[i] - Q[i]) / tot) < 0.3 if tot else False
        (rejected if out else retained).append(subj)
    return ScreeningResult(retained, rejected, P, Q, kurt, lower, upper)


@dataclass
class LogisticParams:
    beta: np.ndarray
    residual: float
    iterations: int = 0
    converged: bool = True
    history: list = field(default_factory=list, repr=False)

    def __call__(self, x):
        return logistic(x, self.beta)


def logistic(x, beta):
    """``b1 (1/2 - 1/(1 + exp(b2 (x - b3)))) + b4 x + b5``."""
    b1, b2, b3, b4, b5 = beta
    x = np.asarray(x, dtype=np.float64)
    return b1 * (0.5 - expit(-b2 * (x - b3))) + b4 * x + b5


def _jacobian(x, beta):
    b1, b2, b3, _, _ = beta
    s = expit(-b2 * (x - b3))
    ds = s * (1 - s)
    return np.column_stack([0.5 - s, b1 * ds * (x - b3), -b1 * ds * b2, x, np.ones_like(x)])


def _project(x, y, beta):
    """Exact least-squares values of the linear coefficients b1, b4, b5."""
    s = expit(-beta[1] * (x - beta[2]))
    A = np.column_stack([0.5 - s, x, np.ones_like(x)])
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    out = beta.copy()
    out[[0, 3, 4]] = coef
    return out


def _refine(x, y, beta, r, sse):
    cand = _project(x, y, beta)
    rc = logistic(x, cand) - y
    sc = float(rc @ rc)
    if sc < sse:
        return cand, rc, sc
    return beta, r, sse


def fit_logistic(x, y, max_iter=500, rtol=1e-10):
    """Least-squares fit of the logistic mapping by Levenberg-Marquardt.

    Starts from ``(range(y), 1/std(x), mean(x), slope, intercept)`` of a
    linear fit.  Steps that do not lower the residual are rejected and the
    damping raised, so the accepted residuals never increase.  The model is
    linear in ``b1, b4, b5``; those are re-solved exactly after the start and
    after every accepted step (kept only when that lowers the residual).
    Stops when an accepted step changes the residual by less than ``rtol``
    relative, or after ``max_iter`` iterations (``converged=False``).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 5:
        raise ValueError("need at least 5 paired points")
    if np.ptp(x) == 0:
        raise ValueError("objective scores are constant")
    slope, intercept = np.polyfit(x, y, 1)
    beta = np.array([np.ptp(y), 1.0 / x.std(), x.mean(), slope, intercept])
    r = logistic(x, beta) - y
    sse = float(r @ r)
    history = [sse]
    beta, r, sse = _refine(x, y, beta, r, sse)
    lam = 1e-3
    history.append(sse)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if sse == 0.0:
            converged = True
            break
        J = _jacobian(x, beta)
        A = J.T @ J
        g = J.T @ r
        step = np.linalg.lstsq(A + lam * np.diag(np.diag(A) + 1e-12), -g, rcond=None)[0]
        trial = beta + step
        rt = logistic(x, trial) - y
        sse_t = float(rt @ rt)
        if np.isfinite(sse_t) and sse_t < sse:
            change = (sse - sse_t) / sse
            beta, r, sse = _refine(x, y, trial, rt, sse_t)
            history.append(sse)
            lam = max(lam / 10.0, 1e-12)
            if change < rtol:
                converged = True
                break
        else:
            lam *= 10.0
            if lam > 1e12:
                converged = True  # no descent direction left at this precision
                break
    return LogisticParams(beta, sse, it, converged, history)


def rankdata(a):
    """Ranks starting at 1, ties sharing their average rank."""
    a = np.asarray(a, dtype=np.float64)
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(a.size)
    sorted_a = a[order]
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    if den == 0:
        raise UndefinedCorrelation("correlation of a constant vector is undefined")
    return float(np.clip((a @ b) / den, -1.0, 1.0))


def srocc(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two equal-length vectors of length >= 2")
    return _pearson(rankdata(x), rankdata(y))


def plcc_rmse(x, y, params=None):
    """PLCC and RMSE between ``f(x)`` and ``y``; identity ``f`` when ``params`` is None."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two equal-length vectors of length >= 2")
    fx = params(x) if params is not None else x
    return _pearson(fx, y), float(np.sqrt(np.mean((fx - y) ** 2)))
