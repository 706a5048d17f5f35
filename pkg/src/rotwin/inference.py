"""Asymptotic inference for rotation win statistics.

Counts across rotations are jointly asymptotically normal; their 2p x 2p
covariance is estimated with two-sample U-statistic projections.  The ratio
and odds measures use the delta method on the log scale, the net benefit is
handled on the linear scale.  Hypothesis tests recompute the covariance with
the win and loss probabilities replaced by their pooled average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .compare import PairSummary, WinCounts
from .errors import ConfigurationError, InferenceError

RWR, RNB, RWO = "RWR", "RNB", "RWO"
MEASURES = (RWR, RNB, RWO)


@dataclass
class ThetaVector:
    """Plug-in win and loss probabilities per rotation."""

    win: np.ndarray
    loss: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.win, self.loss])

    def null(self) -> "ThetaVector":
        mid = (self.win + self.loss) / 2.0
        return ThetaVector(mid, mid.copy())


def estimate_theta(counts: WinCounts) -> ThetaVector:
    n = counts.n_pairs
    if n <= 0:
        raise InferenceError("no pairs to compare")
    return ThetaVector(counts.wins / n, counts.losses / n)


@dataclass
class CovarianceMatrix:
    """Covariance of (wins_1..wins_p, losses_1..losses_p).

    ``treated_part`` and ``control_part`` are the two projection components
    (scaled by N_t N_c / (N - 1)); ``matrix`` combines them as
    ``treated_part / N_t + control_part / N_c``.
    """

    matrix: np.ndarray
    treated_part: np.ndarray
    control_part: np.ndarray

    @property
    def p(self) -> int:
        return self.matrix.shape[0] // 2

    def grouped(self) -> np.ndarray:
        """2x2 covariance of (total wins, total losses), i.e. G Sigma G^T."""
        p = self.p
        s = self.matrix
        return np.array([
            [s[:p, :p].sum(), s[:p, p:].sum()],
            [s[p:, :p].sum(), s[p:, p:].sum()],
        ])


def _summary_of(pair_results) -> PairSummary:
    if isinstance(pair_results, WinCounts):
        if pair_results.summary is None:
            raise InferenceError("counts were computed without a pair summary")
        return pair_results.summary
    return pair_results


def covariance_matrix(pair_results, theta=None) -> CovarianceMatrix:
    """Estimate the count covariance from the pair summary.

    ``theta`` sets the centering constants (a ThetaVector or a length-2p
    array); it defaults to the observed plug-in probabilities.  Each
    off-diagonal sum over j' != j is obtained from row sums:
    sum_j sum_{j'!=j} x_j y_j' = (sum_j x_j)(sum_j y_j) - sum_j x_j y_j.
    """
    s = _summary_of(pair_results)
    nt, nc = s.n_treated, s.n_control
    if nt < 2 or nc < 2:
        raise InferenceError("insufficient subjects for variance estimation")
    totals = s.totals
    if theta is None:
        c = totals / (nt * nc)
    elif isinstance(theta, ThetaVector):
        c = theta.vector
    else:
        c = np.asarray(theta, dtype=float)

    centered_prod = (s.cross - np.outer(totals, c) - np.outer(c, totals)
                     + nt * nc * np.outer(c, c))
    r = s.row_sums - nc * c[:, None]
    k = s.col_sums - nt * c[:, None]
    within_rows = r @ r.T - centered_prod
    within_cols = k @ k.T - centered_prod
    treated_part = nt * nc / (nc - 1) * within_rows
    control_part = nt * nc / (nt - 1) * within_cols
    m = treated_part / nt + control_part / nc
    m = (m + m.T) / 2.0
    return CovarianceMatrix(m, treated_part, control_part)


# ---------------------------------------------------------------------------
# Point estimates


def rwr_estimate(counts: WinCounts) -> float:
    """Sum of wins over sum of losses across rotations; +inf when no losses."""
    w, l = int(counts.wins.sum()), int(counts.losses.sum())
    if l == 0:
        return math.inf if w > 0 else math.nan
    return w / l


def rnb_estimate(counts: WinCounts) -> float:
    return float(counts.wins.sum() - counts.losses.sum()) / (counts.p * counts.n_pairs)


def rwo_estimate(counts: WinCounts) -> float:
    w, l = float(counts.wins.sum()), float(counts.losses.sum())
    ties = counts.p * counts.n_pairs - w - l
    den = l + 0.5 * ties
    if den == 0:
        return math.inf
    return (w + 0.5 * ties) / den


def is_degenerate(counts: WinCounts) -> bool:
    return counts.wins.sum() == 0 or counts.losses.sum() == 0


# ---------------------------------------------------------------------------
# Interval estimates and tests


@dataclass
class InferenceResult:
    measure: str
    estimate: float
    variance: float  # on the scale named by ``scale``
    scale: str  # "log" or "linear"
    ci: tuple
    p_value: float
    z: float
    null_variance: float
    alpha: float = 0.05
    stratified: bool = False
    log_ci: tuple | None = None

    def as_dict(self) -> dict:
        d = {
            "measure": self.measure,
            "estimate": self.estimate,
            "variance": self.variance,
            "scale": self.scale,
            "ci_lower": self.ci[0],
            "ci_upper": self.ci[1],
            "p_value": self.p_value,
            "z": self.z,
            "null_variance": self.null_variance,
            "alpha": self.alpha,
            "stratified": self.stratified,
        }
        return d


@dataclass
class StratifiedInput:
    strata: list  # WinCounts per stratum
    weights: list = field(default_factory=list)
    labels: list = field(default_factory=list)

    def __post_init__(self):
        if not self.weights:
            self.weights = [1.0] * len(self.strata)
        if not self.labels:
            self.labels = [f"stratum {i + 1}" for i in range(len(self.strata))]
        if len(self.weights) != len(self.strata):
            raise ConfigurationError("one weight per stratum is required")
        for lab, w in zip(self.labels, self.weights):
            if not (w > 0):
                raise ConfigurationError(f"stratum '{lab}': weight must be positive, got {w}")
        if len({c.p for c in self.strata}) > 1:
            raise ConfigurationError("all strata must share the same rotation set")


@dataclass
class _Pooled:
    """Weighted totals and their 2x2 covariance, observed and null-centered."""

    nu: np.ndarray  # (N+, N-)
    lam: np.ndarray
    lam0: np.ndarray
    m: float  # p * sum_s w N_t N_c


def _pool(strata: Sequence[WinCounts], weights: Sequence[float], cov=None) -> _Pooled:
    nu = np.zeros(2)
    lam = np.zeros((2, 2))
    lam0 = np.zeros((2, 2))
    m = 0.0
    for idx, (c, w) in enumerate(zip(strata, weights)):
        if c.n_treated < 2 or c.n_control < 2:
            raise InferenceError(
                f"stratum {idx + 1}: insufficient subjects for variance estimation "
                f"(N_t={c.n_treated}, N_c={c.n_control})"
            )
        nu += w * np.array([c.wins.sum(), c.losses.sum()], dtype=float)
        sigma = cov if (cov is not None and len(strata) == 1) else covariance_matrix(c)
        lam += w * w * sigma.grouped()
        lam0 += w * w * covariance_matrix(c, estimate_theta(c).null()).grouped()
        m += w * c.p * c.n_pairs
    return _Pooled(nu, lam, lam0, m)


def _z_crit(alpha: float) -> float:
    if not (0 < alpha < 1):
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    return float(norm.ppf(1.0 - alpha / 2.0))


def _two_sided(z: float) -> float:
    return float(min(1.0, 2.0 * norm.sf(abs(z))))


def _contrast(lam: np.ndarray) -> float:
    return float(lam[0, 0] + lam[1, 1] - 2.0 * lam[0, 1])


def _rwr_from_pooled(pl: _Pooled, alpha: float, stratified: bool) -> InferenceResult:
    n_win, n_loss = pl.nu
    if n_loss <= 0:
        raise InferenceError("degenerate: no losses")
    if n_win <= 0:
        raise InferenceError("degenerate: no wins")
    d = np.array([1.0 / n_win, 1.0 / n_loss])
    omega = pl.lam * np.outer(d, d)
    var = _contrast(omega)
    if not (var > 0):
        raise InferenceError(f"nonpositive variance of log(RWR): {var}")
    mid = (n_win + n_loss) / 2.0
    var0 = _contrast(pl.lam0) / mid**2
    if not (var0 > 0):
        raise InferenceError(f"degenerate null variance of log(RWR): {var0}")
    est = n_win / n_loss
    log_est = math.log(n_win) - math.log(n_loss)
    half = _z_crit(alpha) * math.sqrt(var)
    log_ci = (log_est - half, log_est + half)
    z = log_est / math.sqrt(var0)
    return InferenceResult(RWR, est, var, "log", (math.exp(log_ci[0]), math.exp(log_ci[1])),
                           _two_sided(z), z, var0, alpha, stratified, log_ci)


def _rnb_from_pooled(pl: _Pooled, alpha: float, stratified: bool) -> InferenceResult:
    n_win, n_loss = pl.nu
    est = (n_win - n_loss) / pl.m
    var = _contrast(pl.lam) / pl.m**2
    var0 = _contrast(pl.lam0) / pl.m**2
    if not (var > 0):
        raise InferenceError(f"nonpositive variance of RNB: {var}")
    if not (var0 > 0):
        raise InferenceError(f"degenerate null variance of RNB: {var0}")
    half = _z_crit(alpha) * math.sqrt(var)
    z = est / math.sqrt(var0)
    return InferenceResult(RNB, est, var, "linear", (est - half, est + half),
                           _two_sided(z), z, var0, alpha, stratified)


def _rwo_from_pooled(pl: _Pooled, alpha: float, stratified: bool) -> InferenceResult:
    n_win, n_loss = pl.nu
    m = pl.m
    ties = m - n_win - n_loss
    num, den = n_win + 0.5 * ties, n_loss + 0.5 * ties
    if den <= 0 or num <= 0:
        raise InferenceError("degenerate: win odds undefined")
    eta = n_win + 0.5 * (m - n_win - n_loss)
    var = _contrast(pl.lam) * (1.0 / eta + 1.0 / (m - eta)) ** 2 / 4.0
    eta0 = m / 2.0
    var0 = _contrast(pl.lam0) * (1.0 / eta0 + 1.0 / (m - eta0)) ** 2 / 4.0
    if not (var > 0):
        raise InferenceError(f"nonpositive variance of log(RWO): {var}")
    if not (var0 > 0):
        raise InferenceError(f"degenerate null variance of log(RWO): {var0}")
    est = num / den
    log_est = math.log(num) - math.log(den)
    half = _z_crit(alpha) * math.sqrt(var)
    log_ci = (log_est - half, log_est + half)
    z = log_est / math.sqrt(var0)
    return InferenceResult(RWO, est, var, "log", (math.exp(log_ci[0]), math.exp(log_ci[1])),
                           _two_sided(z), z, var0, alpha, stratified, log_ci)


def rwr_inference(counts: WinCounts, cov: CovarianceMatrix | None = None,
                  alpha: float = 0.05) -> InferenceResult:
    """Wald interval for RWR on the log scale, with the null-centered test."""
    return _rwr_from_pooled(_pool([counts], [1.0], cov), alpha, False)


def rwr_test(counts: WinCounts) -> float:
    """Two-sided p-value for H0: RWR = 1."""
    return rwr_inference(counts).p_value


def rnb_rwo_inference(counts: WinCounts, cov: CovarianceMatrix | None = None,
                      alpha: float = 0.05) -> tuple[InferenceResult, InferenceResult]:
    pl = _pool([counts], [1.0], cov)
    return _rnb_from_pooled(pl, alpha, False), _rwo_from_pooled(pl, alpha, False)


def stratified_inference(data: StratifiedInput, alpha: float = 0.05) -> dict:
    """RWR, RNB and RWO with weighted within-stratum counts."""
    pl = _pool(data.strata, data.weights)
    return {
        RWR: _rwr_from_pooled(pl, alpha, True),
        RNB: _rnb_from_pooled(pl, alpha, True),
        RWO: _rwo_from_pooled(pl, alpha, True),
    }


def win_statistics(counts, alpha: float = 0.05, weights=None) -> dict:
    """All three measures; ``counts`` is one WinCounts or a list of strata.

    Measures that cannot be computed map to the error message instead.
    """
    stratified = not isinstance(counts, WinCounts)
    strata = list(counts) if stratified else [counts]
    weights = list(weights) if weights is not None else [1.0] * len(strata)
    pl = _pool(strata, weights)
    out = {}
    for name, fn in ((RWR, _rwr_from_pooled), (RNB, _rnb_from_pooled), (RWO, _rwo_from_pooled)):
        try:
            out[name] = fn(pl, alpha, stratified)
        except InferenceError as exc:
            out[name] = str(exc)
    return out
