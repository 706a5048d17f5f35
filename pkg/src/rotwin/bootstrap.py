"""Percentile bootstrap for RWR, RNB and RWO.

Subjects are resampled with replacement within arm (and within stratum), so
arm sizes are fixed.  A resample is represented by multiplicity vectors u, v
over the original treated and control subjects; its win count in rotation k
is ``u @ W_k @ v``, which lets every replicate reuse the original pair
tables instead of recomparing subjects.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .compare import Dataset, count_by_stratum, count_dataset
from .errors import AnalysisError, ConfigurationError
from .hierarchy import RotationSet
from .inference import RNB, RWO, RWR
from .rng import make_rng

BATCH = 256


@dataclass
class BootstrapResult:
    intervals: dict  # measure -> (lower, upper)
    replicates: int
    degenerate: int
    alpha: float
    seed: int
    warnings: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "intervals": {k: list(v) for k, v in self.intervals.items()},
            "replicates": self.replicates,
            "degenerate": self.degenerate,
            "alpha": self.alpha,
            "seed": self.seed,
            "warnings": list(self.warnings),
        }


def _stratum_tables(dataset: Dataset, rotations: RotationSet, stratified: bool):
    if stratified:
        counts = list(count_by_stratum(dataset, rotations, keep_tables=True).values())
    else:
        counts = [count_dataset(dataset, rotations, keep_tables=True)]
    return counts


def bootstrap_ci(dataset: Dataset, rotations: RotationSet, B: int = 1000,
                 seed: int = 0, alpha: float = 0.05, stratified: bool = False,
                 weights=None) -> BootstrapResult:
    """Percentile intervals from ``B`` within-arm resamples.

    Resamples with no losses are skipped; if more than 10% are skipped a
    warning is attached to the result.
    """
    if B < 100:
        raise ConfigurationError(f"bootstrap needs at least 100 replicates, got {B}")
    strata = _stratum_tables(dataset, rotations, stratified)
    if weights is None:
        weights = [1.0] * len(strata)
    rng = make_rng(seed, "bootstrap")

    n_win = np.zeros(B)
    n_loss = np.zeros(B)
    total = 0.0
    for c, w in zip(strata, weights):
        tab = c.tables
        # only totals over rotations enter the estimates
        win_tab = (tab == 1).sum(axis=0).astype(np.float64)
        loss_tab = (tab == -1).sum(axis=0).astype(np.float64)
        nt, nc = c.n_treated, c.n_control
        total += w * c.p * nt * nc
        for start in range(0, B, BATCH):
            b = min(B, start + BATCH) - start
            u = rng.multinomial(nt, np.full(nt, 1.0 / nt), size=b).astype(np.float64)
            v = rng.multinomial(nc, np.full(nc, 1.0 / nc), size=b).astype(np.float64)
            n_win[start:start + b] += w * np.einsum("bj,bj->b", u @ win_tab, v)
            n_loss[start:start + b] += w * np.einsum("bj,bj->b", u @ loss_tab, v)

    ok = (n_loss > 0) & (n_win > 0)
    n_bad = int((~ok).sum())
    if ok.sum() < 2:
        raise AnalysisError("bootstrap: every resample was degenerate")
    nw, nl = n_win[ok], n_loss[ok]
    ties = total - nw - nl
    lo_q, hi_q = alpha / 2.0, 1.0 - alpha / 2.0
    log_rwr = np.log(nw) - np.log(nl)
    rnb = (nw - nl) / total
    log_rwo = np.log(nw + 0.5 * ties) - np.log(nl + 0.5 * ties)
    intervals = {
        RWR: tuple(math.exp(x) for x in np.quantile(log_rwr, [lo_q, hi_q])),
        RNB: tuple(float(x) for x in np.quantile(rnb, [lo_q, hi_q])),
        RWO: tuple(math.exp(x) for x in np.quantile(log_rwo, [lo_q, hi_q])),
    }
    notes = []
    if n_bad > 0.1 * B:
        msg = f"{n_bad} of {B} bootstrap resamples were degenerate and skipped"
        notes.append(msg)
        warnings.warn(msg)
    return BootstrapResult(intervals, B, n_bad, alpha, seed, notes)
