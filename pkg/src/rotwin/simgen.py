"""Synthetic trial generators and the log-rank comparator.

Two designs are supported:

* ``CopulaScenario``: one fatal and three non-fatal event times joined by a
  Gumbel-Hougaard copula with exponential margins;
* ``FrailtyScenario``: a fatal event plus up to J recurrences of a non-fatal
  event, all sharing a Gamma frailty, summarized as the number of
  recurrences (NRE), first recurrence time (FRT) and last recurrence time
  (LRT).

Both add uniform staggered entry, exponential dropout and administrative
censoring at the end of the study.  Hazards are in events per day and the
treatment effect enters as ``rate * exp(-alpha * Z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .compare import ArmData, Dataset
from .errors import AnalysisError, ConfigurationError
from .hierarchy import Direction, EndpointKind, EndpointSpec, Hierarchy

COPULA_ENDPOINTS = (
    EndpointSpec("death"),
    EndpointSpec("nonfatal1"),
    EndpointSpec("nonfatal2"),
    EndpointSpec("nonfatal3"),
)
FRAILTY_ENDPOINTS = (
    EndpointSpec("death"),
    EndpointSpec("nre", EndpointKind.EVENT_COUNT, Direction.SMALLER_WINS),
    EndpointSpec("frt"),
    EndpointSpec("lrt"),
)


@dataclass(frozen=True)
class CopulaScenario:
    n_per_arm: int = 200
    study_days: float = 1000.0
    alpha_nonfatal: tuple = (0.15, 0.15, 0.15)
    alpha_death: float = 0.2
    lambda_death: float = 0.0008
    lambda_nonfatal: tuple = (0.002, 0.0015, 0.001)
    beta: float = 1.1
    accrual_days: float = 200.0
    dropout_rate: float = 0.00016

    design = "copula"

    def __post_init__(self):
        object.__setattr__(self, "alpha_nonfatal", tuple(float(a) for a in self.alpha_nonfatal))
        object.__setattr__(self, "lambda_nonfatal", tuple(float(a) for a in self.lambda_nonfatal))
        if self.beta < 1:
            raise ConfigurationError(f"copula beta must be >= 1, got {self.beta}")
        if self.lambda_death < 0 or min(self.lambda_nonfatal) < 0 or self.dropout_rate < 0:
            raise ConfigurationError("hazards and dropout rate must be nonnegative")
        if len(self.alpha_nonfatal) != len(self.lambda_nonfatal):
            raise ConfigurationError("one non-fatal effect per non-fatal hazard is required")
        if not (self.study_days > self.accrual_days >= 0):
            raise ConfigurationError("need study_days > accrual_days >= 0")
        if self.n_per_arm < 1:
            raise ConfigurationError("n_per_arm must be positive")

    @property
    def is_null(self) -> bool:
        return self.alpha_death == 0 and all(a == 0 for a in self.alpha_nonfatal)

    def null(self) -> "CopulaScenario":
        return replace(self, alpha_death=0.0, alpha_nonfatal=(0.0,) * len(self.alpha_nonfatal))

    @property
    def endpoints(self) -> tuple:
        if len(self.lambda_nonfatal) == 3:
            return COPULA_ENDPOINTS
        return (EndpointSpec("death"),) + tuple(
            EndpointSpec(f"nonfatal{k + 1}") for k in range(len(self.lambda_nonfatal)))

    def hierarchy(self) -> Hierarchy:
        k = len(self.lambda_nonfatal)
        return Hierarchy(((0,), tuple(range(1, k + 1))))


@dataclass(frozen=True)
class FrailtyScenario:
    """Fatal event plus recurrent event with shared Gamma(1/gamma, 1/gamma) frailty.

    ``pattern`` chooses the gap-time effects: "homogeneous" (every gap
    shares ``alpha_death``), "heterogeneous" (only the first gap does) or
    "custom" (``alpha_recurrent`` given explicitly).
    """

    n_per_arm: int = 200
    J: int = 2
    alpha_death: float = 0.1
    pattern: str = "homogeneous"
    alpha_recurrent: tuple = ()
    lambda_death: float = 0.0008
    lambda_recurrent: float = 0.01
    gamma: float = 0.2
    study_days: float = 1000.0
    accrual_days: float = 200.0
    dropout_rate: float = 0.00016

    design = "frailty"

    def __post_init__(self):
        object.__setattr__(self, "alpha_recurrent", tuple(float(a) for a in self.alpha_recurrent))
        if self.gamma <= 0:
            raise ConfigurationError(f"frailty gamma must be > 0, got {self.gamma}")
        if self.J < 1:
            raise ConfigurationError(f"J must be >= 1, got {self.J}")
        if self.pattern not in ("homogeneous", "heterogeneous", "custom"):
            raise ConfigurationError(f"unknown effect pattern '{self.pattern}'")
        if self.pattern == "custom" and len(self.alpha_recurrent) != self.J:
            raise ConfigurationError("custom pattern needs one gap-time effect per recurrence")
        if self.lambda_death < 0 or self.lambda_recurrent < 0 or self.dropout_rate < 0:
            raise ConfigurationError("hazards and dropout rate must be nonnegative")
        if not (self.study_days > self.accrual_days >= 0):
            raise ConfigurationError("need study_days > accrual_days >= 0")
        if self.n_per_arm < 1:
            raise ConfigurationError("n_per_arm must be positive")

    @property
    def gap_effects(self) -> tuple:
        if self.pattern == "homogeneous":
            return (self.alpha_death,) * self.J
        if self.pattern == "heterogeneous":
            return (self.alpha_death,) + (0.0,) * (self.J - 1)
        return self.alpha_recurrent

    @property
    def is_null(self) -> bool:
        return self.alpha_death == 0 and all(a == 0 for a in self.gap_effects)

    def null(self) -> "FrailtyScenario":
        return replace(self, alpha_death=0.0, pattern="homogeneous", alpha_recurrent=())

    @property
    def endpoints(self) -> tuple:
        return FRAILTY_ENDPOINTS

    def hierarchy(self) -> Hierarchy:
        return Hierarchy(((0,), (1,), (2, 3)))


# ---------------------------------------------------------------------------
# Latent event times


def positive_stable(alpha: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draws with Laplace transform exp(-s**alpha), 0 < alpha <= 1 (Kanter / CMS)."""
    theta = rng.uniform(0.0, math.pi, size)
    w = rng.exponential(1.0, size)
    if alpha == 1.0:
        return np.ones(size)
    a = alpha
    return (np.sin(a * theta) / np.sin(theta) ** (1.0 / a)) * (
        np.sin((1.0 - a) * theta) / w) ** ((1.0 - a) / a)


def gumbel_exponential(rates: np.ndarray, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Times with joint survival exp(-[sum_i (rate_i * y_i)**beta]**(1/beta)).

    ``rates`` is (n, d).  Uses the Marshall-Olkin frailty representation: a
    positive stable mixing variable V with index 1/beta and
    U_i = exp(-(E_i / V)**(1/beta)) for iid unit exponentials E_i.
    """
    n, d = rates.shape
    v = positive_stable(1.0 / beta, n, rng)
    e = rng.exponential(1.0, (n, d))
    with np.errstate(divide="ignore"):
        return (e / v[:, None]) ** (1.0 / beta) / rates


def copula_latent(scenario: CopulaScenario, z: np.ndarray, rng) -> np.ndarray:
    """Latent (D*, H1*, ..., Hk*) for subjects with treatment indicators ``z``."""
    z = np.asarray(z, dtype=float)
    lam = np.array((scenario.lambda_death,) + scenario.lambda_nonfatal)
    eff = np.array((scenario.alpha_death,) + scenario.alpha_nonfatal)
    rates = lam[None, :] * np.exp(-eff[None, :] * z[:, None])
    return gumbel_exponential(rates, scenario.beta, rng)


def sample_copula_subject(scenario: CopulaScenario, Z: int, rng) -> tuple:
    return tuple(float(x) for x in copula_latent(scenario, np.array([Z]), rng)[0])


def frailty_latent(scenario: FrailtyScenario, z: np.ndarray, rng):
    """Death times (n,) and gap times (n, J) under a shared Gamma frailty."""
    z = np.asarray(z, dtype=float)
    n = len(z)
    g = scenario.gamma
    xi = rng.gamma(1.0 / g, g, n)
    d_rate = scenario.lambda_death * np.exp(-scenario.alpha_death * z) * xi
    eff = np.array(scenario.gap_effects)
    u_rate = scenario.lambda_recurrent * np.exp(-eff[None, :] * z[:, None]) * xi[:, None]
    e_d = rng.exponential(1.0, n)
    e_u = rng.exponential(1.0, (n, scenario.J))
    with np.errstate(divide="ignore"):
        return e_d / d_rate, e_u / u_rate


def sample_frailty_subject(scenario: FrailtyScenario, Z: int, rng) -> tuple:
    d, u = frailty_latent(scenario, np.array([Z]), rng)
    return float(d[0]), tuple(float(x) for x in u[0])


# ---------------------------------------------------------------------------
# Censoring and observed outcomes


def censoring_times(scenario, n: int, rng) -> np.ndarray:
    """min(administrative censoring after uniform entry, exponential dropout)."""
    entry = rng.uniform(0.0, scenario.accrual_days, n) if scenario.accrual_days > 0 \
        else np.zeros(n)
    e = rng.exponential(1.0, n)
    if scenario.dropout_rate > 0:
        dropout = e / scenario.dropout_rate
    else:
        dropout = np.full(n, np.inf)
    return np.minimum(scenario.study_days - entry, dropout)


def observe_copula(latent: np.ndarray, censor: np.ndarray) -> tuple[ArmData, np.ndarray]:
    """Observed columns: death is censored by C, non-fatal events by min(D*, C)."""
    death = latent[:, 0]
    fu = np.minimum(death, censor)
    values = [fu.copy()]
    events = [death <= censor]
    for k in range(1, latent.shape[1]):
        h = latent[:, k]
        seen = h < fu
        values.append(np.where(seen, h, fu))
        events.append(seen)
    return ArmData(values, events), fu


def observe_frailty(death: np.ndarray, gaps: np.ndarray,
                    censor: np.ndarray) -> tuple[ArmData, np.ndarray]:
    """Observed death, NRE, FRT and LRT; recurrences count while T_j <= min(C, D)."""
    fu = np.minimum(death, censor)
    t = np.cumsum(gaps, axis=1)
    seen = t <= fu[:, None]
    nre = seen.sum(axis=1)
    any_rec = nre > 0
    first = np.where(any_rec, t[:, 0], fu)
    last_idx = np.maximum(nre - 1, 0)
    last = np.where(any_rec, t[np.arange(len(t)), last_idx], fu)
    values = [fu.copy(), nre.astype(float), first, last]
    events = [death <= censor, None, any_rec.copy(), any_rec.copy()]
    return ArmData(values, events), fu


def apply_censoring(latent, scenario, rng, z=None) -> tuple[ArmData, np.ndarray]:
    """Draw censoring times for ``latent`` and return observed columns and follow-up."""
    if isinstance(scenario, CopulaScenario):
        c = censoring_times(scenario, len(latent), rng)
        return observe_copula(latent, c)
    death, gaps = latent
    c = censoring_times(scenario, len(death), rng)
    return observe_frailty(death, gaps, c)


def simulate_arms(scenario, rng, n_treated=None, n_control=None) -> Dataset:
    """One trial: treated subjects first, then controls."""
    nt = scenario.n_per_arm if n_treated is None else n_treated
    nc = scenario.n_per_arm if n_control is None else n_control
    z = np.concatenate([np.ones(nt), np.zeros(nc)])
    if isinstance(scenario, CopulaScenario):
        latent = copula_latent(scenario, z, rng)
    elif isinstance(scenario, FrailtyScenario):
        latent = frailty_latent(scenario, z, rng)
    else:
        raise ConfigurationError(f"unknown scenario type {type(scenario).__name__}")
    data, fu = apply_censoring(latent, scenario, rng)
    ids = np.array([f"T{i + 1:05d}" for i in range(nt)] + [f"C{i + 1:05d}" for i in range(nc)],
                   dtype=object)
    return Dataset(scenario.endpoints, ids, z.astype(bool),
                   np.full(nt + nc, "all", dtype=object), data, fu)


simulate_dataset = simulate_arms


# ---------------------------------------------------------------------------
# Log-rank comparator


@dataclass
class LogRankResult:
    statistic: float
    p_value: float
    observed_treated: float
    expected_treated: float
    variance: float


def logrank_test(time, event, treated) -> LogRankResult:
    """Two-sample log-rank chi-square test (one degree of freedom)."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    treated = np.asarray(treated, dtype=bool)
    if not event.any():
        raise AnalysisError("log-rank test needs at least one event")
    ev_times, d = np.unique(time[event], return_counts=True)
    all_sorted = np.sort(time)
    grp_sorted = np.sort(time[treated])
    n = len(time) - np.searchsorted(all_sorted, ev_times, side="left")
    n1 = len(grp_sorted) - np.searchsorted(grp_sorted, ev_times, side="left")
    ev1 = np.sort(time[event & treated])
    d1 = (np.searchsorted(ev1, ev_times, side="right")
          - np.searchsorted(ev1, ev_times, side="left"))
    expected = d * n1 / n
    with np.errstate(invalid="ignore", divide="ignore"):
        var = np.where(n > 1, d * (n1 / n) * (1 - n1 / n) * (n - d) / (n - 1), 0.0)
    o, e, v = float(d1.sum()), float(expected.sum()), float(var.sum())
    if v <= 0:
        stat = 0.0 if math.isclose(o, e, abs_tol=1e-12) else math.inf
    else:
        stat = (o - e) ** 2 / v
    p = float(stats.chi2.sf(stat, 1)) if math.isfinite(stat) else 0.0
    return LogRankResult(stat, p, o, e, v)


def first_event(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Time to the first observed event of any time-to-event endpoint."""
    n = len(dataset)
    t = np.full(n, np.inf)
    any_ev = np.zeros(n, dtype=bool)
    last_seen = np.zeros(n)
    for e, spec in enumerate(dataset.specs):
        if spec.kind is not EndpointKind.TIME_TO_EVENT:
            continue
        v, ev = dataset.data.values[e], dataset.data.events[e]
        t = np.where(ev & (v < t), v, t)
        any_ev |= ev
        last_seen = np.maximum(last_seen, v)
    fu = np.where(np.isnan(dataset.followup), last_seen, dataset.followup)
    return np.where(any_ev, t, fu), any_ev


def logrank_first_event(dataset: Dataset) -> LogRankResult:
    t, ev = first_event(dataset)
    return logrank_test(t, ev, dataset.treated)
