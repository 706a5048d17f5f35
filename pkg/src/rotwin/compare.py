"""Winning/losing functions and pairwise comparison across rotations.

The per-endpoint comparison of every treated subject against every control
is computed once as an int8 matrix (+1 treated wins, -1 control wins, 0 tie).
Each rotation then resolves pairs by taking the first nonzero entry along its
endpoint order.  Besides the integer counts, a pass over the pair results
accumulates the sufficient statistics for the U-statistic covariance
(row sums, column sums and the cross-product matrix of the 2p indicator
tables), so inference never needs the full tables.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import AnalysisError, ConfigurationError
from .hierarchy import (
    Direction,
    EndpointKind,
    EndpointSpec,
    Hierarchy,
    RotationSet,
)

# Above this many pair-rotation cells the per-rotation tables are not kept.
DEFAULT_TABLE_LIMIT = 60_000_000
# Pairs processed per chunk when accumulating the summary.
CHUNK_PAIRS = 250_000


# ---------------------------------------------------------------------------
# Outcomes and subjects


@dataclass(frozen=True)
class TimeToEvent:
    time: float
    event: bool


@dataclass(frozen=True)
class EventCount:
    count: int


@dataclass(frozen=True)
class Continuous:
    value: float


Outcome = Union[TimeToEvent, EventCount, Continuous]

_KIND_OF = {
    TimeToEvent: EndpointKind.TIME_TO_EVENT,
    EventCount: EndpointKind.EVENT_COUNT,
    Continuous: EndpointKind.CONTINUOUS,
}


class Arm(str, enum.Enum):
    TREATMENT = "treatment"
    CONTROL = "control"


@dataclass(frozen=True)
class Subject:
    id: str
    arm: Arm
    outcomes: tuple
    stratum: str = "all"
    followup: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "arm", Arm(self.arm))
        object.__setattr__(self, "outcomes", tuple(self.outcomes))


class Result(enum.IntEnum):
    """Tri-state outcome of a comparison, from the first argument's side."""

    LOSS = -1
    TIE = 0
    WIN = 1


def _check_kind(outcome, spec: EndpointSpec):
    kind = _KIND_OF.get(type(outcome))
    if kind is not spec.kind:
        raise ConfigurationError(
            f"endpoint '{spec.id}' expects {spec.kind.value} outcome, "
            f"got {type(outcome).__name__}"
        )


def compare_endpoint(a: Outcome, b: Outcome, spec: EndpointSpec,
                     followup_a=None, followup_b=None) -> Result:
    """Compare two outcomes on one endpoint; ``WIN`` means ``a`` is better.

    Censored times: under larger-wins, ``a`` beats ``b`` only if ``b`` had
    the event and ``a`` was observed strictly beyond ``b``'s event time plus
    the margin.  Counts are compared as observed (follow-up is not used).
    """
    _check_kind(a, spec)
    _check_kind(b, spec)
    m = spec.margin
    larger = spec.direction is Direction.LARGER_WINS
    if spec.kind is EndpointKind.TIME_TO_EVENT:
        if larger:
            a_wins = b.event and a.time > b.time + m
            b_wins = a.event and b.time > a.time + m
        else:
            a_wins = a.event and a.time + m < b.time
            b_wins = b.event and b.time + m < a.time
    else:
        va = a.count if spec.kind is EndpointKind.EVENT_COUNT else a.value
        vb = b.count if spec.kind is EndpointKind.EVENT_COUNT else b.value
        if larger:
            a_wins, b_wins = va > vb + m, vb > va + m
        else:
            a_wins, b_wins = va + m < vb, vb + m < va
    if a_wins:
        return Result.WIN
    if b_wins:
        return Result.LOSS
    return Result.TIE


def compare_pair(i: Subject, j: Subject, order: Sequence[int],
                 specs: Sequence[EndpointSpec]) -> tuple[Result, int | None]:
    """Walk ``order`` and return the first determinate result for ``i``.

    The second element is the 0-based position within ``order`` that decided
    the pair, or None for a tie on every endpoint.
    """
    for pos, e in enumerate(order):
        r = compare_endpoint(i.outcomes[e], j.outcomes[e], specs[e],
                             i.followup, j.followup)
        if r is not Result.TIE:
            return r, pos
    return Result.TIE, None


# ---------------------------------------------------------------------------
# Columnar storage


@dataclass
class ArmData:
    """Outcome columns for the subjects of one arm (optionally one stratum).

    ``values[e]`` holds times, counts or values for endpoint ``e``;
    ``events[e]`` holds the event flags for time-to-event endpoints and is
    None otherwise.
    """

    values: list
    events: list

    def __len__(self):
        return len(self.values[0]) if self.values else 0

    def take(self, idx) -> "ArmData":
        return ArmData(
            [v[idx] for v in self.values],
            [None if e is None else e[idx] for e in self.events],
        )

    @classmethod
    def from_subjects(cls, subjects: Sequence[Subject], specs: Sequence[EndpointSpec]):
        values, events = [], []
        for e, spec in enumerate(specs):
            outs = [s.outcomes[e] for s in subjects]
            for o in outs:
                _check_kind(o, spec)
            if spec.kind is EndpointKind.TIME_TO_EVENT:
                values.append(np.array([o.time for o in outs], dtype=float))
                events.append(np.array([bool(o.event) for o in outs], dtype=bool))
            elif spec.kind is EndpointKind.EVENT_COUNT:
                values.append(np.array([o.count for o in outs], dtype=float))
                events.append(None)
            else:
                values.append(np.array([o.value for o in outs], dtype=float))
                events.append(None)
        return cls(values, events)


@dataclass
class Dataset:
    """A whole trial in columnar form."""

    specs: tuple
    ids: np.ndarray
    treated: np.ndarray  # bool per subject
    strata: np.ndarray
    data: ArmData  # all subjects, in row order
    followup: np.ndarray  # nan where absent

    def __len__(self):
        return len(self.ids)

    @classmethod
    def from_subjects(cls, subjects: Sequence[Subject], specs: Sequence[EndpointSpec]):
        specs = tuple(specs)
        for s in subjects:
            if len(s.outcomes) != len(specs):
                raise ConfigurationError(
                    f"subject '{s.id}' has {len(s.outcomes)} outcomes, expected {len(specs)}"
                )
        return cls(
            specs=specs,
            ids=np.array([s.id for s in subjects], dtype=object),
            treated=np.array([s.arm is Arm.TREATMENT for s in subjects], dtype=bool),
            strata=np.array([s.stratum for s in subjects], dtype=object),
            data=ArmData.from_subjects(subjects, specs),
            followup=np.array(
                [np.nan if s.followup is None else s.followup for s in subjects], dtype=float
            ),
        )

    def subjects(self) -> list[Subject]:
        out = []
        for r in range(len(self)):
            outcomes = []
            for e, spec in enumerate(self.specs):
                v = self.data.values[e][r]
                if spec.kind is EndpointKind.TIME_TO_EVENT:
                    outcomes.append(TimeToEvent(float(v), bool(self.data.events[e][r])))
                elif spec.kind is EndpointKind.EVENT_COUNT:
                    outcomes.append(EventCount(int(v)))
                else:
                    outcomes.append(Continuous(float(v)))
            fu = self.followup[r]
            out.append(Subject(
                id=str(self.ids[r]),
                arm=Arm.TREATMENT if self.treated[r] else Arm.CONTROL,
                outcomes=tuple(outcomes),
                stratum=str(self.strata[r]),
                followup=None if np.isnan(fu) else float(fu),
            ))
        return out

    def subset(self, mask) -> "Dataset":
        idx = np.flatnonzero(mask)
        return Dataset(self.specs, self.ids[idx], self.treated[idx], self.strata[idx],
                       self.data.take(idx), self.followup[idx])

    def arms(self) -> tuple[ArmData, ArmData]:
        return (self.data.take(np.flatnonzero(self.treated)),
                self.data.take(np.flatnonzero(~self.treated)))

    def stratum_labels(self) -> list[str]:
        """Distinct strata in order of first appearance."""
        seen = {}
        for s in self.strata:
            seen.setdefault(s, None)
        return list(seen)

    def swap_arms(self) -> "Dataset":
        return Dataset(self.specs, self.ids, ~self.treated, self.strata, self.data, self.followup)


def _as_arm(arm, specs) -> ArmData:
    if isinstance(arm, ArmData):
        return arm
    return ArmData.from_subjects(list(arm), specs)


# ---------------------------------------------------------------------------
# Vectorized comparison


def compare_columns(va, ea, vb, eb, spec: EndpointSpec) -> np.ndarray:
    """Broadcasting form of :func:`compare_endpoint`; returns int8 of +1/0/-1."""
    m = spec.margin
    larger = spec.direction is Direction.LARGER_WINS
    if spec.kind is EndpointKind.TIME_TO_EVENT:
        if larger:
            a_wins = eb & (va > vb + m)
            b_wins = ea & (vb > va + m)
        else:
            a_wins = ea & (va + m < vb)
            b_wins = eb & (vb + m < va)
    elif larger:
        a_wins, b_wins = va > vb + m, vb > va + m
    else:
        a_wins, b_wins = va + m < vb, vb + m < va
    return a_wins.astype(np.int8) - b_wins.astype(np.int8)


def endpoint_matrices(treated: ArmData, control: ArmData,
                      specs: Sequence[EndpointSpec], rows=slice(None)) -> np.ndarray:
    """(q, n_rows, N_c) int8 comparison matrices of treated rows vs all controls."""
    q = len(specs)
    nt = len(treated.values[0][rows])
    out = np.empty((q, nt, len(control)), dtype=np.int8)
    for e, spec in enumerate(specs):
        va = treated.values[e][rows][:, None]
        vb = control.values[e][None, :]
        ea = treated.events[e][rows][:, None] if treated.events[e] is not None else None
        eb = control.events[e][None, :] if control.events[e] is not None else None
        out[e] = compare_columns(va, ea, vb, eb, spec)
    return out


def paired_comparisons(treated: ArmData, control: ArmData,
                       specs: Sequence[EndpointSpec]) -> np.ndarray:
    """(q, n) comparisons of the k-th treated subject with the k-th control only."""
    out = np.empty((len(specs), len(treated)), dtype=np.int8)
    for e, spec in enumerate(specs):
        out[e] = compare_columns(treated.values[e], treated.events[e],
                                 control.values[e], control.events[e], spec)
    return out


def resolve(mats: np.ndarray, order: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """First determinate result along ``order`` and its position (-1 if none)."""
    res = np.zeros(mats.shape[1:], dtype=np.int8)
    pos = np.full(mats.shape[1:], -1, dtype=np.int8)
    for k in range(len(order) - 1, -1, -1):
        m = mats[order[k]]
        hit = m != 0
        res = np.where(hit, m, res)
        pos = np.where(hit, np.int8(k), pos)
    return res, pos


# ---------------------------------------------------------------------------
# Counts and covariance sufficient statistics


@dataclass
class PairSummary:
    """Sufficient statistics of the 2p indicator tables F (wins then losses).

    ``row_sums[a, i] = sum_j F_a(i, j)``, ``col_sums[a, j] = sum_i F_a(i, j)``
    and ``cross[a, b] = sum_ij F_a(i, j) F_b(i, j)``.
    """

    n_treated: int
    n_control: int
    row_sums: np.ndarray
    col_sums: np.ndarray
    cross: np.ndarray

    @property
    def totals(self) -> np.ndarray:
        return self.row_sums.sum(axis=1)

    @property
    def p(self) -> int:
        return self.row_sums.shape[0] // 2

    def select(self, ks: Sequence[int]) -> "PairSummary":
        p = self.p
        idx = list(ks) + [p + k for k in ks]
        return PairSummary(self.n_treated, self.n_control, self.row_sums[idx],
                           self.col_sums[idx], self.cross[np.ix_(idx, idx)])

    def swapped(self) -> "PairSummary":
        p = self.p
        idx = list(range(p, 2 * p)) + list(range(p))
        # swapping arms transposes every table and exchanges wins with losses
        return PairSummary(self.n_control, self.n_treated, self.col_sums[idx],
                           self.row_sums[idx], self.cross[np.ix_(idx, idx)])


def summarize_tables(tables: np.ndarray) -> PairSummary:
    """Build a :class:`PairSummary` from tri-state tables shaped (p, N_t, N_c)."""
    tables = np.asarray(tables)
    p, nt, nc = tables.shape
    f = np.concatenate([(tables == 1), (tables == -1)]).astype(np.float64)
    flat = f.reshape(2 * p, nt * nc)
    return PairSummary(nt, nc, f.sum(axis=2), f.sum(axis=1), flat @ flat.T)


@dataclass
class WinCounts:
    """Exact per-rotation counts plus deciding-position attribution.

    ``wins_at[k, i]`` / ``losses_at[k, i]`` count pairs decided at position
    ``i`` of rotation ``k``; ``ties_after[k, i]`` counts pairs still tied
    after position ``i``.
    """

    n_treated: int
    n_control: int
    orders: tuple
    wins: np.ndarray
    losses: np.ndarray
    ties: np.ndarray
    wins_at: np.ndarray
    losses_at: np.ndarray
    ties_after: np.ndarray
    summary: PairSummary | None = None
    tables: np.ndarray | None = field(default=None, repr=False)

    @property
    def p(self) -> int:
        return len(self.wins)

    @property
    def n_pairs(self) -> int:
        return self.n_treated * self.n_control

    def select(self, ks: Sequence[int]) -> "WinCounts":
        """Counts restricted to rotations ``ks`` (one index gives a standard WR)."""
        ks = list(ks)
        return WinCounts(
            self.n_treated, self.n_control, tuple(self.orders[k] for k in ks),
            self.wins[ks], self.losses[ks], self.ties[ks],
            self.wins_at[ks], self.losses_at[ks], self.ties_after[ks],
            None if self.summary is None else self.summary.select(ks),
            None if self.tables is None else self.tables[ks],
        )

    def swapped(self) -> "WinCounts":
        return WinCounts(
            self.n_control, self.n_treated, self.orders,
            self.losses.copy(), self.wins.copy(), self.ties.copy(),
            self.losses_at.copy(), self.wins_at.copy(), self.ties_after.copy(),
            None if self.summary is None else self.summary.swapped(),
            None if self.tables is None else -np.transpose(self.tables, (0, 2, 1)),
        )


def count_wins_losses(treated, controls, rotations: RotationSet,
                      specs: Sequence[EndpointSpec], *, keep_tables: bool | None = None,
                      table_limit: int = DEFAULT_TABLE_LIMIT) -> WinCounts:
    """Count wins, losses and ties of every treated-control pair in every rotation.

    ``treated`` and ``controls`` are lists of :class:`Subject` or
    :class:`ArmData`.  Per-rotation tri-state tables are retained when the
    pair-rotation count is below ``table_limit`` (or when ``keep_tables`` is
    forced); the covariance summary is always accumulated, row chunk by row
    chunk in fixed order.
    """
    treated = _as_arm(treated, specs)
    controls = _as_arm(controls, specs)
    nt, nc = len(treated), len(controls)
    if nt == 0 or nc == 0:
        raise AnalysisError("both arms must contain at least one subject")
    orders = tuple(rotations.orders)
    p, q = len(orders), len(orders[0])
    if keep_tables is None:
        keep_tables = p * nt * nc <= table_limit

    wins_at = np.zeros((p, q), dtype=np.int64)
    losses_at = np.zeros((p, q), dtype=np.int64)
    row_sums = np.zeros((2 * p, nt))
    col_sums = np.zeros((2 * p, nc))
    cross = np.zeros((2 * p, 2 * p))
    tables = np.empty((p, nt, nc), dtype=np.int8) if keep_tables else None

    step = max(1, CHUNK_PAIRS // max(nc, 1))
    for start in range(0, nt, step):
        rows = slice(start, min(nt, start + step))
        mats = endpoint_matrices(treated, controls, specs, rows)
        r = mats.shape[1]
        f = np.empty((2 * p, r, nc))
        for k, order in enumerate(orders):
            res, pos = resolve(mats, order)
            if tables is not None:
                tables[k, rows] = res
            w, l = res == 1, res == -1
            wins_at[k] += np.bincount(pos[w], minlength=q)
            losses_at[k] += np.bincount(pos[l], minlength=q)
            f[k], f[p + k] = w, l
        row_sums[:, rows] = f.sum(axis=2)
        col_sums += f.sum(axis=1)
        flat = f.reshape(2 * p, r * nc)
        cross += flat @ flat.T

    decided_at = wins_at + losses_at
    ties_after = nt * nc - np.cumsum(decided_at, axis=1)
    wins = wins_at.sum(axis=1)
    losses = losses_at.sum(axis=1)
    return WinCounts(
        nt, nc, orders, wins, losses, nt * nc - wins - losses,
        wins_at, losses_at, ties_after,
        PairSummary(nt, nc, row_sums, col_sums, cross), tables,
    )


def count_dataset(dataset: Dataset, rotations: RotationSet, **kw) -> WinCounts:
    t, c = dataset.arms()
    return count_wins_losses(t, c, rotations, dataset.specs, **kw)


def count_by_stratum(dataset: Dataset, rotations: RotationSet, **kw) -> dict:
    """WinCounts for each stratum, keyed by stratum label (first-seen order)."""
    out = {}
    for label in dataset.stratum_labels():
        sub = dataset.subset(dataset.strata == label)
        t, c = sub.arms()
        if len(t) == 0 or len(c) == 0:
            raise AnalysisError(f"stratum '{label}' has an empty arm")
        out[label] = count_wins_losses(t, c, rotations, dataset.specs, **kw)
    return out


# ---------------------------------------------------------------------------
# Block-level decomposition


@dataclass
class BlockRow:
    label: str
    win_pct: float
    tie_pct: float
    loss_pct: float
    block_wr: float | None
    wins: float
    losses: float


@dataclass
class Decomposition:
    rows: list
    total_pairs: float
    p: int
    overall_wr: float | None


def decompose(counts, hierarchy: Hierarchy, weights=None, labels=None) -> Decomposition:
    """Aggregate wins/losses over each block's positions and all rotations.

    ``counts`` is a WinCounts or a sequence of them (strata), combined with
    ``weights`` (default 1).  Tie percentages are the residual ties after the
    block in the first rotation, which is the same in every rotation.
    """
    if isinstance(counts, WinCounts):
        counts = [counts]
    counts = list(counts)
    if weights is None:
        weights = [1.0] * len(counts)
    p = counts[0].p
    wins_at = sum(w * c.wins_at.astype(float) for c, w in zip(counts, weights))
    losses_at = sum(w * c.losses_at.astype(float) for c, w in zip(counts, weights))
    ties_after = sum(w * c.ties_after.astype(float) for c, w in zip(counts, weights))
    pairs = float(sum(w * c.n_pairs for c, w in zip(counts, weights)))

    rows = []
    for b, (lo, hi) in enumerate(hierarchy.block_bounds()):
        bw = wins_at[:, lo:hi].sum()
        bl = losses_at[:, lo:hi].sum()
        label = labels[b] if labels else f"block {b + 1}"
        rows.append(BlockRow(
            label=label,
            win_pct=100.0 * bw / (p * pairs),
            tie_pct=100.0 * ties_after[0, hi - 1] / pairs,
            loss_pct=100.0 * bl / (p * pairs),
            block_wr=(bw / bl) if bl > 0 else None,
            wins=bw, losses=bl,
        ))
    tw, tl = wins_at.sum(), losses_at.sum()
    return Decomposition(rows, pairs, p, tw / tl if tl > 0 else None)
