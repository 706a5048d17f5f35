"""CSV datasets: one row per subject.

Columns: ``id``, ``arm`` (treatment/control, also t/c or 1/0), optional
``stratum``, then per endpoint ``<id>_time`` and ``<id>_event`` for
time-to-event endpoints or ``<id>`` for counts and continuous values, and an
optional ``followup``.  Row numbers in errors are file line numbers (the
header is line 1).
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .compare import ArmData, Dataset
from .errors import ParseError
from .hierarchy import EndpointKind

ARM_LABELS = {
    "treatment": True, "t": True, "1": True, "trt": True,
    "control": False, "c": False, "0": False, "ctl": False,
}


def columns_for(specs) -> list[str]:
    cols = []
    for s in specs:
        if s.kind is EndpointKind.TIME_TO_EVENT:
            cols += [f"{s.id}_time", f"{s.id}_event"]
        else:
            cols.append(s.id)
    return cols


def _float(text, row, col, nonneg=False):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"not a number: {text!r}", row, col) from None
    if math.isnan(v) or math.isinf(v):
        raise ParseError(f"non-finite value {text!r}", row, col)
    if nonneg and v < 0:
        raise ParseError(f"must be >= 0, got {text}", row, col)
    return v


def read_dataset(path, specs) -> Dataset:
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = ["id", "arm"] + columns_for(specs)
        for col in needed:
            if col not in header:
                raise ParseError("missing column", 1, col)
        has_stratum = "stratum" in header
        has_fu = "followup" in header
        ids, arms, strata, fus = [], [], [], []
        values = [[] for _ in specs]
        events = [[] if s.kind is EndpointKind.TIME_TO_EVENT else None for s in specs]
        for line, rec in enumerate(reader, start=2):
            if None in rec:
                raise ParseError("more cells than header columns", line)
            sid = (rec["id"] or "").strip()
            if not sid:
                raise ParseError("empty id", line, "id")
            arm = (rec["arm"] or "").strip().lower()
            if arm not in ARM_LABELS:
                raise ParseError(f"unknown arm label {rec['arm']!r}", line, "arm")
            fu = math.nan
            if has_fu and (rec["followup"] or "").strip() != "":
                fu = _float(rec["followup"], line, "followup", nonneg=True)
            for e, s in enumerate(specs):
                if s.kind is EndpointKind.TIME_TO_EVENT:
                    tcol, ecol = f"{s.id}_time", f"{s.id}_event"
                    t = _float(rec[tcol], line, tcol, nonneg=True)
                    ev = (rec[ecol] or "").strip()
                    if ev not in ("0", "1"):
                        raise ParseError(f"event flag must be 0 or 1, got {rec[ecol]!r}",
                                         line, ecol)
                    if not math.isnan(fu) and t > fu:
                        raise ParseError(f"time {t} exceeds followup {fu}", line, tcol)
                    values[e].append(t)
                    events[e].append(ev == "1")
                elif s.kind is EndpointKind.EVENT_COUNT:
                    v = _float(rec[s.id], line, s.id, nonneg=True)
                    if v != int(v):
                        raise ParseError(f"count must be an integer, got {rec[s.id]!r}",
                                         line, s.id)
                    values[e].append(v)
                else:
                    values[e].append(_float(rec[s.id], line, s.id))
            ids.append(sid)
            arms.append(ARM_LABELS[arm])
            strata.append(((rec["stratum"] or "").strip() or "all") if has_stratum else "all")
            fus.append(fu)
    treated = np.array(arms, dtype=bool)
    if not treated.any() or treated.all():
        raise ParseError("both arms need at least one subject")
    data = ArmData([np.array(v, dtype=float) for v in values],
                   [None if ev is None else np.array(ev, dtype=bool) for ev in events])
    return Dataset(tuple(specs), np.array(ids, dtype=object), treated,
                   np.array(strata, dtype=object), data, np.array(fus, dtype=float))


def write_dataset(dataset: Dataset, path) -> Path:
    """Write ``dataset`` in the schema :func:`read_dataset` accepts (lossless)."""
    path = Path(path)
    specs = dataset.specs
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "arm", "stratum"] + columns_for(specs) + ["followup"])
        for r in range(len(dataset)):
            row = [dataset.ids[r], "treatment" if dataset.treated[r] else "control",
                   dataset.strata[r]]
            for e, s in enumerate(specs):
                v = dataset.data.values[e][r]
                if s.kind is EndpointKind.TIME_TO_EVENT:
                    row += [repr(float(v)), "1" if dataset.data.events[e][r] else "0"]
                elif s.kind is EndpointKind.EVENT_COUNT:
                    row.append(str(int(v)))
                else:
                    row.append(repr(float(v)))
            fu = dataset.followup[r]
            row.append("" if np.isnan(fu) else repr(float(fu)))
            w.writerow(row)
    return path
