"""Monte Carlo operating characteristics: type I error, power and coverage.

A study is a grid of scenario cells.  Every replicate of every cell draws
its data from its own random stream, keyed by (seed, cell, replicate), so
results do not depend on execution order or on the number of workers.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .compare import count_dataset, paired_comparisons, resolve
from .errors import ConfigurationError, RotwinError
from .hierarchy import RotationSet, build_rotation_set
from .inference import MEASURES, RNB, RWO, RWR, win_statistics
from .rng import make_rng
from .simgen import CopulaScenario, FrailtyScenario, logrank_first_event, simulate_arms

log = logging.getLogger(__name__)

SCENARIOS = {"copula": CopulaScenario, "frailty": FrailtyScenario}
DEFAULT_METHODS = {
    "copula": ("RWR", "RNB", "RWO", "WR-per-order", "logrank"),
    "frailty": ("RWR", "RNB", "RWO", "WR-F", "WR-L"),
}
KNOWN_METHODS = {"RWR", "RNB", "RWO", "WR-per-order", "WR-F", "WR-L", "logrank"}
DESK_SCALE = {"n_per_arm": 200, "replicates": 1000}
PAPER_SCALE = {"n_per_arm": 600, "replicates": 5000}
REFERENCE_CHUNK = 200_000


@dataclass
class StudyConfig:
    design: str = "copula"
    base: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    replicates: int = DESK_SCALE["replicates"]
    alpha: float = 0.05
    methods: tuple = ()
    seed: int = 0
    reference_pairs: int = 1_000_000
    max_failure_rate: float = 0.01
    workers: int = 1

    def __post_init__(self):
        if self.design not in SCENARIOS:
            raise ConfigurationError(f"unknown design '{self.design}'")
        if self.replicates < 1:
            raise ConfigurationError("replicates must be >= 1")
        for k, v in self.grid.items():
            if not isinstance(v, (list, tuple)) or len(v) == 0:
                raise ConfigurationError(f"grid entry '{k}' must be a nonempty list")
        self.methods = tuple(self.methods) or DEFAULT_METHODS[self.design]
        unknown = set(self.methods) - KNOWN_METHODS
        if unknown:
            raise ConfigurationError(f"unknown methods: {sorted(unknown)}")
        self.base = dict(self.base)
        self.grid = {k: list(v) for k, v in self.grid.items()}

    def cells(self) -> list[dict]:
        keys = list(self.grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*self.grid.values())]

    def scenario(self, cell: dict):
        params = {**self.base, **cell}
        try:
            return SCENARIOS[self.design](**params)
        except TypeError as exc:
            raise ConfigurationError(f"bad scenario parameters {params}: {exc}") from None

    def at_paper_scale(self) -> "StudyConfig":
        cfg = StudyConfig(**{**asdict(self), "base": {**self.base,
                                                     "n_per_arm": PAPER_SCALE["n_per_arm"]},
                             "replicates": PAPER_SCALE["replicates"]})
        return cfg


# ---------------------------------------------------------------------------
# Per-replicate work


def _method_plan(scenario, methods):
    """Rotation sets evaluated on each replicate, keyed by name."""
    specs = scenario.endpoints
    plan = {"rotation": build_rotation_set(scenario.hierarchy())}
    if "WR-F" in methods:
        plan["WR-F"] = RotationSet.single((0, 1, 2))
    if "WR-L" in methods:
        plan["WR-L"] = RotationSet.single((0, 1, 3))
    return specs, plan


def order_label(order, specs) -> str:
    return "WR[" + ">".join(specs[i].id for i in order) + "]"


def run_replicate(scenario, methods, alpha, seed, cell_index, rep, reference):
    """Outcomes of one replicate: method -> (reject, covered or None, estimate)."""
    rng = make_rng(seed, "data", cell_index, rep)
    ds = simulate_arms(scenario, rng)
    specs, plan = _method_plan(scenario, methods)
    out = {}
    counts = count_dataset(ds, plan["rotation"])
    stats_ = win_statistics(counts, alpha)
    for m in (RWR, RNB, RWO):
        if m not in methods:
            continue
        res = stats_[m]
        if isinstance(res, str):
            raise RotwinError(f"{m}: {res}")
        covered = res.ci[0] <= reference[m] <= res.ci[1]
        out[m] = (res.p_value < alpha, covered, res.estimate)
    if "WR-per-order" in methods:
        rejects = []
        for k, order in enumerate(counts.orders):
            res = win_statistics(counts.select([k]), alpha)[RWR]
            if isinstance(res, str):
                raise RotwinError(f"WR order {k + 1}: {res}")
            rejects.append(res.p_value < alpha)
            out[order_label(order, specs)] = (res.p_value < alpha, None, res.estimate)
        pick = int(make_rng(seed, "wr-r", cell_index, rep).integers(len(rejects)))
        out["WR-R"] = (rejects[pick], None, None)
    for name in ("WR-F", "WR-L"):
        if name in methods:
            res = win_statistics(count_dataset(ds, plan[name]), alpha)[RWR]
            if isinstance(res, str):
                raise RotwinError(f"{name}: {res}")
            out[name] = (res.p_value < alpha, None, res.estimate)
    if "logrank" in methods:
        out["logrank"] = (logrank_first_event(ds).p_value < alpha, None, None)
    return out


def _safe_replicate(args):
    try:
        return run_replicate(*args)
    except (RotwinError, FloatingPointError, ValueError) as exc:
        return f"{type(exc).__name__}: {exc}"


# ---------------------------------------------------------------------------
# Reference values for coverage under alternatives


def reference_values(scenario, n_pairs: int, seed: int, cell_index: int = 0) -> dict:
    """Population RWR, RNB and RWO estimated from independent treated-control pairs.

    Each pair uses a fresh treated and a fresh control subject, so the
    per-rotation win and loss frequencies are unbiased for the pair-level
    probabilities whose ratio defines the estimand.
    """
    if scenario.is_null:
        return {RWR: 1.0, RNB: 0.0, RWO: 1.0, "source": "null scenario", "pairs": 0}
    rotations = build_rotation_set(scenario.hierarchy())
    rng = make_rng(seed, "reference", cell_index)
    wins = losses = 0
    done = 0
    while done < n_pairs:
        n = min(REFERENCE_CHUNK, n_pairs - done)
        ds = simulate_arms(scenario, rng, n_treated=n, n_control=n)
        t, c = ds.arms()
        mats = paired_comparisons(t, c, scenario.endpoints)
        for order in rotations:
            res, _ = resolve(mats, order)
            wins += int((res == 1).sum())
            losses += int((res == -1).sum())
        done += n
    total = rotations.p * n_pairs
    ties = total - wins - losses
    return {
        RWR: wins / losses,
        RNB: (wins - losses) / total,
        RWO: (wins + 0.5 * ties) / (losses + 0.5 * ties),
        "source": f"plug-in from {n_pairs} independent treated-control pairs",
        "pairs": n_pairs,
    }


# ---------------------------------------------------------------------------
# Aggregation


@dataclass
class StudyResult:
    config: StudyConfig
    rows: list  # dicts: cell, params, method, metric, value, mc_se
    references: list  # per cell
    failures: list  # per cell: list of messages
    aborted: list  # per cell: bool
    notes: list = field(default_factory=list)

    def value(self, cell: int, method: str, metric: str) -> float:
        for r in self.rows:
            if r["cell"] == cell and r["method"] == method and r["metric"] == metric:
                return r["value"]
        raise KeyError((cell, method, metric))

    def mc_se(self, cell: int, method: str, metric: str) -> float:
        for r in self.rows:
            if r["cell"] == cell and r["method"] == method and r["metric"] == metric:
                return r["mc_se"]
        raise KeyError((cell, method, metric))

    def methods(self, cell: int) -> list[str]:
        seen = {}
        for r in self.rows:
            if r["cell"] == cell:
                seen.setdefault(r["method"], None)
        return list(seen)


def _rate_row(cell, params, method, metric, hits, n):
    r = hits / n
    return dict(cell=cell, params=params, method=method, metric=metric, value=r,
                mc_se=math.sqrt(r * (1 - r) / n), n=n)


def _aggregate(cell, params, outcomes, is_null):
    rows = []
    n = len(outcomes)
    methods = list(outcomes[0])
    for m in methods:
        rej = [o[m][0] for o in outcomes]
        rows.append(_rate_row(cell, params, m, "rejection_rate", sum(rej), n))
        cov = [o[m][1] for o in outcomes]
        if cov[0] is not None:
            rows.append(_rate_row(cell, params, m, "coverage", sum(cov), n))
        est = [o[m][2] for o in outcomes]
        if est[0] is not None:
            arr = np.array(est, dtype=float)
            sd = float(arr.std(ddof=1)) if n > 1 else 0.0
            rows.append(dict(cell=cell, params=params, method=m, metric="mean_estimate",
                             value=float(arr.mean()), mc_se=sd / math.sqrt(n), n=n))
    per_order = [r for r in rows if r["method"].startswith("WR[") and
                 r["metric"] == "rejection_rate"]
    if per_order:
        best = max(per_order, key=lambda r: r["value"])
        worst = min(per_order, key=lambda r: r["value"])
        for name, src in (("WR-B", best), ("WR-W", worst)):
            rows.append({**src, "method": name})
    return rows


def run_study(config: StudyConfig, progress=None) -> StudyResult:
    """Run every cell of ``config``; see the module docstring for seeding."""
    rows, refs, fails, aborted = [], [], [], []
    notes = []
    for ci, cell in enumerate(config.cells()):
        scenario = config.scenario(cell)
        ref = reference_values(scenario, config.reference_pairs, config.seed, ci)
        refs.append(ref)
        jobs = [(scenario, config.methods, config.alpha, config.seed, ci, rep, ref)
                for rep in range(config.replicates)]
        if config.workers > 1:
            with ProcessPoolExecutor(config.workers) as pool:
                results = list(pool.map(_safe_replicate, jobs, chunksize=16))
        else:
            results = [_safe_replicate(j) for j in jobs]
        ok = [r for r in results if not isinstance(r, str)]
        bad = [r for r in results if isinstance(r, str)]
        fails.append(bad)
        params = {k: _plain(v) for k, v in cell.items()}
        if len(bad) > config.max_failure_rate * config.replicates or not ok:
            aborted.append(True)
            log.warning("cell %d aborted: %d of %d replicates failed", ci, len(bad),
                        config.replicates)
            rows.append(dict(cell=ci, params=params, method="all", metric="failures",
                             value=len(bad), mc_se=0.0, n=config.replicates))
            continue
        aborted.append(False)
        cell_rows = _aggregate(ci, params, ok, scenario.is_null)
        cell_rows.append(dict(cell=ci, params=params, method="all", metric="failures",
                              value=len(bad), mc_se=0.0, n=config.replicates))
        rows.extend(cell_rows)
        notes.extend(_soft_checks(ci, cell_rows))
        if progress:
            progress(ci, cell)
    return StudyResult(config, rows, refs, fails, aborted, notes)


def _soft_checks(cell, rows):
    """RWR power between WR-W and WR-B (2 MC SE); logged, never fatal."""
    get = {(r["method"], r["metric"]): r for r in rows}
    out = []
    if ("WR-B", "rejection_rate") in get and ("RWR", "rejection_rate") in get:
        rwr = get[("RWR", "rejection_rate")]
        for name, sign in (("WR-B", 1), ("WR-W", -1)):
            other = get[(name, "rejection_rate")]
            tol = 2 * math.hypot(rwr["mc_se"], other["mc_se"])
            if sign * (other["value"] - rwr["value"]) < -tol:
                msg = (f"cell {cell}: RWR rejection {rwr['value']:.4f} outside "
                       f"{name} {other['value']:.4f} by more than 2 MC SE")
                log.info(msg)
                out.append(msg)
    return out


def _plain(v):
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


# ---------------------------------------------------------------------------
# Output


def _fmt(v) -> str:
    if isinstance(v, list):
        return "(" + ",".join(_fmt(x) for x in v) + ")"
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def emit_results(result: StudyResult, path) -> list[Path]:
    """Write ``results.csv`` (long format), ``manifest.json`` and, for two-key
    grids, one pivoted ``coverage_<method>.csv`` per measure."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    keys = list(result.config.grid)
    written = []
    csv_path = out / "results.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", *keys, "method", "metric", "value", "mc_se", "n"])
        for r in result.rows:
            w.writerow([r["cell"], *(_fmt(r["params"].get(k)) for k in keys), r["method"],
                        r["metric"], _fmt(float(r["value"])), _fmt(float(r["mc_se"])), r["n"]])
    written.append(csv_path)

    if len(keys) == 2:
        for measure in MEASURES:
            if measure not in result.config.methods:
                continue
            written.append(_pivot(result, keys, measure, out / f"coverage_{measure}.csv"))

    manifest = {
        "schema_version": 1,
        "config": _plain_config(result.config),
        "seed": result.config.seed,
        "cells": [{"cell": i, "params": {k: _plain(v) for k, v in c.items()},
                   "reference": result.references[i],
                   "failures": len(result.failures[i]),
                   "aborted": result.aborted[i]}
                  for i, c in enumerate(result.config.cells())],
        "notes": result.notes,
        "versions": {"rotwin": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
    }
    man_path = out / "manifest.json"
    man_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    written.append(man_path)
    return written


def _pivot(result, keys, measure, path):
    row_key, col_key = keys
    rows_v = result.config.grid[row_key]
    cols_v = result.config.grid[col_key]
    cells = result.config.cells()
    lookup = {}
    for i, c in enumerate(cells):
        if result.aborted[i]:
            continue
        try:
            lookup[(_fmt(_plain(c[row_key])), _fmt(_plain(c[col_key])))] = \
                result.value(i, measure, "coverage")
        except KeyError:
            pass
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([row_key] + [_fmt(_plain(v)) for v in cols_v])
        for rv in rows_v:
            key = _fmt(_plain(rv))
            w.writerow([key] + [
                _fmt(100 * lookup[(key, _fmt(_plain(cv)))]) if (key, _fmt(_plain(cv))) in lookup
                else "" for cv in cols_v])
    return path


def _plain_config(cfg: StudyConfig) -> dict:
    d = asdict(cfg)
    return {k: _plain(v) if not isinstance(v, dict) else
            {kk: _plain(vv) for kk, vv in v.items()} for k, v in d.items()}
