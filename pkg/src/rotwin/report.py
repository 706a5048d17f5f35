"""End-to-end analysis of one dataset and its JSON / plain-text rendering."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bootstrap import bootstrap_ci
from .compare import Dataset, count_wins_losses, decompose
from .config import AnalysisConfig
from .errors import AnalysisError, ConfigurationError
from .hierarchy import build_rotation_set, format_order, validate_hierarchy
from .inference import MEASURES, InferenceResult, win_statistics

REPORT_SCHEMA_VERSION = 1


@dataclass
class AnalysisReport:
    endpoints: list
    blocks: list
    rotations: list  # dicts: index, order (ids), label
    n_treated: int
    n_control: int
    counts: dict  # wins / losses / ties per rotation (weighted when stratified)
    estimates: dict  # measure -> dict
    decomposition: list
    rotation_table: dict
    strata: dict
    bootstrap: dict | None = None
    warnings: list = field(default_factory=list)
    alpha: float = 0.05

    def as_dict(self) -> dict:
        return _jsonable({
            "schema_version": REPORT_SCHEMA_VERSION,
            "alpha": self.alpha,
            "endpoints": self.endpoints,
            "hierarchy": self.blocks,
            "rotations": self.rotations,
            "n_treated": self.n_treated,
            "n_control": self.n_control,
            "counts": self.counts,
            "estimates": self.estimates,
            "decomposition": self.decomposition,
            "rotation_table": self.rotation_table,
            "stratification": self.strata,
            "bootstrap": self.bootstrap,
            "warnings": self.warnings,
        })

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        return render_text(self)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float):
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
    return x


def _group_strata(dataset: Dataset, cfg: AnalysisConfig, stratified: bool, warnings):
    """Return [(label, treated ArmData, control ArmData, weight)]."""
    if not stratified:
        t, c = dataset.arms()
        return [("all", t, c, 1.0)], {}
    groups, undersized = [], []
    for label in dataset.stratum_labels():
        sub = dataset.subset(dataset.strata == label)
        t, c = sub.arms()
        if len(t) < 2 or len(c) < 2:
            undersized.append((label, len(t), len(c)))
            continue
        groups.append((label, t, c, cfg.weight_of(label)))
    if undersized:
        desc = ", ".join(f"'{s}' (N_t={a}, N_c={b})" for s, a, b in undersized)
        if not cfg.exclude_undersized:
            raise AnalysisError(
                f"strata too small for variance estimation: {desc}; exclude them with "
                "--exclude-undersized (or stratification.exclude_undersized = true)")
        warnings.append(f"excluded undersized strata: {desc}")
    if not groups:
        raise AnalysisError("no stratum has at least 2 subjects per arm")
    info = {
        "strata": [{"label": g[0], "n_treated": len(g[1]), "n_control": len(g[2]),
                    "weight": g[3]} for g in groups],
        "excluded": [{"label": s, "n_treated": a, "n_control": b} for s, a, b in undersized],
    }
    return groups, info


def _result_dict(res) -> dict:
    if isinstance(res, InferenceResult):
        d = res.as_dict()
        d["degenerate"] = False
        return d
    return {"degenerate": True, "error": res}


def analyze(dataset: Dataset, cfg: AnalysisConfig, *, stratified: bool | None = None,
            bootstrap: int | None = None, seed: int | None = None) -> AnalysisReport:
    """Counts, inference, decomposition and per-rotation table for one dataset."""
    if cfg.hierarchy is None:
        raise ConfigurationError("config has no endpoints/hierarchy")
    findings = validate_hierarchy(cfg.hierarchy, cfg.specs, cfg.rotation_cap)
    if findings:
        raise ConfigurationError("; ".join(findings))
    rotations = build_rotation_set(cfg.hierarchy, cfg.rotation_cap)
    stratified = cfg.stratified if stratified is None else stratified
    B = cfg.bootstrap_replicates if bootstrap is None else bootstrap
    seed = cfg.bootstrap_seed if seed is None else seed
    specs = cfg.specs
    labels = [s.id for s in specs]
    warnings: list = []

    groups, strata_info = _group_strata(dataset, cfg, stratified, warnings)
    counts = [count_wins_losses(t, c, rotations, specs, keep_tables=False)
              for _, t, c, _ in groups]
    weights = [g[3] for g in groups]

    stats_ = win_statistics(counts, cfg.alpha, weights) if stratified \
        else win_statistics(counts[0], cfg.alpha)
    estimates = {m: _result_dict(stats_[m]) for m in MEASURES}
    wins = sum(w * c.wins.astype(float) for c, w in zip(counts, weights))
    losses = sum(w * c.losses.astype(float) for c, w in zip(counts, weights))
    ties = sum(w * c.ties.astype(float) for c, w in zip(counts, weights))
    for m in MEASURES:
        if estimates[m]["degenerate"]:
            warnings.append(f"{m} degenerate: {estimates[m]['error']}")
            estimates[m]["estimate"] = _point_estimate(m, wins.sum(), losses.sum(), ties.sum())

    block_labels = [", ".join(labels[i] for i in sorted(b)) for b in cfg.hierarchy.blocks]
    dec = decompose(counts, cfg.hierarchy, weights, block_labels)
    decomposition = [{
        "block": r.label, "wins_pct": r.win_pct, "ties_pct": r.tie_pct,
        "losses_pct": r.loss_pct, "block_wr": r.block_wr,
        "wins": r.wins, "losses": r.losses,
    } for r in dec.rows]

    rot_list = [{"index": k + 1, "order": [labels[i] for i in o],
                 "label": format_order(o, cfg.hierarchy, labels)}
                for k, o in enumerate(rotations.orders)]
    table = _rotation_table(counts, weights, rotations, labels)

    boot = None
    if B:
        br = bootstrap_ci(dataset if not stratified else _kept(dataset, groups),
                          rotations, B=B, seed=seed, alpha=cfg.alpha,
                          stratified=stratified, weights=weights if stratified else None)
        boot = br.as_dict()
        warnings.extend(br.warnings)

    return AnalysisReport(
        endpoints=[{"id": s.id, "kind": s.kind.value, "direction": s.direction.value,
                    "margin": s.margin} for s in specs],
        blocks=[[labels[i] for i in b] for b in cfg.hierarchy.blocks],
        rotations=rot_list,
        n_treated=sum(len(g[1]) for g in groups),
        n_control=sum(len(g[2]) for g in groups),
        counts={"wins": wins.tolist(), "losses": losses.tolist(), "ties": ties.tolist()},
        estimates=estimates,
        decomposition=decomposition,
        rotation_table=table,
        strata=strata_info,
        bootstrap=boot,
        warnings=warnings,
        alpha=cfg.alpha,
    )


def _kept(dataset: Dataset, groups) -> Dataset:
    keep = {g[0] for g in groups}
    return dataset.subset(np.array([s in keep for s in dataset.strata], dtype=bool))


def _point_estimate(measure, w, l, t):
    if measure == "RWR":
        return math.inf if l == 0 and w > 0 else (math.nan if l == 0 else w / l)
    if measure == "RNB":
        total = w + l + t
        return (w - l) / total if total else math.nan
    den = l + 0.5 * t
    return (w + 0.5 * t) / den if den else math.inf


def _rotation_table(counts, weights, rotations, labels) -> dict:
    """Endpoint-level and overall WR per rotation; None where no losses."""
    wins_at = sum(w * c.wins_at.astype(float) for c, w in zip(counts, weights))
    losses_at = sum(w * c.losses_at.astype(float) for c, w in zip(counts, weights))
    rows = {lab: [] for lab in labels}
    overall = []
    for k, order in enumerate(rotations.orders):
        for pos, e in enumerate(order):
            l = losses_at[k, pos]
            rows[labels[e]].append(wins_at[k, pos] / l if l > 0 else None)
        tl = losses_at[k].sum()
        overall.append(wins_at[k].sum() / tl if tl > 0 else None)
    return {"endpoint_wr": rows, "overall_wr": overall}


# ---------------------------------------------------------------------------
# Plain text


def _num(x, nd=4) -> str:
    if x is None:
        return "undefined"
    if isinstance(x, str):
        return x
    if math.isinf(x):
        return "+inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.{nd}f}"


def _table(header, rows) -> str:
    cells = [header] + rows
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = []
    for j, r in enumerate(cells):
        lines.append("  ".join(c.ljust(widths[i]) if i == 0 else c.rjust(widths[i])
                               for i, c in enumerate(r)))
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def render_text(rep: AnalysisReport) -> str:
    out = []
    out.append("Rotation win statistics")
    out.append(f"hierarchy: {' || '.join(', '.join(b) for b in rep.blocks)}")
    out.append(f"subjects: {rep.n_treated} treated, {rep.n_control} control; "
               f"{len(rep.rotations)} rotation(s)")
    if rep.strata:
        out.append(f"stratified over {len(rep.strata['strata'])} strata")
    out.append("")
    level = f"{100 * (1 - rep.alpha):g}% CI"
    rows = []
    for m in MEASURES:
        e = rep.estimates[m]
        if e["degenerate"]:
            rows.append([m, _num(e.get("estimate")), "degenerate", "", e["error"]])
        else:
            rows.append([m, _num(e["estimate"]), _num(e["ci_lower"]), _num(e["ci_upper"]),
                         _num(e["p_value"])])
    out.append(_table(["Measure", "Estimate", f"{level} lower", f"{level} upper", "p-value"],
                      rows))
    if rep.bootstrap:
        out.append("")
        b = rep.bootstrap
        out.append(_table(
            ["Bootstrap", "lower", "upper"],
            [[m, _num(v[0]), _num(v[1])] for m, v in b["intervals"].items()]))
        out.append(f"({b['replicates']} resamples, {b['degenerate']} degenerate, "
                   f"seed {b['seed']})")
    out.append("")
    out.append(_table(
        ["Block", "Wins (%)", "Ties (%)", "Losses (%)", "Block-level WR"],
        [[d["block"], _num(d["wins_pct"], 2), _num(d["ties_pct"], 2),
          _num(d["losses_pct"], 2), _num(d["block_wr"], 2)] for d in rep.decomposition]))
    out.append("")
    header = ["Endpoint"] + [str(r["index"]) for r in rep.rotations]
    rows = [[lab] + [_num(v, 3) for v in vals]
            for lab, vals in rep.rotation_table["endpoint_wr"].items()]
    rows.append(["Overall WR"] + [_num(v, 3) for v in rep.rotation_table["overall_wr"]])
    out.append(_table(header, rows))
    out.append("rotations: " + "; ".join(f"{r['index']}: {r['label']}" for r in rep.rotations))
    if rep.warnings:
        out.append("")
        out.extend(f"warning: {w}" for w in rep.warnings)
    return "\n".join(out) + "\n"
