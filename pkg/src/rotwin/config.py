"""Study configuration file (TOML, ``schema_version = 1``).

Minimal example::

    schema_version = 1
    alpha = 0.05
    hierarchy = [["death"], ["mi", "stroke"], ["hf"]]

    [[endpoints]]
    id = "death"            # kind defaults to "tte", direction to "larger"
    [[endpoints]]
    id = "mi"
    ...

    [stratification]
    enabled = true
    weights = { siteA = 1.0, siteB = 2.0 }

    [bootstrap]
    replicates = 10000
    seed = 7

    [simulation]
    design = "copula"
    replicates = 1000
    [simulation.scenario]
    n_per_arm = 200
    [simulation.grid]
    study_days = [500, 1500]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .errors import ConfigurationError
from .hierarchy import (
    DEFAULT_ROTATION_CAP,
    EndpointSpec,
    Hierarchy,
    check_unique_ids,
)
from .study import StudyConfig

SCHEMA_VERSION = 1


@dataclass
class AnalysisConfig:
    specs: tuple = ()
    hierarchy: Hierarchy | None = None
    alpha: float = 0.05
    rotation_cap: int = DEFAULT_ROTATION_CAP
    stratified: bool = False
    weights: dict = field(default_factory=dict)
    default_weight: float = 1.0
    exclude_undersized: bool = False
    bootstrap_replicates: int = 0
    bootstrap_seed: int = 0
    simulation: StudyConfig | None = None

    def weight_of(self, stratum: str) -> float:
        return float(self.weights.get(stratum, self.default_weight))


def _err(path: str, msg: str) -> ConfigurationError:
    return ConfigurationError(f"{path}: {msg}")


def _get(table: dict, key: str, types, path: str, default=None, required=False):
    if key not in table:
        if required:
            raise _err(path, f"missing required key '{key}'")
        return default
    v = table[key]
    if types is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, types) or (isinstance(v, bool) and types in (int, float)):
        name = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        raise _err(f"{path}.{key}" if path else key, f"expected {name}, got {v!r}")
    return v


def _parse_endpoints(raw) -> tuple:
    if not isinstance(raw, list) or not raw:
        raise _err("endpoints", "expected a nonempty array of tables")
    specs = []
    for i, e in enumerate(raw):
        where = f"endpoints[{i}]"
        if not isinstance(e, dict):
            raise _err(where, "expected a table")
        unknown = set(e) - {"id", "kind", "direction", "margin"}
        if unknown:
            raise _err(where, f"unknown keys {sorted(unknown)}")
        try:
            specs.append(EndpointSpec(
                id=_get(e, "id", str, where, required=True),
                kind=_get(e, "kind", str, where, "tte"),
                direction=_get(e, "direction", str, where, "larger"),
                margin=_get(e, "margin", float, where, 0.0),
            ))
        except ValueError as exc:
            raise _err(where, str(exc)) from None
        except ConfigurationError as exc:
            raise _err(where, str(exc)) from None
    check_unique_ids(specs)
    return tuple(specs)


def _parse_hierarchy(raw, specs) -> Hierarchy:
    if not isinstance(raw, list) or not all(isinstance(b, list) for b in raw):
        raise _err("hierarchy", "expected an array of arrays")
    ids = {s.id: i for i, s in enumerate(specs)}
    blocks = []
    for r, block in enumerate(raw):
        row = []
        for j, item in enumerate(block):
            where = f"hierarchy[{r}][{j}]"
            if isinstance(item, str):
                if item not in ids:
                    raise _err(where, f"unknown endpoint id '{item}'")
                row.append(ids[item])
            elif isinstance(item, int) and not isinstance(item, bool):
                row.append(item - 1)  # 1-based in the file
            else:
                raise _err(where, f"expected endpoint id or 1-based index, got {item!r}")
        blocks.append(tuple(row))
    return Hierarchy(tuple(blocks))


def _parse_simulation(raw: dict) -> StudyConfig:
    where = "simulation"
    known = {"design", "replicates", "seed", "alpha", "methods", "reference_pairs",
             "scenario", "grid", "workers", "max_failure_rate"}
    unknown = set(raw) - known
    if unknown:
        raise _err(where, f"unknown keys {sorted(unknown)}")
    grid = _get(raw, "grid", dict, where, {})
    grid = {k: [tuple(x) if isinstance(x, list) else x for x in v] if isinstance(v, list) else v
            for k, v in grid.items()}
    scenario = _get(raw, "scenario", dict, where, {})
    scenario = {k: tuple(v) if isinstance(v, list) else v for k, v in scenario.items()}
    return StudyConfig(
        design=_get(raw, "design", str, where, "copula"),
        base=scenario,
        grid=grid,
        replicates=_get(raw, "replicates", int, where, 1000),
        alpha=_get(raw, "alpha", float, where, 0.05),
        methods=tuple(_get(raw, "methods", list, where, [])),
        seed=_get(raw, "seed", int, where, 0),
        reference_pairs=_get(raw, "reference_pairs", int, where, 1_000_000),
        workers=_get(raw, "workers", int, where, 1),
        max_failure_rate=_get(raw, "max_failure_rate", float, where, 0.01),
    )


def parse_config(doc: dict) -> AnalysisConfig:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise _err("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    cfg = AnalysisConfig()
    cfg.alpha = _get(doc, "alpha", float, "", 0.05)
    if not 0 < cfg.alpha < 1:
        raise _err("alpha", "must lie in (0, 1)")
    cfg.rotation_cap = _get(doc, "rotation_cap", int, "", DEFAULT_ROTATION_CAP)
    if "endpoints" in doc:
        cfg.specs = _parse_endpoints(doc["endpoints"])
        if "hierarchy" in doc:
            cfg.hierarchy = _parse_hierarchy(doc["hierarchy"], cfg.specs)
        else:
            cfg.hierarchy = Hierarchy.singletons(len(cfg.specs))
    elif "hierarchy" in doc:
        raise _err("hierarchy", "given without [[endpoints]]")
    strat = _get(doc, "stratification", dict, "", {})
    cfg.stratified = _get(strat, "enabled", bool, "stratification", False)
    weights = _get(strat, "weights", dict, "stratification", {})
    for k, w in weights.items():
        if isinstance(w, bool) or not isinstance(w, (int, float)) or not w > 0:
            raise _err(f"stratification.weights.{k}", f"weight must be a positive number, got {w!r}")
    cfg.weights = {str(k): float(v) for k, v in weights.items()}
    cfg.default_weight = _get(strat, "default_weight", float, "stratification", 1.0)
    if not cfg.default_weight > 0:
        raise _err("stratification.default_weight", "must be positive")
    cfg.exclude_undersized = _get(strat, "exclude_undersized", bool, "stratification", False)
    boot = _get(doc, "bootstrap", dict, "", {})
    cfg.bootstrap_replicates = _get(boot, "replicates", int, "bootstrap", 0)
    cfg.bootstrap_seed = _get(boot, "seed", int, "bootstrap", 0)
    if "simulation" in doc:
        cfg.simulation = _parse_simulation(_get(doc, "simulation", dict, ""))
    return cfg


def load_config(path) -> AnalysisConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {p}: {exc}") from None
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        # message carries "(at line L, column C)"
        raise ConfigurationError(f"{p}: {exc}") from None
    try:
        return parse_config(doc)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{p}: {exc}") from None
