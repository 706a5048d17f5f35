"""Endpoint specifications, block hierarchies and rotation sets.

Indices are 0-based throughout the package; the config file and reports use
endpoint ids.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ConfigurationError, ResourceError

DEFAULT_ROTATION_CAP = 720


class EndpointKind(str, enum.Enum):
    TIME_TO_EVENT = "tte"
    EVENT_COUNT = "count"
    CONTINUOUS = "continuous"


class Direction(str, enum.Enum):
    LARGER_WINS = "larger"
    SMALLER_WINS = "smaller"


@dataclass(frozen=True)
class EndpointSpec:
    id: str
    kind: EndpointKind = EndpointKind.TIME_TO_EVENT
    direction: Direction = Direction.LARGER_WINS
    margin: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", EndpointKind(self.kind))
        object.__setattr__(self, "direction", Direction(self.direction))
        if not self.id:
            raise ConfigurationError("endpoint id must be a nonempty string")
        if not (self.margin >= 0):
            raise ConfigurationError(
                f"endpoint '{self.id}': margin must be >= 0, got {self.margin}"
            )


def check_unique_ids(specs: Sequence[EndpointSpec]) -> None:
    seen = set()
    for s in specs:
        if s.id in seen:
            raise ConfigurationError(f"duplicate endpoint id '{s.id}'")
        seen.add(s.id)


@dataclass(frozen=True)
class Hierarchy:
    """Strictly ordered blocks of equally prioritized endpoint indices."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "blocks", tuple(tuple(int(i) for i in b) for b in self.blocks)
        )

    @classmethod
    def singletons(cls, q: int) -> "Hierarchy":
        return cls(tuple((i,) for i in range(q)))

    @classmethod
    def from_ids(cls, blocks: Iterable[Iterable[str]], specs: Sequence[EndpointSpec]):
        index = {s.id: i for i, s in enumerate(specs)}
        out = []
        for b in blocks:
            row = []
            for name in b:
                if name not in index:
                    raise ConfigurationError(f"hierarchy names unknown endpoint '{name}'")
                row.append(index[name])
            out.append(tuple(row))
        return cls(tuple(out))

    @property
    def q(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def n_rotations(self) -> int:
        return math.prod(math.factorial(len(b)) for b in self.blocks)

    def block_bounds(self) -> list[tuple[int, int]]:
        """Half-open position ranges each block occupies in every rotation."""
        bounds, start = [], 0
        for b in self.blocks:
            bounds.append((start, start + len(b)))
            start += len(b)
        return bounds


@dataclass(frozen=True)
class RotationSet:
    orders: tuple[tuple[int, ...], ...]
    hierarchy: Hierarchy | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.orders)

    def __iter__(self):
        return iter(self.orders)

    @property
    def p(self) -> int:
        return len(self.orders)

    @property
    def q(self) -> int:
        return len(self.orders[0])

    @classmethod
    def single(cls, order: Sequence[int]) -> "RotationSet":
        """A one-order set: the standard (fully prioritized) win ratio."""
        order = tuple(int(i) for i in order)
        return cls((order,), Hierarchy(tuple((i,) for i in order)))


def validate_hierarchy(
    hierarchy: Hierarchy,
    specs: Sequence[EndpointSpec],
    rotation_cap: int = DEFAULT_ROTATION_CAP,
) -> list[str]:
    """Return every problem found with ``hierarchy`` over ``specs``; empty if valid."""
    findings = []
    q = len(specs)
    seen: dict[int, int] = {}
    for r, block in enumerate(hierarchy.blocks):
        if len(block) == 0:
            findings.append(f"block {r + 1} is empty")
        for i in block:
            if i < 0 or i >= q:
                findings.append(
                    f"endpoint index {i + 1} in block {r + 1} is out of range 1..{q}"
                )
            elif i in seen:
                findings.append(
                    f"endpoint {i + 1} ('{specs[i].id}') appears more than once "
                    f"(blocks {seen[i] + 1} and {r + 1})"
                )
            else:
                seen[i] = r
    for i in range(q):
        if i not in seen:
            findings.append(f"endpoint {i + 1} ('{specs[i].id}') is not in any block")
    ids = [s.id for s in specs]
    for dup in sorted({x for x in ids if ids.count(x) > 1}):
        findings.append(f"duplicate endpoint id '{dup}'")
    p = hierarchy.n_rotations
    if p > rotation_cap:
        findings.append(
            f"hierarchy implies {p} rotations, above the cap of {rotation_cap}"
        )
    return findings


def _check_partition(hierarchy: Hierarchy) -> None:
    q = hierarchy.q
    seen = set()
    for r, block in enumerate(hierarchy.blocks):
        if not block:
            raise ConfigurationError(f"block {r + 1} is empty")
        for i in block:
            if i < 0 or i >= q:
                raise ConfigurationError(
                    f"endpoint index {i + 1} is out of range 1..{q} (block {r + 1})"
                )
            if i in seen:
                raise ConfigurationError(f"endpoint index {i + 1} appears in more than one block")
            seen.add(i)


def build_rotation_set(
    hierarchy: Hierarchy, rotation_cap: int = DEFAULT_ROTATION_CAP
) -> RotationSet:
    """Enumerate every within-block permutation, preserving block order.

    Permutations are lexicographic within each block and the last block
    varies fastest, so rotation numbering is stable across runs.
    """
    _check_partition(hierarchy)
    p = hierarchy.n_rotations
    if p > rotation_cap:
        raise ResourceError(
            f"hierarchy implies {p} rotations (cap {rotation_cap}); "
            "split large equal-priority blocks into smaller ones, "
            "keeping any single block to four or five endpoints"
        )
    per_block = [list(itertools.permutations(sorted(b))) for b in hierarchy.blocks]
    orders = tuple(
        tuple(itertools.chain.from_iterable(combo))
        for combo in itertools.product(*per_block)
    )
    return RotationSet(orders, hierarchy)


def format_order(order: Sequence[int], hierarchy: Hierarchy, labels=None) -> str:
    """Render an order with '||' between blocks, e.g. ``1 || 3,2 || 4``."""
    parts, pos = [], 0
    for b in hierarchy.blocks:
        chunk = order[pos : pos + len(b)]
        pos += len(b)
        parts.append(",".join(labels[i] if labels else str(i + 1) for i in chunk))
    return " || ".join(parts)
