"""Conversion from the raw oracle representation to package objects."""

from __future__ import annotations

import numpy as np

from rotwin.compare import Arm, Continuous, Dataset, EventCount, Subject, TimeToEvent
from rotwin.hierarchy import EndpointSpec
from oracles import random_endpoints, random_subjects

KIND = {"tte": "tte", "count": "count", "cont": "continuous"}


def to_specs(endpoints):
    return tuple(EndpointSpec(f"e{i + 1}", KIND[k], d, m)
                 for i, (k, d, m) in enumerate(endpoints))


def to_outcome(raw):
    if raw[0] == "tte":
        return TimeToEvent(raw[1], raw[2])
    if raw[0] == "count":
        return EventCount(raw[1])
    return Continuous(raw[1])


def to_subjects(raw_rows, arm, prefix, strata=None):
    return [Subject(f"{prefix}{n}", arm, tuple(to_outcome(o) for o in row),
                    stratum="all" if strata is None else strata[n])
            for n, row in enumerate(raw_rows)]


def random_instance(rng, nt, nc, q):
    """(raw endpoints, raw treated, raw control, specs, Dataset)."""
    endpoints = random_endpoints(rng, q)
    t_raw = random_subjects(rng, nt, endpoints)
    c_raw = random_subjects(rng, nc, endpoints)
    specs = to_specs(endpoints)
    subjects = to_subjects(t_raw, Arm.TREATMENT, "T") + to_subjects(c_raw, Arm.CONTROL, "C")
    return endpoints, t_raw, c_raw, specs, Dataset.from_subjects(subjects, specs)


def random_partition(rng, q, max_block=3):
    """Random ordered partition of range(q) into blocks of size <= max_block."""
    perm = [int(x) for x in rng.permutation(q)]
    blocks = []
    while perm:
        size = int(rng.integers(1, min(max_block, len(perm)) + 1))
        blocks.append(tuple(perm[:size]))
        perm = perm[size:]
    return tuple(blocks)


def rng_for(*key):
    return np.random.default_rng(list(key))
