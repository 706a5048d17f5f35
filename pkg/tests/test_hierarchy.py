import math

import pytest
from hypothesis import given, settings, strategies as st

from rotwin.errors import ConfigurationError, ResourceError
from rotwin.hierarchy import (
    EndpointSpec,
    Hierarchy,
    RotationSet,
    build_rotation_set,
    format_order,
    validate_hierarchy,
)


def specs(q):
    return [EndpointSpec(f"e{i + 1}") for i in range(q)]


def test_two_pair_blocks_give_four_rotations():
    h = Hierarchy(((0,), (1, 2), (3, 4), (5,)))
    rs = build_rotation_set(h)
    assert rs.orders == (
        (0, 1, 2, 3, 4, 5),
        (0, 1, 2, 4, 3, 5),
        (0, 2, 1, 3, 4, 5),
        (0, 2, 1, 4, 3, 5),
    )
    assert [format_order(o, h) for o in rs.orders] == [
        "1 || 2,3 || 4,5 || 6", "1 || 2,3 || 5,4 || 6",
        "1 || 3,2 || 4,5 || 6", "1 || 3,2 || 5,4 || 6",
    ]


def test_singletons_give_one_rotation():
    rs = build_rotation_set(Hierarchy.singletons(4))
    assert rs.orders == ((0, 1, 2, 3),)


def test_single_block_gives_all_permutations():
    rs = build_rotation_set(Hierarchy(((0, 1, 2),)))
    assert len(rs) == 6
    assert len(set(rs.orders)) == 6
    assert rs.orders[0] == (0, 1, 2) and rs.orders[-1] == (2, 1, 0)


def test_cap_exceeded_is_resource_error():
    h = Hierarchy((tuple(range(7)),))
    with pytest.raises(ResourceError, match="5040"):
        build_rotation_set(h)
    assert len(build_rotation_set(h, rotation_cap=5040)) == 5040


def test_six_endpoint_block_is_within_default_cap():
    assert len(build_rotation_set(Hierarchy((tuple(range(6)),)))) == 720


def test_duplicate_endpoint_is_named():
    h = Hierarchy(((0,), (1, 0)))
    findings = validate_hierarchy(h, specs(2))
    assert any("appears more than once" in f and "'e1'" in f for f in findings)
    with pytest.raises(ConfigurationError, match="index 1"):
        build_rotation_set(h)


def test_missing_and_out_of_range_endpoints():
    findings = validate_hierarchy(Hierarchy(((0,), (5,))), specs(3))
    assert any("out of range" in f for f in findings)
    assert any("'e2'" in f and "not in any block" in f for f in findings)


def test_empty_block_rejected():
    assert any("empty" in f for f in validate_hierarchy(Hierarchy(((0,), ())), specs(1)))


def test_valid_hierarchy_has_no_findings():
    assert validate_hierarchy(Hierarchy(((0,), (1, 2))), specs(3)) == []


def test_from_ids():
    s = specs(3)
    h = Hierarchy.from_ids([["e1"], ["e3", "e2"]], s)
    assert h.blocks == ((0,), (2, 1))
    with pytest.raises(ConfigurationError, match="unknown endpoint 'zz'"):
        Hierarchy.from_ids([["zz"]], s)


def test_negative_margin_rejected():
    with pytest.raises(ConfigurationError, match="margin"):
        EndpointSpec("x", margin=-1.0)


def test_single_order_set():
    rs = RotationSet.single((2, 0, 1))
    assert rs.p == 1 and rs.q == 3 and rs.orders == ((2, 0, 1),)


@st.composite
def partitions(draw):
    sizes = draw(st.lists(st.integers(1, 4), min_size=1, max_size=4))
    perm = draw(st.permutations(range(sum(sizes))))
    blocks, pos = [], 0
    for s in sizes:
        blocks.append(tuple(perm[pos:pos + s]))
        pos += s
    return Hierarchy(tuple(blocks))


@settings(max_examples=60, deadline=None)
@given(partitions())
def test_rotation_count_and_block_structure(h):
    expected = math.prod(math.factorial(len(b)) for b in h.blocks)
    if expected > 720:
        with pytest.raises(ResourceError):
            build_rotation_set(h)
        return
    rs = build_rotation_set(h)
    assert len(rs) == expected == h.n_rotations
    assert len(set(rs.orders)) == expected
    for order in rs.orders:
        for b, (lo, hi) in zip(h.blocks, h.block_bounds()):
            assert sorted(order[lo:hi]) == sorted(b)
    # enumeration is deterministic
    assert build_rotation_set(h).orders == rs.orders
