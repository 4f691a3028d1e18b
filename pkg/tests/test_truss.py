import numpy as np
import pytest

from trussim.truss import (D_MIN, DesignOp, InvalidOp, Node, TrussDesign, apply_op,
                           default_problem, design_hash, hanging_nodes,
                           parse_state_record, state_record, validate_design)


@pytest.fixture
def problem():
    return default_problem()


@pytest.fixture
def base(problem):
    return problem.base_design()


def test_base_design_is_valid(problem, base):
    assert validate_design(base, problem) == []
    assert len(base.nodes) == 5
    assert all(n.kind == "fixed" for n in base.nodes.values())


def test_add_node_pure_insertion(problem, base):
    d = apply_op(base, DesignOp.add_node(30.0, 20.0), problem)
    assert len(d.nodes) == len(base.nodes) + 1
    assert d.members == base.members
    assert len(base.nodes) == 5  # input untouched


def test_add_node_respects_spacing(problem, base):
    d = apply_op(base, DesignOp.add_node(30.0, 20.0), problem)
    with pytest.raises(InvalidOp):
        apply_op(d, DesignOp.add_node(30.5, 20.5), problem)
    # exactly d_min away is allowed
    apply_op(d, DesignOp.add_node(30.0 + D_MIN, 20.0), problem)


def test_add_node_outside_canvas(problem, base):
    with pytest.raises(InvalidOp):
        apply_op(base, DesignOp.add_node(80.0, 20.0), problem)
    with pytest.raises(InvalidOp):
        apply_op(base, DesignOp.add_node(30.0, -1.0), problem)


def test_delete_fixed_node_is_invalid(problem, base):
    for nid in base.nodes:
        with pytest.raises(InvalidOp):
            apply_op(base, DesignOp.delete_node(nid), problem)


def test_delete_node_removes_incident_members(problem, base):
    d = apply_op(base, DesignOp.add_node(30.0, 20.0), problem)
    nid = max(d.nodes)
    d = apply_op(d, DesignOp.add_member(0, nid), problem)
    d = apply_op(d, DesignOp.add_member(1, nid), problem)
    d = apply_op(d, DesignOp.add_member(0, 2), problem)
    d2 = apply_op(d, DesignOp.delete_node(nid), problem)
    assert nid not in d2.nodes
    assert all(nid not in key for key in d2.members)
    assert (0, 2) in d2.members


def test_member_inverse_pair(problem, base):
    d = apply_op(base, DesignOp.add_node(30.0, 20.0), problem)
    d2 = apply_op(d, DesignOp.add_member(0, 2, 2), problem)
    d3 = apply_op(d2, DesignOp.delete_member(0, 2), problem)
    assert d3 == d


def test_node_inverse_pair(problem, base):
    d = apply_op(base, DesignOp.add_node(30.0, 20.0), problem)
    back = apply_op(d, DesignOp.delete_node(max(d.nodes)), problem)
    assert back == base


def test_size_inverse_pair(problem, base):
    d = apply_op(base, DesignOp.add_member(0, 2, 3), problem)
    up = apply_op(d, DesignOp.increase_size(0, 2), problem)
    assert up.members[(0, 2)] == 4
    assert apply_op(up, DesignOp.decrease_size(0, 2), problem) == d


def test_size_bounds(problem, base):
    d = apply_op(base, DesignOp.add_member(0, 2, problem.size_max), problem)
    with pytest.raises(InvalidOp):
        apply_op(d, DesignOp.increase_size(0, 2), problem)
    d1 = apply_op(base, DesignOp.add_member(0, 2, 1), problem)
    with pytest.raises(InvalidOp):
        apply_op(d1, DesignOp.decrease_size(0, 2), problem)


def test_duplicate_and_dangling_member_errors(problem, base):
    d = apply_op(base, DesignOp.add_member(0, 2), problem)
    with pytest.raises(InvalidOp):
        apply_op(d, DesignOp.add_member(2, 0), problem)  # same unordered pair
    with pytest.raises(InvalidOp):
        apply_op(d, DesignOp.add_member(0, 99), problem)
    with pytest.raises(InvalidOp):
        apply_op(d, DesignOp.add_member(3, 3), problem)


def test_validate_flags_self_loop(problem, base):
    bad = TrussDesign(dict(base.nodes), {(3, 3): 1})
    issues = validate_design(bad, problem)
    assert any(v.startswith("self_loop") for v in issues)


def test_validate_flags_missing_fixed_node(problem, base):
    nodes = dict(base.nodes)
    del nodes[2]  # first load node
    issues = validate_design(TrussDesign(nodes, {}), problem)
    assert any(v.startswith("missing_fixed_node") for v in issues)


def test_validate_flags_bad_size_and_dangling(problem, base):
    bad = TrussDesign(dict(base.nodes), {(0, 2): 99, (1, 7): 1})
    issues = validate_design(bad, problem)
    assert any(v.startswith("size_out_of_range") for v in issues)
    assert any(v.startswith("dangling_member_end") for v in issues)


def test_validate_warren_panel_by_hand(problem, base):
    # hand-built 2-panel truss touching every invariant
    d = base
    d = apply_op(d, DesignOp.add_node(21.0, 16.0), problem)
    d = apply_op(d, DesignOp.add_node(55.0, 16.0), problem)
    for a, b in [(0, 2), (2, 3), (3, 4), (4, 1), (0, 5), (2, 5), (3, 5),
                 (3, 6), (4, 6), (1, 6), (5, 6)]:
        d = apply_op(d, DesignOp.add_member(a, b), problem)
    assert validate_design(d, problem) == []


def test_hanging_nodes(problem, base):
    d = apply_op(base, DesignOp.add_node(30.0, 20.0), problem)
    nid = max(d.nodes)
    assert nid in hanging_nodes(d)  # zero members
    d = apply_op(d, DesignOp.add_member(0, nid), problem)
    assert nid in hanging_nodes(d)  # one member
    d = apply_op(d, DesignOp.add_member(1, nid), problem)
    assert nid not in hanging_nodes(d)


def test_hanging_nodes_triangle(problem, base):
    d = apply_op(base, DesignOp.add_node(30.0, 20.0), problem)
    nid = max(d.nodes)
    for a, b in [(0, 1), (0, nid), (1, nid)]:
        d = apply_op(d, DesignOp.add_member(a, b), problem)
    assert hanging_nodes(d) == set()


def test_apply_op_random_sequence_stays_valid(problem, base):
    rng = np.random.default_rng(3)
    d = base
    for _ in range(60):
        ids = sorted(d.nodes)
        choices = ["add_node", "add_member", "increase", "decrease", "del_member",
                   "del_node"]
        kind = choices[int(rng.integers(0, len(choices)))]
        try:
            if kind == "add_node":
                op = DesignOp.add_node(float(rng.integers(1, 75)), float(rng.integers(1, 43)))
            elif kind == "add_member":
                a, b = rng.choice(ids, size=2, replace=False)
                op = DesignOp.add_member(int(a), int(b))
            elif kind == "del_node":
                op = DesignOp.delete_node(int(rng.choice(ids)))
            else:
                if not d.members:
                    continue
                keys = sorted(d.members)
                a, b = keys[int(rng.integers(0, len(keys)))]
                op = {"increase": DesignOp.increase_size,
                      "decrease": DesignOp.decrease_size,
                      "del_member": DesignOp.delete_member}[kind](a, b)
            d = apply_op(d, op, problem)
        except InvalidOp:
            continue
        assert validate_design(d, problem) == []


def test_serialization_roundtrip_and_hash(problem, base):
    d = apply_op(base, DesignOp.add_node(30.25, 20.5), problem)
    d = apply_op(d, DesignOp.add_member(0, max(d.nodes), 4), problem)
    text = state_record(d)
    back = parse_state_record(text)
    assert back.nodes == d.nodes
    assert back.members == d.members
    assert state_record(back) == text
    assert design_hash(back) == design_hash(d)


def test_determinism_same_op_same_bytes(problem, base):
    op = DesignOp.add_node(30.0, 20.0)
    a = apply_op(base, op, problem)
    b = apply_op(base, op, problem)
    assert state_record(a) == state_record(b)
    assert design_hash(a) == design_hash(b)


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        parse_state_record("not a record")
    with pytest.raises(ValueError):
        parse_state_record("nodes: 0:1:2:plasma | members: ")


def test_op_describe():
    assert DesignOp.add_node(3, 4).describe() == "add_node(3,4)"
    assert DesignOp.add_member(7, 2, 3).describe() == "add_member(2-7,3)"
    assert DesignOp.decrease_size(9, 1).describe() == "decrease_size(1-9)"
