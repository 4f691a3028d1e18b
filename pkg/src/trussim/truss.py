"""Parametric 2D truss design state, the design-operation algebra, and validity rules.

A design lives on a rectangular canvas measured in design units (1 unit maps to
1 pixel when rasterized).  Fixed nodes (supports and loaded nodes) come from the
problem definition and can never be moved or deleted; free nodes and all members
belong to the designer.  All functions here are pure: they never mutate their
inputs and return fresh design values.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

S_MAX = 10           # largest member size index
D_MIN = 2.0          # minimum spacing between nodes, design units
BASE_AREA = 1e-4     # cross-section area of a size-1 member, m^2

FIXED = "fixed"
FREE = "free"
PIN = "pin"
ROLLER = "roller"


class InvalidOp(Exception):
    """A design operation violated one of its preconditions."""


@dataclass(frozen=True)
class Node:
    x: float
    y: float
    kind: str  # FIXED | FREE


@dataclass(frozen=True)
class Material:
    elastic_modulus: float  # Pa
    yield_strength: float   # Pa
    density: float          # kg/m^3


@dataclass(frozen=True)
class Canvas:
    width: float            # design units
    height: float           # design units
    meters_per_unit: float


@dataclass(frozen=True)
class Support:
    x: float
    y: float
    kind: str  # PIN | ROLLER


@dataclass(frozen=True)
class Load:
    x: float
    y: float
    force: float  # N, downward positive


@dataclass(frozen=True)
class ProblemDef:
    """Boundary conditions, material, and section table for one design task."""

    supports: tuple[Support, ...]
    loads: tuple[Load, ...]
    material: Material
    sections: tuple[tuple[float, float], ...]  # (area m^2, inertia m^4), index size-1
    canvas: Canvas

    def __post_init__(self):
        if len(self.supports) < 2:
            raise ValueError("need at least 2 support nodes")
        if len(self.loads) < 1:
            raise ValueError("need at least 1 load node")
        for s in self.supports:
            if s.kind not in (PIN, ROLLER):
                raise ValueError(f"unknown support kind {s.kind!r}")
        for p in list(self.supports) + list(self.loads):
            if not (0.0 <= p.x <= self.canvas.width and 0.0 <= p.y <= self.canvas.height):
                raise ValueError(f"fixed node ({p.x},{p.y}) outside canvas")
        areas = [a for a, _ in self.sections]
        if any(b <= a for a, b in zip(areas, areas[1:])):
            raise ValueError("section areas must be strictly increasing")

    @property
    def size_max(self) -> int:
        return len(self.sections)

    def section(self, size: int) -> tuple[float, float]:
        """Area and second moment for a size index in 1..size_max."""
        return self.sections[size - 1]

    def fixed_nodes(self) -> list[tuple[int, Node]]:
        """Canonical (id, node) list: supports first, then load nodes."""
        out = []
        for i, s in enumerate(self.supports):
            out.append((i, Node(s.x, s.y, FIXED)))
        base = len(self.supports)
        for i, l in enumerate(self.loads):
            out.append((base + i, Node(l.x, l.y, FIXED)))
        return out

    def base_design(self) -> "TrussDesign":
        return TrussDesign(nodes=dict(self.fixed_nodes()), members={})


def circular_sections(n: int = S_MAX, base_area: float = BASE_AREA) -> tuple[tuple[float, float], ...]:
    """Linear area ramp area(k) = k*base_area with solid circular inertia A^2/(4*pi)."""
    out = []
    for k in range(1, n + 1):
        area = k * base_area
        out.append((area, area * area / (4.0 * math.pi)))
    return tuple(out)


def default_problem(load_newtons: float = 10_000.0) -> ProblemDef:
    """Simply supported span with 3 loaded bottom-chord nodes, steel-like material."""
    return ProblemDef(
        supports=(Support(4.0, 0.0, PIN), Support(72.0, 0.0, PIN)),
        loads=(
            Load(21.0, 0.0, load_newtons),
            Load(38.0, 0.0, load_newtons),
            Load(55.0, 0.0, load_newtons),
        ),
        material=Material(elastic_modulus=200e9, yield_strength=250e6, density=7850.0),
        sections=circular_sections(),
        canvas=Canvas(width=76.0, height=44.0, meters_per_unit=0.1),
    )


@dataclass
class TrussDesign:
    """Nodes keyed by integer id; members keyed by sorted (a, b) id pairs."""

    nodes: dict[int, Node] = field(default_factory=dict)
    members: dict[tuple[int, int], int] = field(default_factory=dict)
    provenance: str | None = None


@dataclass(frozen=True)
class DesignOp:
    """One parametric design operation (six inferable variants)."""

    kind: str
    x: float | None = None
    y: float | None = None
    node: int | None = None
    a: int | None = None
    b: int | None = None
    size: int | None = None

    ADD_NODE = "add_node"
    DELETE_NODE = "delete_node"
    ADD_MEMBER = "add_member"
    DELETE_MEMBER = "delete_member"
    INCREASE_SIZE = "increase_size"
    DECREASE_SIZE = "decrease_size"

    @classmethod
    def add_node(cls, x: float, y: float) -> "DesignOp":
        return cls(cls.ADD_NODE, x=float(x), y=float(y))

    @classmethod
    def delete_node(cls, node: int) -> "DesignOp":
        return cls(cls.DELETE_NODE, node=node)

    @classmethod
    def add_member(cls, a: int, b: int, size: int = 1) -> "DesignOp":
        return cls(cls.ADD_MEMBER, a=min(a, b), b=max(a, b), size=size)

    @classmethod
    def delete_member(cls, a: int, b: int) -> "DesignOp":
        return cls(cls.DELETE_MEMBER, a=min(a, b), b=max(a, b))

    @classmethod
    def increase_size(cls, a: int, b: int) -> "DesignOp":
        return cls(cls.INCREASE_SIZE, a=min(a, b), b=max(a, b))

    @classmethod
    def decrease_size(cls, a: int, b: int) -> "DesignOp":
        return cls(cls.DECREASE_SIZE, a=min(a, b), b=max(a, b))

    def describe(self) -> str:
        if self.kind == self.ADD_NODE:
            return f"add_node({self.x:g},{self.y:g})"
        if self.kind == self.DELETE_NODE:
            return f"delete_node({self.node})"
        if self.kind == self.ADD_MEMBER:
            return f"add_member({self.a}-{self.b},{self.size})"
        if self.kind == self.DELETE_MEMBER:
            return f"delete_member({self.a}-{self.b})"
        if self.kind == self.INCREASE_SIZE:
            return f"increase_size({self.a}-{self.b})"
        if self.kind == self.DECREASE_SIZE:
            return f"decrease_size({self.a}-{self.b})"
        return f"unknown({self.kind})"


def member_key(a: int, b: int) -> tuple[int, int]:
    if a == b:
        raise InvalidOp(f"self-loop member at node {a}")
    return (a, b) if a < b else (b, a)


def node_distance(n1: Node, n2: Node) -> float:
    return math.hypot(n1.x - n2.x, n1.y - n2.y)


def _copy(design: TrussDesign) -> TrussDesign:
    return TrussDesign(dict(design.nodes), dict(design.members), design.provenance)


def apply_op(design: TrussDesign, op: DesignOp, problem: ProblemDef,
             d_min: float = D_MIN) -> TrussDesign:
    """Apply one operation, returning a new design; raises InvalidOp on any
    violated precondition.  The input design is never modified."""
    out = _copy(design)

    if op.kind == DesignOp.ADD_NODE:
        if not (0.0 <= op.x <= problem.canvas.width and 0.0 <= op.y <= problem.canvas.height):
            raise InvalidOp(f"node ({op.x:g},{op.y:g}) outside canvas")
        new = Node(op.x, op.y, FREE)
        for nid, node in design.nodes.items():
            if node_distance(node, new) < d_min:
                raise InvalidOp(f"node ({op.x:g},{op.y:g}) closer than {d_min} to node {nid}")
        nid = max(design.nodes, default=-1) + 1
        out.nodes[nid] = new
        return out

    if op.kind == DesignOp.DELETE_NODE:
        node = design.nodes.get(op.node)
        if node is None:
            raise InvalidOp(f"node {op.node} does not exist")
        if node.kind == FIXED:
            raise InvalidOp(f"node {op.node} is fixed and cannot be deleted")
        del out.nodes[op.node]
        for key in [k for k in out.members if op.node in k]:
            del out.members[key]
        return out

    if op.kind == DesignOp.ADD_MEMBER:
        key = member_key(op.a, op.b)
        for end in key:
            if end not in design.nodes:
                raise InvalidOp(f"member endpoint {end} does not exist")
        if key in design.members:
            raise InvalidOp(f"member {key} already exists")
        if not (1 <= op.size <= problem.size_max):
            raise InvalidOp(f"size {op.size} outside 1..{problem.size_max}")
        out.members[key] = op.size
        return out

    if op.kind == DesignOp.DELETE_MEMBER:
        key = member_key(op.a, op.b)
        if key not in design.members:
            raise InvalidOp(f"member {key} does not exist")
        del out.members[key]
        return out

    if op.kind == DesignOp.INCREASE_SIZE:
        key = member_key(op.a, op.b)
        size = design.members.get(key)
        if size is None:
            raise InvalidOp(f"member {key} does not exist")
        if size >= problem.size_max:
            raise InvalidOp(f"member {key} already at maximum size {problem.size_max}")
        out.members[key] = size + 1
        return out

    if op.kind == DesignOp.DECREASE_SIZE:
        key = member_key(op.a, op.b)
        size = design.members.get(key)
        if size is None:
            raise InvalidOp(f"member {key} does not exist")
        if size <= 1:
            raise InvalidOp(f"member {key} at size 1; delete it instead")
        out.members[key] = size - 1
        return out

    raise InvalidOp(f"unknown operation kind {op.kind!r}")


def validate_design(design: TrussDesign, problem: ProblemDef) -> list[str]:
    """Total validity check.  Returns one descriptor per violated invariant,
    empty when the design is well-formed for the given problem."""
    issues = []
    for nid, expected in problem.fixed_nodes():
        actual = design.nodes.get(nid)
        if actual != expected:
            issues.append(f"missing_fixed_node:{nid}")
    fixed_ids = {nid for nid, _ in problem.fixed_nodes()}
    for nid, node in design.nodes.items():
        if node.kind == FIXED and nid not in fixed_ids:
            issues.append(f"unexpected_fixed_node:{nid}")
        if not (0.0 <= node.x <= problem.canvas.width and 0.0 <= node.y <= problem.canvas.height):
            issues.append(f"node_outside_canvas:{nid}")
    for key, size in design.members.items():
        a, b = key
        if a == b:
            issues.append(f"self_loop:{a}")
            continue
        if a > b:
            issues.append(f"unnormalized_member:{a}-{b}")
        if a not in design.nodes:
            issues.append(f"dangling_member_end:{a}")
        if b not in design.nodes:
            issues.append(f"dangling_member_end:{b}")
        if not (1 <= size <= problem.size_max):
            issues.append(f"size_out_of_range:{a}-{b}")
    return issues


def hanging_nodes(design: TrussDesign) -> set[int]:
    """Free nodes with fewer than 2 incident members; these make the statics
    problem singular."""
    degree = {nid: 0 for nid in design.nodes}
    for a, b in design.members:
        if a in degree:
            degree[a] += 1
        if b in degree:
            degree[b] += 1
    return {nid for nid, node in design.nodes.items()
            if node.kind == FREE and degree[nid] < 2}


def state_record(design: TrussDesign) -> str:
    """Canonical one-line serialization: sorted nodes, then sorted members.

    Shared by the demonstration file format and by design hashing; provenance
    is deliberately excluded.
    """
    nodes = ";".join(
        f"{nid}:{design.nodes[nid].x!r}:{design.nodes[nid].y!r}:{design.nodes[nid].kind}"
        for nid in sorted(design.nodes)
    )
    members = ";".join(
        f"{a}-{b}:{design.members[(a, b)]}" for a, b in sorted(design.members)
    )
    return f"nodes: {nodes} | members: {members}"


def parse_state_record(text: str) -> TrussDesign:
    """Inverse of state_record."""
    try:
        nodes_part, sep, members_part = text.partition(" | members:")
        if not sep or not nodes_part.startswith("nodes:"):
            raise ValueError("missing nodes/members sections")
        nodes_part = nodes_part[len("nodes:"):].strip()
        members_part = members_part.strip()
        nodes = {}
        if nodes_part:
            for tok in nodes_part.split(";"):
                sid, sx, sy, kind = tok.split(":")
                if kind not in (FIXED, FREE):
                    raise ValueError(f"bad node kind {kind!r}")
                nodes[int(sid)] = Node(float(sx), float(sy), kind)
        members = {}
        if members_part:
            for tok in members_part.split(";"):
                pair, ssize = tok.split(":")
                sa, sb = pair.split("-")
                members[member_key(int(sa), int(sb))] = int(ssize)
    except ValueError as exc:
        raise ValueError(f"malformed state record: {exc}") from exc
    return TrussDesign(nodes=nodes, members=members)


def design_hash(design: TrussDesign) -> str:
    """Deterministic 16-hex-digit digest of the canonical serialization."""
    return hashlib.sha256(state_record(design).encode("utf-8")).hexdigest()[:16]
