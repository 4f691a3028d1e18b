"""Demonstration ingestion, synthetic demonstration generation, dataset
splitting, and training-window construction.

Demonstration files are newline-delimited text: one state per line as
``demo_id step_index | nodes: id:x:y:kind;... | members: a-b:size;...`` with
canonically sorted fields.  ``#`` lines are comments; ``# source <id> <tag>``
comments carry the provenance tag so that save -> load round-trips.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import analysis, imaging
from .truss import (DesignOp, InvalidOp, ProblemDef, TrussDesign, apply_op,
                    parse_state_record, state_record, validate_design)

log = logging.getLogger(__name__)

STYLES = ("warren", "pratt", "greedy")


class ParseError(Exception):
    pass


@dataclass
class Demonstration:
    demo_id: str
    source: str
    states: list[TrussDesign]


@dataclass(frozen=True)
class WindowedSample:
    """Five consecutive input states plus the prediction target."""

    demo_id: str
    inputs: tuple[TrussDesign, ...]
    target: TrussDesign


def save_demonstrations(demos: list[Demonstration], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for demo in demos:
            if len(demo.states) < 2:
                raise ValueError(f"demonstration {demo.demo_id} has fewer than 2 states")
            fh.write(f"# source {demo.demo_id} {demo.source}\n")
            for step, state in enumerate(demo.states):
                fh.write(f"{demo.demo_id} {step} | {state_record(state)}\n")


def _demo_invariants(demo: Demonstration, problem: ProblemDef | None) -> str | None:
    if len(demo.states) < 2:
        return "fewer than 2 states"
    fixed0 = {nid: n for nid, n in demo.states[0].nodes.items() if n.kind == "fixed"}
    for i, state in enumerate(demo.states):
        fixed = {nid: n for nid, n in state.nodes.items() if n.kind == "fixed"}
        if fixed != fixed0:
            return f"state {i} changes the fixed nodes"
        if problem is not None:
            issues = validate_design(state, problem)
            if issues:
                return f"state {i} invalid: {issues[0]}"
    for i in range(1, len(demo.states)):
        if state_record(demo.states[i]) == state_record(demo.states[i - 1]):
            return f"states {i - 1} and {i} are identical"
    return None


def load_demonstrations(path, problem: ProblemDef | None = None) -> list[Demonstration]:
    """Parse and validate a demonstration file.  Malformed records and broken
    demonstrations are logged with line numbers and skipped; the call fails
    only when every record is bad."""
    sources: dict[str, str] = {}
    raw: dict[str, list[tuple[int, int, TrussDesign]]] = {}
    order: list[str] = []
    bad_lines = 0
    total_lines = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 3 and parts[0] == "source":
                    sources[parts[1]] = parts[2]
                continue
            total_lines += 1
            try:
                head, record = line.split(" | ", 1)
                demo_id, step_s = head.split()
                step = int(step_s)
                state = parse_state_record(record)
            except ValueError as exc:
                log.warning("%s:%d: %s", path, lineno, exc)
                bad_lines += 1
                continue
            if demo_id not in raw:
                raw[demo_id] = []
                order.append(demo_id)
            raw[demo_id].append((step, lineno, state))

    if total_lines == 0:
        log.warning("%s: no demonstration records", path)
        return []
    if bad_lines == total_lines:
        raise ParseError(f"{path}: all {total_lines} records malformed")

    demos = []
    for demo_id in order:
        entries = sorted(raw[demo_id])
        steps = [s for s, _, _ in entries]
        if steps != list(range(len(steps))):
            log.warning("%s: demo %s has non-contiguous steps %s; skipped",
                        path, demo_id, steps[:5])
            continue
        demo = Demonstration(demo_id, sources.get(demo_id, "human-ingested"),
                             [st for _, _, st in entries])
        problem_msg = _demo_invariants(demo, problem)
        if problem_msg:
            log.warning("%s: demo %s dropped: %s", path, demo_id, problem_msg)
            continue
        demos.append(demo)
    return demos


def split(demos: list[Demonstration], fraction: float = 0.8,
          seed: int = 0) -> tuple[list[Demonstration], list[Demonstration]]:
    """Deterministic train/test split at demonstration granularity."""
    if len(demos) < 2:
        raise ValueError("need at least 2 demonstrations to split")
    order = np.random.default_rng(seed).permutation(len(demos))
    n_train = min(len(demos) - 1, max(1, round(len(demos) * fraction)))
    train = [demos[i] for i in order[:n_train]]
    test = [demos[i] for i in order[n_train:]]
    return train, test


def make_windows(demos: list[Demonstration], phase: int,
                 pad_front: bool = False) -> list[WindowedSample]:
    """All maximal sliding 5-windows.  Phase 1 targets the newest input state,
    phase 2 the state after it.  With pad_front, every demonstration is
    front-padded with 4 copies of its first state (this also covers
    demonstrations otherwise too short); without it short ones are skipped."""
    if phase not in (1, 2):
        raise ValueError("phase must be 1 or 2")
    windows = []
    skipped = 0
    for demo in demos:
        states = demo.states
        if pad_front:
            states = [states[0]] * 4 + states
        need = 5 if phase == 1 else 6
        if len(states) < need:
            skipped += 1
            continue
        last = len(states) - 1 if phase == 1 else len(states) - 2
        for t in range(4, last + 1):
            target = states[t] if phase == 1 else states[t + 1]
            windows.append(WindowedSample(demo.demo_id, tuple(states[t - 4: t + 1]), target))
    if skipped:
        log.info("make_windows: %d demonstrations too short for phase %d", skipped, phase)
    return windows


def demo_images(demo: Demonstration, problem: ProblemDef,
                cache: dict | None = None) -> np.ndarray:
    """Rasterize all states of a demonstration to a (T, 76, 76) stack.
    Images are always derived from the parametric states, never stored."""
    frames = []
    for state in demo.states:
        if cache is None:
            frames.append(imaging.rasterize(state, problem))
        else:
            key = state_record(state)
            if key not in cache:
                cache[key] = imaging.rasterize(state, problem)
            frames.append(cache[key])
    return np.stack(frames)


# --- synthetic demonstration builders ---------------------------------------

@dataclass
class _Script:
    """Accumulates one op-per-state build, asserting validity throughout."""

    problem: ProblemDef
    states: list[TrussDesign] = field(default_factory=list)

    def __post_init__(self):
        self.states = [self.problem.base_design()]

    @property
    def design(self) -> TrussDesign:
        return self.states[-1]

    def do(self, op: DesignOp) -> None:
        self.states.append(apply_op(self.design, op, self.problem))

    def try_do(self, op: DesignOp) -> bool:
        try:
            self.do(op)
            return True
        except InvalidOp:
            return False


def _bottom_order(problem: ProblemDef) -> list[tuple[int, float]]:
    """Fixed node ids sorted left to right with their x coordinates."""
    out = [(nid, node.x) for nid, node in problem.fixed_nodes()]
    return sorted(out, key=lambda t: t[1])


def _add_tops(script: _Script, xs: list[float], height: float) -> list[int]:
    tops = []
    for x in xs:
        before = set(script.design.nodes)
        script.do(DesignOp.add_node(x, height))
        tops.append((set(script.design.nodes) - before).pop())
    return tops


def _thicken(script: _Script, rng: np.random.Generator, target_fos: float = 1.2,
             max_steps: int = 30) -> None:
    """Greedy repair: repeatedly bump the most critical member, mimicking a
    designer reacting to stress feedback."""
    for _ in range(max_steps):
        result = analysis.evaluate(script.design, script.problem)
        if result.singular or result.fos >= target_fos:
            break
        worst = None
        worst_ratio = math.inf
        for key, force in sorted(result.member_forces.items()):
            if abs(force) < analysis.FORCE_EPS:
                continue
            cap = analysis.member_capacity(script.design, script.problem, key,
                                           tension=force > 0)
            ratio = cap / abs(force)
            if ratio < worst_ratio and script.design.members[key] < script.problem.size_max:
                worst, worst_ratio = key, ratio
        if worst is None:
            break
        script.do(DesignOp.increase_size(*worst))


def _stray_phase(script: _Script, rng: np.random.Generator) -> list[int]:
    """Start some demonstrations from a cluttered state and clean it up."""
    strays = []
    if rng.random() < 0.2:
        for _ in range(int(rng.integers(1, 3))):
            x = float(rng.integers(8, 69))
            y = float(rng.integers(4, 40))
            before = set(script.design.nodes)
            if script.try_do(DesignOp.add_node(x, y)):
                strays.append((set(script.design.nodes) - before).pop())
    return strays


def _warren_script(problem: ProblemDef, rng: np.random.Generator) -> _Script:
    script = _Script(problem)
    strays = _stray_phase(script, rng)
    bottom = _bottom_order(problem)
    height = float(rng.integers(12, 22))
    n_top = int(rng.choice([2, 2, 2, 3, 3, 4]))

    for nid in strays:
        script.do(DesignOp.delete_node(nid))

    if n_top == 4:
        mids = [(bottom[i][1] + bottom[i + 1][1]) / 2.0 for i in range(4)]
        xs = [float(math.floor(m) + int(rng.integers(0, 2))) for m in mids]
        tops = _add_tops(script, xs, height)
        webs = [(tops[i], bottom[i][0]) for i in range(4)]
        webs += [(tops[i], bottom[i + 1][0]) for i in range(4)]
        chords = list(zip(tops, tops[1:]))
    elif n_top == 3:
        xs = [bottom[1][1], bottom[2][1], bottom[3][1]]
        tops = _add_tops(script, xs, height)
        webs = [(tops[0], bottom[0][0]), (tops[2], bottom[4][0]),
                (tops[0], bottom[1][0]), (tops[1], bottom[2][0]), (tops[2], bottom[3][0])]
        if rng.random() < 0.5:
            webs += [(tops[0], bottom[2][0]), (tops[2], bottom[2][0])]
        else:
            webs += [(tops[1], bottom[1][0]), (tops[1], bottom[3][0])]
        chords = list(zip(tops, tops[1:]))
    else:
        xs = [bottom[1][1] + float(rng.integers(-1, 2)),
              bottom[3][1] + float(rng.integers(-1, 2))]
        tops = _add_tops(script, xs, height)
        webs = [(tops[0], bottom[0][0]), (tops[0], bottom[1][0]), (tops[0], bottom[2][0]),
                (tops[1], bottom[2][0]), (tops[1], bottom[3][0]), (tops[1], bottom[4][0])]
        chords = [(tops[0], tops[1])]

    for a, b in [(bottom[i][0], bottom[i + 1][0]) for i in range(4)]:
        script.do(DesignOp.add_member(a, b, 1))
    for a, b in webs:
        script.do(DesignOp.add_member(a, b, 1))
    for a, b in chords:
        script.do(DesignOp.add_member(a, b, 1))

    # occasional corrective detour: a wrong member that gets removed again
    if n_top >= 3 and rng.random() < 0.1:
        a, b = tops[0], tops[2]
        if script.try_do(DesignOp.add_member(a, b, 1)):
            script.do(DesignOp.delete_member(a, b))

    _thicken(script, rng)

    if rng.random() < 0.1 and script.design.members:
        key = sorted(script.design.members)[int(rng.integers(0, len(script.design.members)))]
        if script.try_do(DesignOp.increase_size(*key)):
            script.do(DesignOp.decrease_size(*key))
    return script


def _pratt_script(problem: ProblemDef, rng: np.random.Generator) -> _Script:
    script = _Script(problem)
    strays = _stray_phase(script, rng)
    bottom = _bottom_order(problem)
    height = float(rng.integers(13, 21))
    for nid in strays:
        script.do(DesignOp.delete_node(nid))
    tops = _add_tops(script, [bottom[1][1], bottom[2][1], bottom[3][1]], height)
    members = [(bottom[i][0], bottom[i + 1][0]) for i in range(4)]
    members += [(tops[0], tops[1]), (tops[1], tops[2])]
    members += [(tops[i], bottom[i + 1][0]) for i in range(3)]       # verticals
    members += [(tops[0], bottom[0][0]), (tops[2], bottom[4][0])]    # end diagonals
    members += [(tops[0], bottom[2][0]), (tops[2], bottom[2][0])]    # interior diagonals
    for a, b in members:
        script.do(DesignOp.add_member(a, b, 1))
    _thicken(script, rng)
    return script


def _greedy_script(problem: ProblemDef, rng: np.random.Generator) -> _Script:
    script = _Script(problem)
    bottom = _bottom_order(problem)
    n_top = int(rng.integers(2, 4))
    tops = []
    for _ in range(n_top):
        for _ in range(20):
            x = float(rng.integers(10, 67))
            y = float(rng.integers(10, 23))
            before = set(script.design.nodes)
            if script.try_do(DesignOp.add_node(x, y)):
                tops.append((set(script.design.nodes) - before).pop())
                break
    for a, b in [(bottom[i][0], bottom[i + 1][0]) for i in range(4)]:
        script.do(DesignOp.add_member(a, b, 1))
    tops_x = sorted(tops, key=lambda nid: script.design.nodes[nid].x)
    for a, b in zip(tops_x, tops_x[1:]):
        script.try_do(DesignOp.add_member(a, b, 1))
    for t in tops_x:
        tx = script.design.nodes[t].x
        nearest = sorted(bottom, key=lambda nb: abs(nb[1] - tx))[:2]
        for nid, _ in nearest:
            script.try_do(DesignOp.add_member(t, nid, 1))
    # repair pass: connect whichever node anchors the first failing stiffness
    # pivot until the structure stops being a mechanism
    for _ in range(12):
        nid = analysis.singular_node(script.design, problem)
        if nid is None:
            break
        node = script.design.nodes[nid]
        incident = [
            (script.design.nodes[a if b == nid else b].x - node.x,
             script.design.nodes[a if b == nid else b].y - node.y)
            for a, b in script.design.members if nid in (a, b)
        ]
        others = sorted(
            (math.hypot(n.x - node.x, n.y - node.y), oid)
            for oid, n in script.design.nodes.items()
            if oid != nid and (min(nid, oid), max(nid, oid)) not in script.design.members)

        def _new_direction(oid):
            o = script.design.nodes[oid]
            dx, dy = o.x - node.x, o.y - node.y
            norm = math.hypot(dx, dy)
            return all(abs(dx * iy - dy * ix) / (norm * math.hypot(ix, iy)) > 0.2
                       for ix, iy in incident)

        ranked = [oid for _, oid in others if _new_direction(oid)] + \
                 [oid for _, oid in others if not _new_direction(oid)]
        for oid in ranked:
            if script.try_do(DesignOp.add_member(nid, oid, 1)):
                break
        else:
            break
    _thicken(script, rng)
    return script


_BUILDERS = {"warren": _warren_script, "pratt": _pratt_script, "greedy": _greedy_script}


def synth_demonstrations(n: int, problem: ProblemDef, rng: np.random.Generator,
                         style: str = "warren") -> list[Demonstration]:
    """Scripted designers building trusses op by op.  ``style`` is one of
    warren | pratt | greedy | mixed.

    A small fraction of builds is recorded as two demonstrations (rough
    skeleton, then the continuation): designers resume work on partial
    designs, and agents see exactly such mid-build states after every team
    interaction.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if style != "mixed" and style not in _BUILDERS:
        raise ValueError(f"unknown style {style!r}; choose from {STYLES + ('mixed',)}")
    demos: list[Demonstration] = []
    while len(demos) < n:
        name = style
        if style == "mixed":
            name = str(rng.choice(["warren", "warren", "warren", "pratt", "greedy"]))
        states = _BUILDERS[name](problem, rng).states
        split_ok = len(states) >= 12 and len(demos) + 2 <= n
        if split_ok and rng.random() < 0.1:
            cut = int(rng.integers(6, len(states) - 5))
            demos.append(Demonstration(f"{name}-{len(demos):04d}", name, states[:cut]))
            demos.append(Demonstration(f"{name}-{len(demos):04d}", name, states[cut:]))
        else:
            demos.append(Demonstration(f"{name}-{len(demos):04d}", name, states))
    return demos
