"""Linear static analysis of pin-jointed 2D trusses: member forces, factor of
safety, mass, and strength-to-weight ratio.

The solver is the direct stiffness method with bar elements.  For a member of
axial stiffness EA/L between nodes i and j with direction cosines (c, s), the
4x4 element matrix is (EA/L) * [cc cs; cs ss] tiled with +/- blocks.  Supports
are applied by deleting constrained degrees of freedom.  A design is reported
as singular (a mechanism or an unstable structure) instead of being "solved
badly": singularity is detected from the Cholesky pivots of the reduced
stiffness matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .truss import FREE, PIN, ProblemDef, TrussDesign, hanging_nodes, validate_design

FORCE_EPS = 1e-9        # N; members below this carry "no load" for the FOS
SINGULAR_PIVOT_RTOL = 1e-8  # pivot < rtol * max diagonal => singular

# Counter for the metric-agnostic audit: agents must not evaluate designs
# outside team interactions, which the simulation asserts via this counter.
_eval_calls = 0


def eval_call_count() -> int:
    return _eval_calls


@dataclass
class EvalResult:
    fos: float
    mass: float
    swr: float
    feasible: bool
    singular: bool
    member_forces: dict[tuple[int, int], float] = field(default_factory=dict)

    def csv_row(self, design_hash: str) -> str:
        return (f"{design_hash},{float(self.fos)!r},{float(self.mass)!r},"
                f"{float(self.swr)!r},{int(self.feasible)},{int(self.singular)}")


CSV_HEADER = "design_hash,fos,mass,swr,feasible,singular"


def _cholesky_pivots(K: np.ndarray, rtol: float) -> tuple[np.ndarray | None, int]:
    """Lower Cholesky factor and -1, or (None, index) of the first pivot that
    falls below rtol * max(diag)."""
    n = K.shape[0]
    diag_max = float(K.diagonal().max(initial=0.0))
    if n == 0 or diag_max <= 0.0:
        return None, 0
    L = np.zeros_like(K)
    tol = rtol * diag_max
    for j in range(n):
        pivot = K[j, j] - L[j, :j] @ L[j, :j]
        if pivot < tol:
            return None, j
        L[j, j] = math.sqrt(pivot)
        if j + 1 < n:
            L[j + 1:, j] = (K[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L, -1


def _solve_cholesky(L: np.ndarray, f: np.ndarray) -> np.ndarray:
    n = L.shape[0]
    y = np.zeros_like(f)
    for i in range(n):
        y[i] = (f[i] - L[i, :i] @ y[:i]) / L[i, i]
    x = np.zeros_like(f)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - L[i + 1:, i] @ x[i + 1:]) / L[i, i]
    return x


def _constrained_dofs(problem: ProblemDef, index: dict[int, int]) -> list[int]:
    fixed = []
    for sid, support in enumerate(problem.supports):
        if sid not in index:
            continue
        base = 2 * index[sid]
        if support.kind == PIN:
            fixed.extend([base, base + 1])
        else:  # roller: vertical support only
            fixed.append(base + 1)
    return fixed


def _assemble(design: TrussDesign, problem: ProblemDef):
    """Global stiffness matrix, load vector, node ordering, and member
    geometry (direction cosines, length, axial stiffness)."""
    ids = sorted(design.nodes)
    index = {nid: i for i, nid in enumerate(ids)}
    ndof = 2 * len(ids)
    E = problem.material.elastic_modulus
    scale = problem.canvas.meters_per_unit

    K = np.zeros((ndof, ndof))
    geom = {}
    for key in sorted(design.members):
        a, b = key
        na, nb = design.nodes[a], design.nodes[b]
        dx, dy = nb.x - na.x, nb.y - na.y
        length = math.hypot(dx, dy) * scale
        if length == 0.0:
            continue
        c, s = dx * scale / length, dy * scale / length
        area, _ = problem.section(design.members[key])
        k = E * area / length
        geom[key] = (c, s, length, k)
        t = np.array([c, s])
        block = k * np.outer(t, t)
        ia, ib = 2 * index[a], 2 * index[b]
        K[ia:ia + 2, ia:ia + 2] += block
        K[ib:ib + 2, ib:ib + 2] += block
        K[ia:ia + 2, ib:ib + 2] -= block
        K[ib:ib + 2, ia:ia + 2] -= block

    f = np.zeros(ndof)
    load_base = len(problem.supports)
    for lid, load in enumerate(problem.loads):
        nid = load_base + lid
        if nid in index:
            f[2 * index[nid] + 1] -= load.force  # downward positive magnitude

    return K, f, ids, index, geom


def solve_statics(design: TrussDesign, problem: ProblemDef) -> dict[tuple[int, int], float] | None:
    """Axial force per member (tension positive), or None for a singular
    (mechanism / unstable) structure.  The design is assumed valid."""
    if not design.members or hanging_nodes(design):
        return None

    K, f, ids, index, geom = _assemble(design, problem)
    fixed = _constrained_dofs(problem, index)
    free = np.setdiff1d(np.arange(2 * len(ids)), fixed)
    if free.size == 0:
        return None
    L, _ = _cholesky_pivots(K[np.ix_(free, free)], SINGULAR_PIVOT_RTOL)
    if L is None:
        return None
    u = np.zeros(2 * len(ids))
    u[free] = _solve_cholesky(L, f[free])

    forces = {}
    for key, (c, s, length, k) in geom.items():
        a, b = key
        ia, ib = 2 * index[a], 2 * index[b]
        forces[key] = float(k * (c * (u[ib] - u[ia]) + s * (u[ib + 1] - u[ia + 1])))
    return forces


def singular_node(design: TrussDesign, problem: ProblemDef) -> int | None:
    """Node owning the first failing stiffness pivot, or None when the
    structure is stable.  Heuristic anchor for mechanism-repair scripts."""
    loose = hanging_nodes(design)
    if loose:
        return min(loose)
    if not design.members:
        free_ids = [nid for nid, n in design.nodes.items() if n.kind == FREE]
        return min(free_ids) if free_ids else min(design.nodes, default=None)
    K, _, ids, index, _ = _assemble(design, problem)
    fixed = _constrained_dofs(problem, index)
    free = np.setdiff1d(np.arange(2 * len(ids)), fixed)
    if free.size == 0:
        return None
    L, fail = _cholesky_pivots(K[np.ix_(free, free)], SINGULAR_PIVOT_RTOL)
    if L is not None:
        return None
    return ids[int(free[fail]) // 2]


def total_mass(design: TrussDesign, problem: ProblemDef) -> float:
    """Sum of rho * A * L over members, kg."""
    rho = problem.material.density
    scale = problem.canvas.meters_per_unit
    mass = 0.0
    for (a, b), size in design.members.items():
        na, nb = design.nodes[a], design.nodes[b]
        length = math.hypot(nb.x - na.x, nb.y - na.y) * scale
        area, _ = problem.section(size)
        mass += rho * area * length
    return mass


def member_capacity(design: TrussDesign, problem: ProblemDef, key: tuple[int, int],
                    tension: bool, include_buckling: bool = True) -> float:
    """Axial capacity in N.  Compression is limited by Euler buckling of a
    pinned-pinned bar (effective length = member length) unless disabled."""
    size = design.members[key]
    area, inertia = problem.section(size)
    yield_cap = problem.material.yield_strength * area
    if tension or not include_buckling:
        return yield_cap
    a, b = key
    na, nb = design.nodes[a], design.nodes[b]
    length = math.hypot(nb.x - na.x, nb.y - na.y) * problem.canvas.meters_per_unit
    euler = math.pi ** 2 * problem.material.elastic_modulus * inertia / length ** 2
    return min(yield_cap, euler)


def evaluate(design: TrussDesign, problem: ProblemDef,
             include_buckling: bool = True) -> EvalResult:
    """Full quality evaluation.  Total: invalid or singular designs come back
    with fos = swr = 0 and the singular flag set."""
    global _eval_calls
    _eval_calls += 1

    mass = total_mass(design, problem)
    if validate_design(design, problem):
        return EvalResult(0.0, mass, 0.0, False, True)
    forces = solve_statics(design, problem)
    if forces is None:
        return EvalResult(0.0, mass, 0.0, False, True)

    fos = math.inf
    for key, force in forces.items():
        if abs(force) < FORCE_EPS:
            continue
        cap = member_capacity(design, problem, key, tension=force > 0.0,
                              include_buckling=include_buckling)
        fos = min(fos, float(cap / abs(force)))
    feasible = fos >= 1.0
    swr = fos / mass if mass > 0.0 else 0.0
    return EvalResult(float(fos), float(mass), float(swr), feasible, False, forces)


def denoise_trajectory(values: list[float], feasible_flags: list[bool]) -> list[float]:
    """Replace transient zeros after the first feasible step by the most
    recent non-zero value; earlier entries pass through unchanged."""
    if len(values) != len(feasible_flags):
        raise ValueError(
            f"length mismatch: {len(values)} values vs {len(feasible_flags)} flags")
    first_feasible = next((i for i, ok in enumerate(feasible_flags) if ok), None)
    if first_feasible is None:
        return list(values)
    out = []
    last_nonzero = 0.0
    for i, v in enumerate(values):
        if v != 0.0:
            last_nonzero = v
        if i >= first_feasible and v == 0.0 and last_nonzero != 0.0:
            out.append(last_nonzero)
        else:
            out.append(v)
    return out


def restricted_swr(result: EvalResult) -> float | None:
    """SWR counted only for feasible designs (FOS >= 1.0); None otherwise."""
    return result.swr if result.fos >= 1.0 else None
