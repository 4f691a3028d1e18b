"""Rule-based decoding of a suggestion heatmap into parametric design
operations, and probabilistic selection of one of them.

The node pass thresholds the heatmap, isolates 8-connected islands, and turns
compact add-islands into AddNode moves at their intensity-weighted centers;
delete moves come from existing free nodes whose disc region went dark.  The
member pass closes each thresholded mask morphologically and scans every pair
of existing nodes, reading coverage statistics in corridors around the
connecting segment: a lit outer band on an existing member means a size
increase, a dark edge band a size decrease or deletion, and a lit corridor
between unconnected nodes a new member.  Every candidate is materialized into
a full design, rendered, and scored by SSIM against the generated image; one
is then sampled from a softmax over those similarities.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import imaging
from .truss import FREE, D_MIN, DesignOp, InvalidOp, ProblemDef, TrussDesign, apply_op
from .imaging import NODE_RADIUS, member_width, segment_stats, to_design, to_pixel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InferenceConfig:
    tau_node: float = 0.25          # heat threshold for the node pass
    tau_member: float = 0.15        # heat threshold for the member pass
    k_morph: int = 3                # closing structuring element
    min_coverage: float = 0.35      # band coverage for size/delete detection
    min_coverage_add: float = 0.35  # corridor coverage for new members
    min_length_coverage: float = 0.6  # lit fraction of the corridor's length bins
    min_lit_bins: int = 6           # compact blobs (node discs) light fewer bins
    min_evidence: int = 8           # pixels a corridor must offer to be judged
    node_match_radius: float = 4.0  # px (kept for centroid-based matching)
    node_disc_coverage: float = 0.55  # fraction of a disc that must go dark
    node_aspect_limit: float = 2.0  # add-island bounding-box aspect for "node-like"
    node_area_limit: float = 36.0   # px, (3 * node radius)^2
    temperature: float = 0.05       # softmax temperature for selection
    grid_snap: float = 1.0          # AddNode coordinates snap, design units
    min_member_span: float = 10.0   # design units; shorter pairs are not scanned

    def __post_init__(self):
        if min(self.tau_node, self.tau_member, self.temperature, self.grid_snap) <= 0:
            raise ValueError("thresholds, temperature and grid snap must be positive")
        if not 0.0 < self.min_coverage <= 1.0 or not 0.0 < self.min_coverage_add <= 1.0:
            raise ValueError("coverage fractions must be in (0, 1]")


@dataclass
class Candidate:
    op: DesignOp
    resulting_design: TrussDesign
    rendered: np.ndarray
    similarity: float = 0.0


def _node_like(region: np.ndarray, cfg: InferenceConfig) -> bool:
    rows = region[:, 0]
    cols = region[:, 1]
    h = int(rows.max() - rows.min()) + 1
    w = int(cols.max() - cols.min()) + 1
    aspect = max(h, w) / min(h, w)
    return aspect <= cfg.node_aspect_limit and len(region) <= cfg.node_area_limit


def _disc_pixels(px: float, py: float, radius: float) -> tuple[np.ndarray, np.ndarray]:
    r0 = max(int(np.floor(py - radius)), 0)
    r1 = min(int(np.ceil(py + radius)) + 1, imaging.IMG_SIZE)
    c0 = max(int(np.floor(px - radius)), 0)
    c1 = min(int(np.ceil(px + radius)) + 1, imaging.IMG_SIZE)
    rows, cols = np.mgrid[r0:r1, c0:c1]
    inside = np.hypot(rows - py, cols - px) <= radius
    return rows[inside], cols[inside]


def node_ops(heat: np.ndarray, current: TrussDesign, problem: ProblemDef,
             cfg: InferenceConfig, diagnostics: dict | None = None,
             member_corridors: list[tuple] | None = None) -> list[DesignOp]:
    """AddNode ops from compact add-islands, DeleteNode ops from free nodes
    whose rendered disc is covered by the delete mask.  Islands inside an
    already-explained member corridor (``member_corridors``: (pa, pb,
    halfwidth) triples) are fragments of member evidence, not nodes."""
    ops: list[DesignOp] = []
    add_mask, del_mask = imaging.threshold(heat, cfg.tau_node)

    dropped = 0
    for region in imaging.connected_components(add_mask):
        if not _node_like(region, cfg):
            continue  # elongated islands belong to the member pass
        px, py = imaging.weighted_centroid(region, heat)
        if member_corridors and any(
            imaging._segment_distance(np.array([py]), np.array([px]), pa, pb)[0] <= half
            for pa, pb, half in member_corridors
        ):
            dropped += 1
            continue
        x, y = to_design(problem, px, py)
        snap = cfg.grid_snap
        x, y = round(x / snap) * snap, round(y / snap) * snap
        op = DesignOp.add_node(x, y)
        try:
            apply_op(current, op, problem)
        except InvalidOp:
            dropped += 1
            continue
        ops.append(op)

    for nid in sorted(current.nodes):
        node = current.nodes[nid]
        if node.kind != FREE:
            continue  # fixed nodes are part of the problem, never deletable
        px, py = to_pixel(problem, node.x, node.y)
        rows, cols = _disc_pixels(px, py, NODE_RADIUS + 0.5)
        if len(rows) and float(del_mask[rows, cols].mean()) >= cfg.node_disc_coverage:
            ops.append(DesignOp.delete_node(nid))

    if diagnostics is not None:
        diagnostics["node_islands_dropped"] = dropped
    return ops


def _pair_blocked(pa, pb, others: list[tuple[float, float]]) -> bool:
    """True when the segment pa-pb passes through a third node's disc."""
    rows = np.array([p[1] for p in others])
    cols = np.array([p[0] for p in others])
    if len(others) == 0:
        return False
    dist = imaging._segment_distance(rows, cols, pa, pb)
    return bool((dist <= NODE_RADIUS + 0.5).any())


def member_ops(heat: np.ndarray, current: TrussDesign, problem: ProblemDef,
               cfg: InferenceConfig, diagnostics: dict | None = None) -> list[DesignOp]:
    """Member-pass ops: scan every admissible node pair against the closed
    add/delete masks.

    Under max-composition, pixels already saturated by other strokes cannot
    brighten and pixels they keep lit cannot darken, so coverages are
    normalized over the pixels that *can* change.  Delete evidence emits both
    DeleteMember and DecreaseSize; the similarity scoring downstream keeps
    whichever render actually matches the generated image.
    """
    add_raw, del_raw = imaging.threshold(heat, cfg.tau_member)
    add_mask = imaging.closing(add_raw, cfg.k_morph)
    del_mask = imaging.closing(del_raw, cfg.k_morph)
    current_img = imaging.rasterize(current, problem)
    can_brighten = current_img < 0.7
    can_darken = current_img > 0.3

    ids = sorted(current.nodes)
    pix = {nid: to_pixel(problem, current.nodes[nid].x, current.nodes[nid].y)
           for nid in ids}
    excl = NODE_RADIUS + 1.0

    ops: list[DesignOp] = []
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            na, nb = current.nodes[a], current.nodes[b]
            if np.hypot(na.x - nb.x, na.y - nb.y) < cfg.min_member_span:
                continue
            pa, pb = pix[a], pix[b]
            if _pair_blocked(pa, pb, [pix[c] for c in ids if c not in (a, b)]):
                continue
            size = current.members.get((a, b))
            if size is None:
                half = member_width(1) / 2.0 + 1.0
                stats = segment_stats(add_mask, pa, pb, half, exclude_radius=excl,
                                      where=can_brighten)
                if stats.count >= cfg.min_evidence \
                        and stats.coverage >= cfg.min_coverage_add \
                        and stats.length_coverage >= cfg.min_length_coverage \
                        and stats.lit_bins >= cfg.min_lit_bins:
                    ops.append(DesignOp.add_member(a, b, 1))
                continue
            w = member_width(size)
            grow = segment_stats(add_mask, pa, pb, w / 2.0 + 1.25,
                                 inner=max(w / 2.0 - 0.5, 0.0), exclude_radius=excl,
                                 where=can_brighten)
            if grow.count >= cfg.min_evidence and grow.coverage >= cfg.min_coverage \
                    and grow.length_coverage >= cfg.min_length_coverage \
                    and grow.lit_bins >= cfg.min_lit_bins \
                    and size < problem.size_max:
                ops.append(DesignOp.increase_size(a, b))
            shrink = segment_stats(del_mask, pa, pb, w / 2.0 + 0.5,
                                   inner=max(w / 2.0 - 1.25, 0.0), exclude_radius=excl,
                                   where=can_darken)
            if shrink.count >= cfg.min_evidence and shrink.coverage >= cfg.min_coverage:
                ops.append(_resolve_delete(heat, current, problem, current_img, a, b, size))
    if diagnostics is not None:
        diagnostics["member_ops"] = len(ops)
    return ops


def _resolve_delete(heat: np.ndarray, current: TrussDesign, problem: ProblemDef,
                    current_img: np.ndarray, a: int, b: int, size: int) -> DesignOp:
    """Full removal or one size step down?  Render both readings and keep the
    one whose image matches the suggestion (a thresholded band cannot tell a
    thick member's edge shrink from its removal when neighbors overlap it)."""
    if size <= 1:
        return DesignOp.delete_member(a, b)
    generated = np.clip(current_img + heat, 0.0, 1.0)
    scores = []
    for op in (DesignOp.delete_member(a, b), DesignOp.decrease_size(a, b)):
        rendered = imaging.rasterize(apply_op(current, op, problem), problem)
        scores.append((imaging.ssim(rendered, generated), op))
    return max(scores, key=lambda t: t[0])[1]


def node_candidates(heat: np.ndarray, current: TrussDesign, problem: ProblemDef,
                    cfg: InferenceConfig, generated: np.ndarray | None = None) -> list[Candidate]:
    return _materialize(node_ops(heat, current, problem, cfg), heat, current, problem, generated)


def member_candidates(heat: np.ndarray, current: TrussDesign, problem: ProblemDef,
                      cfg: InferenceConfig, generated: np.ndarray | None = None) -> list[Candidate]:
    return _materialize(member_ops(heat, current, problem, cfg), heat, current, problem, generated)


def _materialize(op_list: list[DesignOp], heat: np.ndarray, current: TrussDesign,
                 problem: ProblemDef, generated: np.ndarray | None) -> list[Candidate]:
    if generated is None:
        generated = np.clip(imaging.rasterize(current, problem) + heat, 0.0, 1.0)
    out = []
    for op in op_list:
        try:
            design = apply_op(current, op, problem)
        except InvalidOp:
            continue
        rendered = imaging.rasterize(design, problem)
        out.append(Candidate(op, design, rendered, imaging.ssim(rendered, generated)))
    return out


def build_candidates(heat: np.ndarray, current: TrussDesign, problem: ProblemDef,
                     cfg: InferenceConfig, diagnostics: dict | None = None) -> list[Candidate]:
    """Union of node and member candidates, deduplicated, materialized and
    scored.  A DeleteNode candidate subsumes member deletions/shrinks on its
    incident members: those cannot reproduce a dark node disc and only crowd
    the list."""
    generated = np.clip(imaging.rasterize(current, problem) + heat, 0.0, 1.0)
    ops = member_ops(heat, current, problem, cfg, diagnostics)
    corridors = []
    for op in ops:
        if op.kind in (DesignOp.ADD_MEMBER, DesignOp.INCREASE_SIZE):
            na, nb = current.nodes[op.a], current.nodes[op.b]
            size = current.members.get((op.a, op.b), 0) + 1
            corridors.append((to_pixel(problem, na.x, na.y),
                              to_pixel(problem, nb.x, nb.y),
                              member_width(size) / 2.0 + 1.0))
    ops += node_ops(heat, current, problem, cfg, diagnostics,
                    member_corridors=corridors)

    deleted_nodes = {op.node for op in ops if op.kind == DesignOp.DELETE_NODE}
    if deleted_nodes:
        ops = [op for op in ops
               if op.kind not in (DesignOp.DELETE_MEMBER, DesignOp.DECREASE_SIZE)
               or not ({op.a, op.b} & deleted_nodes)]

    seen = set()
    unique = []
    for op in ops:
        if op not in seen:
            seen.add(op)
            unique.append(op)
    candidates = _materialize(unique, heat, current, problem, generated)
    if diagnostics is not None:
        diagnostics["candidates"] = len(candidates)
    return candidates


def select_op(candidates: list[Candidate], cfg: InferenceConfig,
              rng: np.random.Generator) -> DesignOp | None:
    """Sample one candidate from softmax(similarity / temperature); None when
    the list is empty.  Deterministic given the generator state."""
    if not candidates:
        return None
    sims = np.array([c.similarity for c in candidates], dtype=np.float64)
    logits = sims / cfg.temperature
    logits -= logits.max()
    p = np.exp(logits)
    p /= p.sum()
    return candidates[int(rng.choice(len(candidates), p=p))].op


def infer(current_image: np.ndarray, generated_image: np.ndarray,
          current: TrussDesign, problem: ProblemDef, cfg: InferenceConfig,
          rng: np.random.Generator,
          diagnostics: dict | None = None) -> DesignOp | None:
    """Full inference: heatmap from the image pair, candidate list, selection."""
    heat = imaging.signed_diff(generated_image, current_image)
    candidates = build_candidates(heat, current, problem, cfg, diagnostics)
    return select_op(candidates, cfg, rng)
