"""The agent loop and the team experiment: history management, periodic
design adoption, and run logging.

Each agent carries the 5 most recent designs.  A step rasterizes them, encodes
them, predicts the next embedding, decodes the generated image, and hands the
heatmap to the rule-based inference.  When inference produces nothing usable
the agent falls back to exploration (a random node, or a member between the
two nearest unconnected nodes after 5 consecutive fallbacks).  Agents never
read quality metrics during their own steps; metrics enter only at team
interactions, which this module asserts through the evaluate-call counter.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import analysis, imaging, inference
from .inference import InferenceConfig
from .nn import models
from .truss import DesignOp, InvalidOp, ProblemDef, TrussDesign, apply_op, design_hash

HISTORY_LEN = models.HISTORY_LEN


@dataclass
class TeamConfig:
    n_agents: int = 3
    interact_every: int = 48
    iterations: int = 250
    n_teams: int = 16
    seed: int = 0

    def __post_init__(self):
        if min(self.n_agents, self.interact_every, self.iterations, self.n_teams) < 1:
            raise ValueError("all team parameters must be positive")


@dataclass
class AgentState:
    history: list[TrussDesign]
    rng: np.random.Generator
    steps: int = 0
    fallback_streak: int = 0
    _img_cache: dict = field(default_factory=dict, repr=False)
    _emb_cache: dict = field(default_factory=dict, repr=False)

    @property
    def current(self) -> TrussDesign:
        return self.history[-1]


@dataclass
class StepRow:
    team: int
    agent: int
    step: int
    op: str
    fos: float
    mass: float
    swr: float
    feasible: bool
    interacted: bool
    wall_time: float = 0.0  # in-memory only, never serialized


@dataclass
class RunLog:
    team: int
    rows: list[StepRow] = field(default_factory=list)

    def agent_series(self, agent: int, key: str) -> list:
        return [getattr(r, key) for r in self.rows if r.agent == agent]


RUNLOG_HEADER = "team,agent,step,op,fos,mass,swr,feasible,interacted"


def runlog_csv(log: RunLog) -> str:
    lines = [RUNLOG_HEADER]
    for r in log.rows:
        lines.append(f"{r.team},{r.agent},{r.step},{r.op},{r.fos!r},{r.mass!r},"
                     f"{r.swr!r},{int(r.feasible)},{int(r.interacted)}")
    return "\n".join(lines) + "\n"


def random_start(problem: ProblemDef, rng: np.random.Generator) -> AgentState:
    """Base design plus 0-3 random free nodes; history is 5 copies of it."""
    design = problem.base_design()
    extra = int(rng.integers(0, 4))
    placed = 0
    attempts = 0
    while placed < extra and attempts < 60:
        attempts += 1
        x = float(rng.integers(2, int(problem.canvas.width) - 1))
        y = float(rng.integers(2, int(problem.canvas.height) - 1))
        try:
            design = apply_op(design, DesignOp.add_node(x, y), problem)
            placed += 1
        except InvalidOp:
            continue
    return AgentState(history=[design] * HISTORY_LEN, rng=rng)


def _cached_raster(state: AgentState, design: TrussDesign, problem: ProblemDef) -> np.ndarray:
    key = design_hash(design)
    if key not in state._img_cache:
        state._img_cache[key] = imaging.rasterize(design, problem)
    return state._img_cache[key]


def _cached_embedding(state: AgentState, ae_params: dict, design: TrussDesign,
                      problem: ProblemDef) -> np.ndarray:
    key = design_hash(design)
    if key not in state._emb_cache:
        img = _cached_raster(state, design, problem)
        state._emb_cache[key] = models.encode(ae_params, img)
    return state._emb_cache[key]


def _fallback_op(state: AgentState, problem: ProblemDef) -> tuple[DesignOp | None, str]:
    design = state.current
    if state.fallback_streak >= 5:
        pairs = []
        ids = sorted(design.nodes)
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                if (a, b) in design.members:
                    continue
                na, nb = design.nodes[a], design.nodes[b]
                pairs.append((math.hypot(na.x - nb.x, na.y - nb.y), a, b))
        for _, a, b in sorted(pairs):
            try:
                apply_op(design, DesignOp.add_member(a, b, 1), problem)
                return DesignOp.add_member(a, b, 1), "fallback_member"
            except InvalidOp:
                continue
    for _ in range(100):
        x = float(state.rng.integers(1, int(problem.canvas.width)))
        y = float(state.rng.integers(1, int(problem.canvas.height)))
        op = DesignOp.add_node(x, y)
        try:
            apply_op(design, op, problem)
            return op, "fallback_node"
        except InvalidOp:
            continue
    return None, "noop"


def agent_step(state: AgentState, ae_params: dict, tn_params: dict,
               problem: ProblemDef, cfg: InferenceConfig) -> tuple[DesignOp | None, str]:
    """One metric-agnostic design move.  Returns the applied op (None for a
    no-op) and a tag: inferred | fallback_node | fallback_member | noop."""
    embeddings = np.stack([
        _cached_embedding(state, ae_params, d, problem) for d in state.history
    ])
    z = models.transition_forward(tn_params, embeddings)
    generated = models.decode(ae_params, np.clip(z, 0.0, 1.0))
    current_img = _cached_raster(state, state.current, problem)

    op = inference.infer(current_img, generated, state.current, problem, cfg, state.rng)
    tag = "inferred"
    if op is None:
        op, tag = _fallback_op(state, problem)
        state.fallback_streak = state.fallback_streak + 1 if op is not None else 0
    else:
        state.fallback_streak = 0

    new_design = state.current
    if op is not None:
        try:
            new_design = apply_op(state.current, op, problem)
        except InvalidOp:
            op, tag = None, "noop"
    state.history = state.history[1:] + [new_design]
    state.steps += 1
    return op, tag


def team_interact(agents: list[AgentState], problem: ProblemDef,
                  results: list[analysis.EvalResult] | None = None) -> int:
    """Adopt the best current design across the team: the feasible design with
    maximum SWR, or the maximum-FOS design when none is feasible (ties break
    toward lower mass, then lower agent index).  Every agent's history becomes
    5 copies of it.  Returns the donor agent index."""
    if not agents:
        raise ValueError("need at least one agent")
    if results is None:
        results = [analysis.evaluate(a.current, problem) for a in agents]
    feasible = [i for i, r in enumerate(results) if r.feasible]
    if feasible:
        best = max(feasible, key=lambda i: (results[i].swr, -results[i].mass, -i))
    else:
        best = max(range(len(agents)),
                   key=lambda i: (results[i].fos, -results[i].mass, -i))
    chosen = agents[best].current
    for agent in agents:
        agent.history = [chosen] * HISTORY_LEN
        agent.fallback_streak = 0
    return best


def run_team(ae_params: dict, tn_params: dict, problem: ProblemDef,
             cfg: TeamConfig, inf_cfg: InferenceConfig,
             seed_seq: np.random.SeedSequence, team: int = 0,
             on_step=None) -> RunLog:
    """One team run: per-iteration agent steps with interaction every
    ``interact_every`` moves.  Raises RuntimeError if any agent reads metrics
    during its own step.  ``on_step(step, agents, results)`` runs after each
    iteration's logging (snapshot hook)."""
    agent_seqs = seed_seq.spawn(cfg.n_agents)
    agents = [random_start(problem, np.random.default_rng(s)) for s in agent_seqs]
    log = RunLog(team=team)
    for step in range(1, cfg.iterations + 1):
        ops = []
        for agent in agents:
            before = analysis.eval_call_count()
            t0 = time.perf_counter()
            op, tag = agent_step(agent, ae_params, tn_params, problem, inf_cfg)
            elapsed = time.perf_counter() - t0
            if analysis.eval_call_count() != before:
                raise RuntimeError("metric read inside agent_step (agents must be "
                                   "metric-agnostic outside interactions)")
            ops.append((op, tag, elapsed))
        results = [analysis.evaluate(a.current, problem) for a in agents]
        interacted = step % cfg.interact_every == 0
        for i, (agent, (op, tag, elapsed)) in enumerate(zip(agents, ops)):
            desc = op.describe() if op is not None else "noop"
            if tag != "inferred":
                desc = f"{tag}:{desc}" if op is not None else tag
            r = results[i]
            log.rows.append(StepRow(team, i, step, desc, r.fos, r.mass, r.swr,
                                    r.feasible, interacted, elapsed))
        if on_step is not None:
            on_step(step, agents, results)
        if interacted:
            team_interact(agents, problem, results)
    return log


@dataclass
class ExperimentResult:
    logs: list[RunLog]
    summary_rows: list[dict]
    best: dict


def _denoised_series(log: RunLog, agent: int) -> tuple[list[float], list[float]]:
    fos = log.agent_series(agent, "fos")
    swr = log.agent_series(agent, "swr")
    flags = log.agent_series(agent, "feasible")
    return (analysis.denoise_trajectory(fos, flags),
            analysis.denoise_trajectory(swr, flags))


def summarize(logs: list[RunLog], n_agents: int, iterations: int) -> tuple[list[dict], dict]:
    """Per-iteration means of denoised FOS/SWR plus the restricted-SWR series,
    and best-design-per-agent statistics with standard errors."""
    fos_all, swr_all = [], []
    for log in logs:
        for agent in range(n_agents):
            f, s = _denoised_series(log, agent)
            fos_all.append(f)
            swr_all.append(s)
    fos_arr = np.array(fos_all)  # (n_teams * n_agents, iterations)
    swr_arr = np.array(swr_all)

    rows = []
    for t in range(iterations):
        f = fos_arr[:, t]
        s = swr_arr[:, t]
        feas = f >= 1.0
        rows.append({
            "iteration": t + 1,
            "mean_fos": float(f.mean()),
            "mean_swr": float(s.mean()),
            "mean_rswr": float(s[feas].mean()) if feas.any() else float("nan"),
            "n_feasible": int(feas.sum()),
        })

    best_fos = fos_arr.max(axis=1)
    best_swr = swr_arr.max(axis=1)
    n = len(best_fos)

    def _stderr(v: np.ndarray) -> float:
        return float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    best = {
        "mean_best_fos": float(best_fos.mean()), "stderr_best_fos": _stderr(best_fos),
        "mean_best_swr": float(best_swr.mean()), "stderr_best_swr": _stderr(best_swr),
        "n_agents_total": n,
    }
    return rows, best


def run_experiment(ae_params: dict, tn_params: dict, problem: ProblemDef,
                   cfg: TeamConfig, inf_cfg: InferenceConfig) -> ExperimentResult:
    """n_teams independent seeded team runs plus the aggregate summary."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_teams)
    logs = [run_team(ae_params, tn_params, problem, cfg, inf_cfg, seeds[i], team=i)
            for i in range(cfg.n_teams)]
    rows, best = summarize(logs, cfg.n_agents, cfg.iterations)
    return ExperimentResult(logs, rows, best)


SUMMARY_HEADER = "iteration,mean_fos,mean_swr,mean_rswr,n_feasible"


def summary_csv(rows: list[dict]) -> str:
    lines = [SUMMARY_HEADER]
    for r in rows:
        lines.append(f"{r['iteration']},{r['mean_fos']!r},{r['mean_swr']!r},"
                     f"{r['mean_rswr']!r},{r['n_feasible']}")
    return "\n".join(lines) + "\n"


def best_csv(best: dict) -> str:
    keys = ["mean_best_fos", "stderr_best_fos", "mean_best_swr", "stderr_best_swr",
            "n_agents_total"]
    return ",".join(keys) + "\n" + ",".join(repr(best[k]) for k in keys) + "\n"
