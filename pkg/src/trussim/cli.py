"""Command-line entry point wiring the modules into reproducible experiments.

Every command resolves its settings from built-in defaults, then an optional
config file (``key = value`` under ``[problem]``, ``[train]``, ``[inference]``,
``[team]`` sections), then flags (flags win), writes a run manifest *before*
computing anything, and puts all outputs under one run directory.  ``rerun``
replays a manifest and reproduces the CSVs and checkpoints byte for byte.

Exit codes: 0 success, 2 usage error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, data, plotting, simulation
from .analysis import evaluate
from .imaging import rasterize, save_pgm, save_signed_ppm, signed_diff
from .inference import InferenceConfig, build_candidates
from .nn import TrainConfig, load_params, save_params, train_autoencoder, train_transition
from .nn.checkpoint import CorruptCheckpoint, VersionMismatch
from .nn.models import HISTORY_LEN, generate_next_image
from .truss import InvalidOp, default_problem, design_hash

# (name, type, default, config section or None, help)
_PROBLEM = [("load_newtons", float, 1000.0, "problem", "downward load per load node, N")]
_TRAIN = [
    ("seed", int, 0, "train", "training seed"),
    ("ae_lr", float, 1e-3, "train", "autoencoder learning rate"),
    ("ae_epochs", int, 10, "train", "autoencoder epochs"),
    ("tn_lr_phase1", float, 1e-3, "train", "transition phase-1 learning rate"),
    ("tn_lr_phase2", float, 1e-4, "train", "transition phase-2 learning rate"),
    ("tn_epochs_phase1", int, 5, "train", "transition phase-1 epochs"),
    ("tn_epochs_phase2", int, 5, "train", "transition phase-2 epochs"),
    ("batch_size", int, 16, "train", "minibatch size"),
    ("split_fraction", float, 0.8, "train", "train fraction of the 80-20 split"),
]
_INFER = [
    ("tau_node", float, 0.25, "inference", "node-pass threshold"),
    ("tau_member", float, 0.15, "inference", "member-pass threshold"),
    ("min_coverage", float, 0.35, "inference", "band coverage threshold"),
    ("temperature", float, 0.05, "inference", "selection softmax temperature"),
]
_TEAM = [
    ("n_agents", int, 3, "team", "agents per team"),
    ("interact_every", int, 48, "team", "moves between interactions"),
    ("iterations", int, 250, "team", "moves per agent"),
    ("n_teams", int, 16, "team", "independent team runs"),
]

PARAMS = {
    "synth-data": [
        ("n", int, 50, None, "number of demonstrations"),
        ("style", str, "mixed", None, "warren | pratt | greedy | mixed"),
        ("seed", int, 0, None, "generator seed"),
        ("out", str, None, None, "output run directory"),
    ] + _PROBLEM,
    "train-ae": [
        ("data", str, None, None, "demonstration file"),
        ("out", str, None, None, "output run directory"),
    ] + _PROBLEM + _TRAIN,
    "train-tn": [
        ("data", str, None, None, "demonstration file"),
        ("ae_checkpoint", str, None, None, "trained autoencoder checkpoint"),
        ("out", str, None, None, "output run directory"),
        ("pad_front", int, 1, "train", "front-pad sequences with the first state (0/1)"),
    ] + _PROBLEM + _TRAIN,
    "suggest": [
        ("state_file", str, None, None, "demonstration file; the last 5 states are used"),
        ("ae_checkpoint", str, None, None, "autoencoder checkpoint"),
        ("tn_checkpoint", str, None, None, "transition checkpoint"),
        ("out", str, None, None, "output run directory"),
    ] + _PROBLEM + _INFER,
    "run-team": [
        ("ae_checkpoint", str, None, None, "autoencoder checkpoint"),
        ("tn_checkpoint", str, None, None, "transition checkpoint"),
        ("seed", int, 0, None, "team seed"),
        ("out", str, None, None, "output run directory"),
        ("snapshots", int, 0, None, "write per-step PGM snapshots (0/1)"),
    ] + _PROBLEM + _INFER + _TEAM,
    "run-experiment": [
        ("ae_checkpoint", str, None, None, "autoencoder checkpoint"),
        ("tn_checkpoint", str, None, None, "transition checkpoint"),
        ("seed", int, 0, None, "experiment seed"),
        ("out", str, None, None, "output run directory"),
    ] + _PROBLEM + _INFER + _TEAM,
}

_INPUT_KEYS = ("data", "ae_checkpoint", "tn_checkpoint", "state_file")


class DataError(Exception):
    pass


def _resolve(command: str, flags: argparse.Namespace, config_path: str | None) -> dict:
    cp = configparser.ConfigParser()
    if config_path:
        if not Path(config_path).is_file():
            raise DataError(f"config file not found: {config_path}")
        cp.read(config_path)
    settings = {}
    for name, typ, default, section, _ in PARAMS[command]:
        value = default
        if section and cp.has_option(section, name):
            value = typ(cp.get(section, name))
        if cp.has_option(command, name):
            value = typ(cp.get(command, name))
        flag = getattr(flags, name, None)
        if flag is not None:
            value = typ(flag)
        settings[name] = value
    if settings.get("out") is None:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        settings["out"] = f"runs/{command}-{stamp}"
    return settings


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest_text(command: str, settings: dict) -> str:
    lines = ["[run]", f"command = {command}", f"version = {__version__}", "", "[args]"]
    for key in sorted(settings):
        lines.append(f"{key} = {settings[key]}")
    lines.append("")
    lines.append("[inputs]")
    for key in _INPUT_KEYS:
        if key in settings:
            path = settings[key]
            if not Path(path).is_file():
                raise DataError(f"input file not found: {path}")
            lines.append(f"{key}_sha256 = {_sha256(path)}")
    return "\n".join(lines) + "\n"


def read_manifest(path: str) -> tuple[str, dict]:
    cp = configparser.ConfigParser()
    if not Path(path).is_file():
        raise DataError(f"manifest not found: {path}")
    cp.read(path)
    command = cp.get("run", "command")
    if command not in PARAMS:
        raise DataError(f"manifest names unknown command {command!r}")
    settings = {}
    for name, typ, _, _, _ in PARAMS[command]:
        settings[name] = typ(cp.get("args", name))
    return command, settings


def _start_run(command: str, settings: dict, dry_run: bool) -> Path | None:
    manifest = _manifest_text(command, settings)
    if dry_run:
        sys.stdout.write(manifest)
        return None
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.txt").write_text(manifest, encoding="utf-8")
    return out


def _problem(settings: dict):
    return default_problem(load_newtons=settings["load_newtons"])


def _inference_config(settings: dict) -> InferenceConfig:
    return InferenceConfig(
        tau_node=settings["tau_node"], tau_member=settings["tau_member"],
        min_coverage=settings["min_coverage"], temperature=settings["temperature"])


def _train_config(settings: dict) -> TrainConfig:
    fields = {f.name for f in dataclasses.fields(TrainConfig)}
    return TrainConfig(**{k: v for k, v in settings.items() if k in fields})


def _load_checkpoint(path: str, expect: str) -> dict:
    params, kind, _ = load_params(path)
    if kind != expect:
        raise DataError(f"{path}: checkpoint kind {kind!r}, expected {expect!r}")
    return params


def _load_demos(settings: dict, problem):
    demos = data.load_demonstrations(settings["data"], problem)
    if not demos:
        raise DataError(f"{settings['data']}: no usable demonstrations")
    return demos


def cmd_synth_data(settings: dict, dry_run: bool) -> int:
    out = _start_run("synth-data", settings, dry_run)
    if out is None:
        return 0
    problem = _problem(settings)
    rng = np.random.default_rng(settings["seed"])
    demos = data.synth_demonstrations(settings["n"], problem, rng, settings["style"])
    data.save_demonstrations(demos, out / "demos.txt")
    states = sum(len(d.states) for d in demos)
    feasible = sum(evaluate(d.states[-1], problem).feasible for d in demos)
    print(f"wrote {out / 'demos.txt'}: {len(demos)} demonstrations, {states} states, "
          f"final-state feasibility {feasible / len(demos):.2f}")
    return 0


def _metrics_csv(history: list[dict], columns: list[str]) -> str:
    lines = [",".join(columns)]
    for row in history:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                              for c in columns))
    return "\n".join(lines) + "\n"


def cmd_train_ae(settings: dict, dry_run: bool) -> int:
    out = _start_run("train-ae", settings, dry_run)
    if out is None:
        return 0
    problem = _problem(settings)
    demos = _load_demos(settings, problem)
    cache: dict = {}
    images = np.concatenate([data.demo_images(d, problem, cache) for d in demos])
    params, metrics = train_autoencoder(images, _train_config(settings))
    save_params(out / "autoencoder.ckpt", params, "autoencoder",
                {"seed": settings["seed"], "epochs": settings["ae_epochs"]})
    (out / "metrics_ae.csv").write_text(_metrics_csv(
        metrics["history"], ["epoch", "train_mse", "mse", "binary_accuracy", "r2"]),
        encoding="utf-8")
    print(f"autoencoder: test mse {metrics['test_mse']:.5f}, "
          f"binary accuracy {metrics['binary_accuracy']:.4f}, r2 {metrics['r2']:.4f}")
    return 0


def cmd_train_tn(settings: dict, dry_run: bool) -> int:
    out = _start_run("train-tn", settings, dry_run)
    if out is None:
        return 0
    problem = _problem(settings)
    ae = _load_checkpoint(settings["ae_checkpoint"], "autoencoder")
    demos = _load_demos(settings, problem)
    cache: dict = {}
    sequences = [data.demo_images(d, problem, cache) for d in demos]
    if settings["pad_front"]:
        sequences = [np.concatenate([s[:1]] * 4 + [s]) for s in sequences]
    tn, metrics = train_transition(sequences, ae, _train_config(settings))
    save_params(out / "transition.ckpt", tn, "transition", {"seed": settings["seed"]})
    rows = [dict(r, mse="", binary_accuracy="", r2="") for r in metrics["history"]]
    (out / "metrics_tn.csv").write_text(_metrics_csv(
        rows, ["phase", "epoch", "train_mse"]), encoding="utf-8")
    print(f"transition: test mse {metrics['test_mse']:.5f}, "
          f"binary accuracy {metrics['binary_accuracy']:.4f}, r2 {metrics['r2']:.4f}")
    return 0


def cmd_suggest(settings: dict, dry_run: bool) -> int:
    out = _start_run("suggest", settings, dry_run)
    if out is None:
        return 0
    problem = _problem(settings)
    ae = _load_checkpoint(settings["ae_checkpoint"], "autoencoder")
    tn = _load_checkpoint(settings["tn_checkpoint"], "transition")
    demos = data.load_demonstrations(settings["state_file"], problem)
    if not demos:
        raise DataError(f"{settings['state_file']}: no usable demonstrations")
    states = demos[0].states
    if len(states) < HISTORY_LEN:
        raise DataError(f"need 5 states, got {len(states)} in demo {demos[0].demo_id}")
    history = states[-HISTORY_LEN:]
    imgs = np.stack([rasterize(s, problem) for s in history])
    generated, _ = generate_next_image(ae, tn, imgs)
    heat = signed_diff(generated, imgs[-1])
    save_pgm(imgs[-1], out / "current.pgm")
    save_pgm(generated, out / "generated.pgm")
    save_signed_ppm(heat, out / "heatmap.ppm")
    diagnostics: dict = {}
    candidates = build_candidates(heat, history[-1], problem,
                                  _inference_config(settings), diagnostics)
    lines = ["op,params,similarity"]
    for c in sorted(candidates, key=lambda c: -c.similarity):
        desc = c.op.describe()
        kind, _, params = desc.partition("(")
        lines.append(f"{kind},({params},{c.similarity!r}")
    (out / "candidates.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"{len(candidates)} candidates ({diagnostics}) -> {out}")
    return 0


def _write_runlog(out: Path, log: simulation.RunLog, name: str) -> None:
    (out / name).write_text(simulation.runlog_csv(log), encoding="utf-8")


def cmd_run_team(settings: dict, dry_run: bool) -> int:
    out = _start_run("run-team", settings, dry_run)
    if out is None:
        return 0
    problem = _problem(settings)
    ae = _load_checkpoint(settings["ae_checkpoint"], "autoencoder")
    tn = _load_checkpoint(settings["tn_checkpoint"], "transition")
    cfg = simulation.TeamConfig(
        n_agents=settings["n_agents"], interact_every=settings["interact_every"],
        iterations=settings["iterations"], n_teams=1, seed=settings["seed"])
    on_step = None
    if settings["snapshots"]:
        snap = out / "snapshots"
        snap.mkdir(exist_ok=True)

        def on_step(step, agents, _results):
            for i, agent in enumerate(agents):
                save_pgm(rasterize(agent.current, problem),
                         snap / f"step{step:04d}_agent{i}.pgm")

    log = simulation.run_team(ae, tn, problem, cfg, _inference_config(settings),
                              np.random.SeedSequence(settings["seed"]), team=0,
                              on_step=on_step)
    _write_runlog(out, log, "runlog.csv")
    feasible = sum(r.feasible for r in log.rows)
    print(f"team run: {len(log.rows)} rows, {feasible} feasible rows -> {out}")
    return 0


def cmd_run_experiment(settings: dict, dry_run: bool) -> int:
    out = _start_run("run-experiment", settings, dry_run)
    if out is None:
        return 0
    problem = _problem(settings)
    ae = _load_checkpoint(settings["ae_checkpoint"], "autoencoder")
    tn = _load_checkpoint(settings["tn_checkpoint"], "transition")
    cfg = simulation.TeamConfig(
        n_agents=settings["n_agents"], interact_every=settings["interact_every"],
        iterations=settings["iterations"], n_teams=settings["n_teams"],
        seed=settings["seed"])
    result = simulation.run_experiment(ae, tn, problem, cfg, _inference_config(settings))
    for log in result.logs:
        _write_runlog(out, log, f"runlog_team{log.team:02d}.csv")
    (out / "summary.csv").write_text(simulation.summary_csv(result.summary_rows),
                                     encoding="utf-8")
    (out / "best.csv").write_text(simulation.best_csv(result.best), encoding="utf-8")
    iters = [r["iteration"] for r in result.summary_rows]
    plotting.line_chart({"mean FOS": (iters, [r["mean_fos"] for r in result.summary_rows])},
                        "Mean factor of safety", "iteration", "FOS", out / "fos.svg")
    plotting.line_chart({"mean SWR": (iters, [r["mean_swr"] for r in result.summary_rows])},
                        "Mean strength-to-weight ratio", "iteration", "SWR", out / "swr.svg")
    plotting.line_chart({"mean RSWR": (iters, [r["mean_rswr"] for r in result.summary_rows])},
                        "Mean restricted SWR (feasible designs)", "iteration", "RSWR",
                        out / "rswr.svg")
    print(f"experiment: {cfg.n_teams} teams x {cfg.n_agents} agents x "
          f"{cfg.iterations} iterations -> {out}")
    print(f"best: {result.best}")
    return 0


IMPLS = {
    "synth-data": cmd_synth_data,
    "train-ae": cmd_train_ae,
    "train-tn": cmd_train_tn,
    "suggest": cmd_suggest,
    "run-team": cmd_run_team,
    "run-experiment": cmd_run_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trussim",
                                     description="truss design imitation agents")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for command, params in PARAMS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", help="config file (key = value per section)")
        p.add_argument("--dry-run", action="store_true",
                       help="print the manifest and exit")
        for name, typ, default, _, help_text in params:
            required = default is None and name != "out"
            p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ,
                           required=required, help=help_text)
    p = sub.add_parser("rerun")
    p.add_argument("manifest", help="manifest.txt of a previous run")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--dry-run", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "rerun":
            command, settings = read_manifest(args.manifest)
            if args.out:
                settings["out"] = args.out
            return IMPLS[command](settings, args.dry_run)
        settings = _resolve(args.command, args, args.config)
        return IMPLS[args.command](settings, args.dry_run)
    except (DataError, data.ParseError, CorruptCheckpoint, VersionMismatch,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (InvalidOp, RuntimeError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
