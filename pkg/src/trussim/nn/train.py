"""Training loops: reconstruction training for the autoencoder and the
two-phase (recreate-current, then predict-next) training of the transition
network against a frozen autoencoder.

Both loops are bit-deterministic given (seed, dataset order, config): weight
init and batch shuffles come from one seeded generator and reductions happen
in a fixed order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import models, ops

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    ae_lr: float = 1e-3
    ae_epochs: int = 10
    tn_lr_phase1: float = 1e-3
    tn_lr_phase2: float = 1e-4
    tn_epochs_phase1: int = 5
    tn_epochs_phase2: int = 5
    batch_size: int = 16
    split_fraction: float = 0.8
    seed: int = 0
    binary_threshold: float = 0.5
    early_stop_r2: float | None = None  # stop AE training once held-out r2 reaches this

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must be in (0, 1)")
        if not 0.0 < self.tn_lr_phase2 < self.tn_lr_phase1:
            raise ValueError("phase-2 learning rate must be positive and below phase-1")


def prediction_metrics(pred: np.ndarray, target: np.ndarray,
                       threshold: float = 0.5) -> dict[str, float]:
    """Pixel MSE, binary accuracy (pred > thr vs target > thr), and r^2 over
    all pixels (r^2 = 1 - SS_res / SS_tot, with the global target mean)."""
    p = pred.astype(np.float64).ravel()
    t = target.astype(np.float64).ravel()
    mse = float(np.mean((p - t) ** 2))
    binacc = float(np.mean((p > threshold) == (t > threshold)))
    ss_res = float(np.sum((p - t) ** 2))
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else (1.0 if ss_res == 0.0 else -np.inf)
    return {"mse": mse, "binary_accuracy": binacc, "r2": r2}


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def reconstruct(params: dict, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Autoencoder output for a stack of images, evaluated in batches."""
    outs = []
    for start in range(0, len(images), batch_size):
        x = images[start:start + batch_size][:, None]
        outs.append(models.autoencoder_forward(params, x)[:, 0])
    return np.concatenate(outs, axis=0)


def train_autoencoder(images: np.ndarray, cfg: TrainConfig) -> tuple[dict, dict]:
    """Unsupervised reconstruction training with MSE + Adam on an internal
    80-20 image split.  Returns (params, metrics); metrics carries the final
    held-out mse / binary accuracy / r^2 plus per-epoch history rows."""
    images = np.asarray(images, dtype=np.float32)
    if len(images) < 2:
        raise ValueError("need at least 2 images to train")
    rng = np.random.default_rng(cfg.seed)
    params = models.init_autoencoder(rng)

    order = rng.permutation(len(images))
    n_train = min(len(images) - 1, max(1, round(len(images) * cfg.split_fraction)))
    train = images[order[:n_train]]
    test = images[order[n_train:]]

    state = ops.AdamState(lr=cfg.ae_lr)
    history = []
    for epoch in range(cfg.ae_epochs):
        losses = []
        for batch in _batches(len(train), cfg.batch_size, rng):
            x = train[batch][:, None]
            cache: dict = {}
            y = models.autoencoder_forward(params, x, cache)
            loss, gy = ops.mse_loss(y, x)
            grads = models.autoencoder_backward(params, cache, gy)
            ops.adam_step(params, grads, state)
            losses.append((loss, len(batch)))
        train_mse = sum(l * n for l, n in losses) / sum(n for _, n in losses)
        test_m = prediction_metrics(reconstruct(params, test), test, cfg.binary_threshold)
        history.append({"epoch": epoch, "train_mse": train_mse, **test_m})
        log.info("ae epoch %d: train mse %.3g, test mse %.3g, r2 %.4f",
                 epoch, train_mse, test_m["mse"], test_m["r2"])
        if cfg.early_stop_r2 is not None and test_m["r2"] >= cfg.early_stop_r2:
            break

    final = prediction_metrics(reconstruct(params, test), test, cfg.binary_threshold)
    metrics = {"test_mse": final["mse"], "binary_accuracy": final["binary_accuracy"],
               "r2": final["r2"], "n_train": len(train), "n_test": len(test),
               "history": history}
    return params, metrics


@dataclass
class _WindowSet:
    """Index view of sliding 5-windows over a set of image sequences."""

    sequences: list[np.ndarray]
    windows: list[tuple[int, int]] = field(default_factory=list)  # (seq, end t)

    def build(self, phase: int) -> "_WindowSet":
        need = models.HISTORY_LEN + (1 if phase == 2 else 0)
        self.windows = [
            (s, t)
            for s, seq in enumerate(self.sequences)
            for t in range(models.HISTORY_LEN - 1, len(seq) - (1 if phase == 2 else 0))
            if len(seq) >= need
        ]
        return self


def _gather(window_set: _WindowSet, embeddings: list[np.ndarray],
            idx: np.ndarray, phase: int) -> tuple[np.ndarray, np.ndarray]:
    hist = np.stack([
        embeddings[s][t - models.HISTORY_LEN + 1: t + 1]
        for s, t in (window_set.windows[i] for i in idx)
    ])
    target = np.stack([
        window_set.sequences[s][t if phase == 1 else t + 1]
        for s, t in (window_set.windows[i] for i in idx)
    ])
    return hist, target


def _transition_step(ae_params: dict, tn_params: dict, hist: np.ndarray,
                     target: np.ndarray, state: ops.AdamState) -> float:
    cache: dict = {}
    z = models.transition_forward(tn_params, hist, cache)
    pred = models.decoder_forward(ae_params, z, cache)
    loss, gy = ops.mse_loss(pred, target[:, None])
    gz, _ = models.decoder_backward(ae_params, cache, gy, need_weight_grads=False)
    grads = models.transition_backward(tn_params, cache, gz)
    ops.adam_step(tn_params, grads, state)
    return loss


def transition_eval(ae_params: dict, tn_params: dict, window_set: _WindowSet,
                    embeddings: list[np.ndarray], phase: int,
                    threshold: float = 0.5, batch_size: int = 32) -> dict[str, float]:
    preds, targets = [], []
    idx = np.arange(len(window_set.windows))
    for start in range(0, len(idx), batch_size):
        hist, target = _gather(window_set, embeddings, idx[start:start + batch_size], phase)
        z = models.transition_forward(tn_params, hist)
        preds.append(models.decoder_forward(ae_params, z)[:, 0])
        targets.append(target)
    return prediction_metrics(np.concatenate(preds), np.concatenate(targets), threshold)


def train_transition(sequences: list[np.ndarray], ae_params: dict,
                     cfg: TrainConfig) -> tuple[dict, dict]:
    """Two-phase supervised training of the transition network.

    Phase 1 targets the newest image of each input window (recreate the
    current design); phase 2 lowers the learning rate and targets the next
    image.  Gradients flow only into the transition parameters; the
    autoencoder is frozen throughout.
    """
    sequences = [np.asarray(s, dtype=np.float32) for s in sequences]
    usable = [s for s in sequences if len(s) >= models.HISTORY_LEN + 1]
    skipped = len(sequences) - len(usable)
    if skipped:
        log.warning("train_transition: skipped %d sequences shorter than %d states",
                    skipped, models.HISTORY_LEN + 1)
    if len(usable) < 2:
        raise ValueError("need at least 2 sequences of >= 6 states")

    rng = np.random.default_rng(cfg.seed)
    tn_params = models.init_transition(rng)

    order = rng.permutation(len(usable))
    n_train = min(len(usable) - 1, max(1, round(len(usable) * cfg.split_fraction)))
    train_seqs = [usable[i] for i in order[:n_train]]
    test_seqs = [usable[i] for i in order[n_train:]]

    train_emb = [models.encode(ae_params, s) for s in train_seqs]
    test_emb = [models.encode(ae_params, s) for s in test_seqs]

    sample = train_seqs[0][:1]
    recon = models.decode(ae_params, models.encode(ae_params, sample))
    if float(np.mean((recon - sample[0]) ** 2)) > 0.05:
        log.warning("autoencoder looks untrained (sample reconstruction mse > 0.05); "
                    "transition training may not converge")

    history = []
    for phase, lr, epochs in ((1, cfg.tn_lr_phase1, cfg.tn_epochs_phase1),
                              (2, cfg.tn_lr_phase2, cfg.tn_epochs_phase2)):
        window_set = _WindowSet(train_seqs).build(phase)
        state = ops.AdamState(lr=lr)
        for epoch in range(epochs):
            losses = []
            for batch in _batches(len(window_set.windows), cfg.batch_size, rng):
                hist, target = _gather(window_set, train_emb, batch, phase)
                loss = _transition_step(ae_params, tn_params, hist, target, state)
                losses.append((loss, len(batch)))
            train_mse = sum(l * n for l, n in losses) / sum(n for _, n in losses)
            history.append({"phase": phase, "epoch": epoch, "train_mse": train_mse})
            log.info("tn phase %d epoch %d: train mse %.3g", phase, epoch, train_mse)

    test_windows = _WindowSet(test_seqs).build(2)
    final = transition_eval(ae_params, tn_params, test_windows, test_emb, 2,
                            cfg.binary_threshold)
    metrics = {"test_mse": final["mse"], "binary_accuracy": final["binary_accuracy"],
               "r2": final["r2"], "n_train_sequences": len(train_seqs),
               "n_test_sequences": len(test_seqs), "history": history}
    return tn_params, metrics
