"""Single-step surrogate training, evaluation metrics, and rollout.

The training objective blends a pooled mean-squared error with a negative
anomaly correlation, both computed only over in-basin pixels:

    loss = alpha * MSE + (1 - alpha) * (-ACC)

Anomalies are taken against the per-pixel training climatology. Two
stoppers guard the hyperparameter search against wasted compute: a
constant-predictor check after a fixed grace period, and a per-epoch
wall-time limit.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .fno.model import FnoConfig, init_params, forward, backward
from .fno.optim import OptimState, OptimError, optimizer_step
from .ocean import (PairedDataset, normalize_state_frame, normalize_kappa,
                    normalize_invert_states)

EPS = 1e-12
LOG_FLOOR = -15.0
ACC_CLAMP = 1.0 - 1e-15

VARIABLES = ("tracer1", "tracer2", "u", "v")


class TrainingError(ValueError):
    pass


def _pooled(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Flatten (B, C, H, W) to the in-basin entries."""
    return x[:, :, mask]


def composite_loss(pred: np.ndarray, target: np.ndarray, clim: np.ndarray,
                   mask: np.ndarray, alpha: float, acc_form: str = "standard"):
    """Return (loss, grad wrt pred, mse, acc).

    acc_form "standard" uses the usual normalized inner product of
    anomalies; "absolute" divides by the sum of absolute anomaly products
    instead.
    """
    if not 0.0 <= alpha <= 1.0:
        raise TrainingError(f"alpha must be in [0, 1], got {alpha}")
    if acc_form not in ("standard", "absolute"):
        raise TrainingError(f"unknown acc_form {acc_form!r}")
    if pred.shape != target.shape:
        raise TrainingError("pred/target shape mismatch")
    B = pred.shape[0]
    p = _pooled(pred, mask)
    t = _pooled(target, mask)
    c = _pooled(np.broadcast_to(clim[None], pred.shape), mask)
    n = p.size

    diff = p - t
    mse = float(np.sum(diff * diff) / n)

    a = p - c
    b = t - c
    num = float(np.sum(a * b))
    if acc_form == "standard":
        sa = float(np.sum(a * a))
        sb = float(np.sum(b * b))
        root = np.sqrt(sa * sb)
        den = root + EPS
        acc = num / den
        if root > 0:
            dacc = b / den - num * sb * a / (root * den * den)
        else:
            dacc = b / den
    else:
        den = float(np.sum(np.abs(a * b))) + EPS
        acc = num / den
        dacc = (b - acc * np.sign(a * b) * b) / den

    loss = alpha * mse + (1.0 - alpha) * (-acc)
    dpool = alpha * 2.0 * diff / n - (1.0 - alpha) * dacc
    grad = np.zeros_like(pred)
    grad[:, :, mask] = dpool
    return loss, grad, mse, acc


def constant_predictor_loss(target: np.ndarray, clim: np.ndarray,
                            mask: np.ndarray, alpha: float,
                            acc_form: str = "standard") -> float:
    """Composite loss of always predicting the climatology."""
    pred = np.broadcast_to(clim[None], target.shape).copy()
    loss, _, _, _ = composite_loss(pred, target, clim, mask, alpha, acc_form)
    return loss


def metrics(pred: np.ndarray, target: np.ndarray, clim: np.ndarray,
            mask: np.ndarray) -> dict[str, dict[str, float]]:
    """Per-variable error metrics over in-basin pixels.

    Logarithms are base 10 and floored at -15 so that perfect or
    degenerate cases stay finite.
    """
    out = {}
    for vi, name in enumerate(VARIABLES):
        p = pred[:, vi][:, mask]
        t = target[:, vi][:, mask]
        c = np.broadcast_to(clim[vi][mask][None], p.shape)
        mse = float(np.mean((p - t) ** 2))
        ref = float(np.mean((t - c) ** 2))
        rse = mse / (ref + EPS)
        a = p - c
        b = t - c
        den = np.sqrt(float(np.sum(a * a)) * float(np.sum(b * b))) + EPS
        acc = min(float(np.sum(a * b)) / den, ACC_CLAMP)
        out[name] = {
            "mse": mse,
            "rse": rse,
            "log_rse": max(np.log10(rse) if rse > 0 else LOG_FLOOR, LOG_FLOOR),
            "acc": acc,
            "log_one_minus_acc": max(np.log10(1.0 - acc), LOG_FLOOR),
        }
    return out


def quantile_transform(values: np.ndarray) -> np.ndarray:
    """Map values to [0, 1] by average rank; a single value maps to 0."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        return values.copy()
    if n == 1:
        return np.zeros(1)
    return (rankdata(values, method="average") - 1.0) / (n - 1.0)


# ---------------------------------------------------------------------------
# training loop

@dataclass(frozen=True)
class StopperConfig:
    grace_epochs: int = 10        # constant-predictor check fires here
    epoch_time_limit: float = 10.0  # CPU seconds; <= 0 disables


@dataclass
class EpochReport:
    epoch: int
    train_loss: float
    val_loss: float
    val_mse: float
    val_acc: float
    seconds: float


@dataclass
class TrainResult:
    objectives: tuple[float, float] | None  # (neg val MSE, val ACC)
    failure: str | None
    stopper: str | None  # "baseline" | "epoch_time" | None
    epochs_run: int
    best_epoch: int
    params: dict | None
    config: FnoConfig
    history: list[EpochReport] = field(default_factory=list)


@dataclass
class TrainJob:
    hyperparams: dict
    dataset: PairedDataset
    epochs: int = 100
    seed: int = 0
    stoppers: StopperConfig = field(default_factory=StopperConfig)
    acc_form: str = "standard"
    # single precision roughly halves step cost; losses and metrics are
    # still accumulated in double precision
    dtype: type = np.float32


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _validate(config, params, xv, yv, clim, mask, alpha, acc_form):
    losses, mses, w = [], [], []
    num = sa = sb = 0.0
    cpool = clim[:, mask]
    for start in range(0, xv.shape[0], 32):
        xb = xv[start:start + 32]
        yb = yv[start:start + 32]
        pred, _ = forward(config, params, xb)
        p = pred[:, :, mask]
        t = yb[:, :, mask]
        d = p - t
        mses.append(float(np.mean(d * d)))
        w.append(p.size)
        a = p - cpool[None]
        b = t - cpool[None]
        num += float(np.sum(a * b))
        sa += float(np.sum(a * a))
        sb += float(np.sum(b * b))
    weights = np.array(w, dtype=float)
    mse = float(np.average(mses, weights=weights))
    acc = num / (np.sqrt(sa * sb) + EPS)
    if acc_form == "absolute":
        # recompute the alternative denominator in a second cheap pass
        den = 0.0
        for start in range(0, xv.shape[0], 32):
            pred, _ = forward(config, params, xv[start:start + 32])
            a = pred[:, :, mask] - cpool[None]
            b = yv[start:start + 32][:, :, mask] - cpool[None]
            den += float(np.sum(np.abs(a * b)))
        acc = num / (den + EPS)
    loss = alpha * mse + (1.0 - alpha) * (-acc)
    return loss, mse, acc


def train(job: TrainJob) -> TrainResult:
    ds = job.dataset
    if not ds.normalized or ds.climatology is None:
        raise TrainingError("train expects a normalized dataset with climatology")
    hp = job.hyperparams
    grid = ds.inputs.shape[-1]
    config = FnoConfig.from_hyperparams(hp, grid)
    alpha = float(hp["alpha"])
    batch_size = int(hp["batch_size"])

    xt, yt = ds.subset("train")
    xv, yv = ds.subset("val")
    if xt.shape[0] == 0 or xv.shape[0] == 0:
        raise TrainingError("train requires nonempty train and val splits")
    clim = ds.climatology
    mask = ds.mask

    rng = np.random.default_rng(np.random.SeedSequence(job.seed))
    params = {k: v.astype(job.dtype) for k, v in
              init_params(config, seed=job.seed).items()}
    xt = xt.astype(job.dtype)
    xv = xv.astype(job.dtype)
    opt = OptimState(kind=hp["optimizer"], lr=float(hp["lr"]),
                     weight_decay=float(hp["weight_decay"]))

    clim_val = np.broadcast_to(clim[None], yv.shape)[:, :, mask]
    baseline_mse = float(np.mean((clim_val - yv[:, :, mask]) ** 2))
    best_mse = np.inf
    best_epoch = -1
    best_params = None
    best_acc = None
    history: list[EpochReport] = []
    stopper = None

    for epoch in range(job.epochs):
        t0 = time.process_time()
        train_losses = []
        for idx in _batches(xt.shape[0], batch_size, rng):
            xb = xt[idx]
            yb = yt[idx]
            pred, cache = forward(config, params, xb)
            loss, gpred, _, _ = composite_loss(pred, yb, clim, mask, alpha,
                                               job.acc_form)
            if not np.isfinite(loss):
                return TrainResult(objectives=None,
                                   failure=f"non-finite loss at epoch {epoch}",
                                   stopper=None, epochs_run=epoch,
                                   best_epoch=best_epoch, params=None,
                                   config=config, history=history)
            grads = backward(cache, gpred)
            try:
                optimizer_step(opt, params, grads)
            except OptimError as exc:
                return TrainResult(objectives=None,
                                   failure=f"epoch {epoch}: {exc}",
                                   stopper=None, epochs_run=epoch,
                                   best_epoch=best_epoch, params=None,
                                   config=config, history=history)
            train_losses.append(loss)

        val_loss, val_mse, val_acc = _validate(config, params, xv, yv, clim,
                                               mask, alpha, job.acc_form)
        seconds = time.process_time() - t0
        history.append(EpochReport(epoch=epoch,
                                   train_loss=float(np.mean(train_losses)),
                                   val_loss=val_loss, val_mse=val_mse,
                                   val_acc=val_acc, seconds=seconds))
        if not np.isfinite(val_loss):
            return TrainResult(objectives=None,
                               failure=f"non-finite validation loss at epoch {epoch}",
                               stopper=None, epochs_run=epoch + 1,
                               best_epoch=best_epoch, params=None,
                               config=config, history=history)
        if val_mse < best_mse:
            best_mse = val_mse
            best_epoch = epoch
            best_acc = val_acc
            best_params = {k: v.copy() for k, v in params.items()}

        if (epoch + 1 == job.stoppers.grace_epochs
                and best_mse >= baseline_mse):
            return TrainResult(objectives=None, failure=None,
                               stopper="baseline", epochs_run=epoch + 1,
                               best_epoch=best_epoch, params=best_params,
                               config=config, history=history)
        if (job.stoppers.epoch_time_limit > 0
                and seconds > job.stoppers.epoch_time_limit):
            stopper = "epoch_time"
            break

    if best_params is None:
        return TrainResult(objectives=None, failure="no finite epoch completed",
                           stopper=stopper, epochs_run=len(history),
                           best_epoch=-1, params=None, config=config,
                           history=history)
    return TrainResult(objectives=(-best_mse, best_acc), failure=None,
                       stopper=stopper, epochs_run=len(history),
                       best_epoch=best_epoch, params=best_params,
                       config=config, history=history)


# ---------------------------------------------------------------------------
# autoregressive rollout

@dataclass
class RolloutStep:
    step: int                      # 1-based prediction horizon
    prediction: np.ndarray         # (4, H, W) raw units, zero outside basin
    metrics: dict | None           # None once truth is exhausted


def rollout(config: FnoConfig, params: dict, frames: np.ndarray,
            kappa: float, stats, mask: np.ndarray, clim: np.ndarray,
            steps: int) -> tuple[list[RolloutStep], bool]:
    """Chain single-step predictions from frames[0] for `steps` steps.

    frames is (T, H, W, 5) in raw units; the kappa input channel is held
    fixed the whole way. Returns the step list and a flag that is True if
    the requested horizon ran past the available truth frames.
    """
    if steps < 1:
        raise TrainingError("steps must be >= 1")
    H, W = frames.shape[1:3]
    k_norm = normalize_kappa(kappa, stats)
    kchan = np.where(mask, k_norm, 0.0)
    state = frames[0, :, :, :4].astype(np.float64).transpose(2, 0, 1)
    state_n = normalize_state_frame(state, stats, mask)

    out: list[RolloutStep] = []
    exhausted = False
    for k in range(1, steps + 1):
        x = np.concatenate([state_n, kchan[None]], axis=0)[None]
        pred_n, _ = forward(config, params, x)
        pred_n = pred_n[0]
        pred_n[:, ~mask] = 0.0
        pred_raw = normalize_invert_states(pred_n[None], stats, mask)[0]
        if k < frames.shape[0]:
            truth = frames[k, :, :, :4].astype(np.float64).transpose(2, 0, 1)
            truth_n = normalize_state_frame(truth, stats, mask)
            step_metrics = metrics(pred_n[None], truth_n[None], clim, mask)
        else:
            step_metrics = None
            exhausted = True
        out.append(RolloutStep(step=k, prediction=pred_raw,
                               metrics=step_metrics))
        state_n = pred_n
    return out, exhausted
