"""Training loop, schedules and evaluation for the experiment CLI.

Two learning-rate schedules: "cnn" (divide by 10 every 10 epochs, default
30 epochs at 1e-4) and "transformer" (3-epoch linear warm-up, then halve
every 10 epochs, default 50 epochs at 5e-4). Training is deterministic
given (config, seed): model init, batch shuffling and every logged number
are pure functions of them.
"""

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import arch
from . import config as cfgmod
from . import dataset as dsmod
from . import geometry as geo
from . import tensor as T
from .optim import Adam
from .tensor import Tape, Tensor, backward


class TrainingError(RuntimeError):
    pass


class ScheduleError(ValueError):
    pass


SCHEDULE_DEFAULTS = {
    "cnn": {"epochs": 30, "base_lr": 1e-4},
    "transformer": {"epochs": 50, "base_lr": 5e-4},
}
WARMUP_EPOCHS = 3

EPOCH_LOG_HEADER = "epoch,lr,train_loss,train_err_deg,val_err_deg"


def lr_schedule(kind, epoch, base_lr, total_epochs=None):
    """Learning rate for one epoch of the named schedule."""
    if kind not in SCHEDULE_DEFAULTS:
        raise ScheduleError(f"unknown schedule kind {kind!r}")
    total = total_epochs if total_epochs is not None else SCHEDULE_DEFAULTS[kind]["epochs"]
    if not 0 <= epoch < total:
        raise ScheduleError(f"epoch {epoch} outside configured total of {total}")
    if kind == "cnn":
        return base_lr * 10.0 ** -(epoch // 10)
    if epoch < WARMUP_EPOCHS:
        return base_lr * (epoch + 1) / WARMUP_EPOCHS
    return base_lr * 0.5 ** (epoch // 10)


@dataclass
class TrainConfig:
    model: arch.ModelConfig = field(default_factory=arch.ModelConfig)
    train_dir: str = ""
    val_dir: str = ""
    schedule: str = "cnn"
    epochs: int = 0          # 0 = schedule default
    base_lr: float = 0.0     # 0 = schedule default
    batch_size: int = 32
    seed: int = 0
    out_dir: str = ""

    def resolved(self):
        d = SCHEDULE_DEFAULTS[self.schedule]
        return replace(self,
                       epochs=self.epochs or d["epochs"],
                       base_lr=self.base_lr or d["base_lr"])


MODEL_SCHEMA = {
    "arch": cfgmod.as_str,
    "resolution": cfgmod.as_int,
    "in_channels": cfgmod.as_int,
    "first_stride": cfgmod.as_int,
    "width": cfgmod.as_int,
    "blocks_per_stage": cfgmod.as_int_tuple,
    "patch_stride": cfgmod.as_int,
    "stages": cfgmod.as_int,
    "attention_stages": cfgmod.as_int_tuple,
    "poolformer_blocks": cfgmod.as_int,
    "mlp_ratio": cfgmod.as_int,
    "share_eye_weights": cfgmod.as_bool,
    "eye_resolution": cfgmod.as_int,
    "eye_width": cfgmod.as_int,
    "eye_blocks_per_stage": cfgmod.as_int_tuple,
}

TRAIN_SCHEMA = {
    "schedule": cfgmod.as_str,
    "epochs": cfgmod.as_int,
    "base_lr": cfgmod.as_float,
    "batch_size": cfgmod.as_int,
    "seed": cfgmod.as_int,
    "out_dir": cfgmod.as_str,
}

DATA_SCHEMA = {
    "train": cfgmod.as_str,
    "val": cfgmod.as_str,
    "test": cfgmod.as_str,
}


def model_config_from_section(section):
    parsed = cfgmod.apply_schema("model", section, MODEL_SCHEMA)
    return arch.ModelConfig(**parsed)


def model_config_section(mc):
    lines = mc.to_lines()
    return {ln.split(" = ")[0]: ln.split(" = ", 1)[1] for ln in lines}


def train_config_from_file(path):
    raw = cfgmod.read_config(path)
    known = {"model", "train", "data"}
    unknown = set(raw) - known
    if unknown:
        raise cfgmod.ConfigError(f"unknown config sections: {sorted(unknown)}")
    mc = model_config_from_section(raw.get("model", {}))
    tr = cfgmod.apply_schema("train", raw.get("train", {}), TRAIN_SCHEMA)
    data = cfgmod.apply_schema("data", raw.get("data", {}), DATA_SCHEMA)
    return TrainConfig(model=mc,
                       train_dir=data.get("train", ""),
                       val_dir=data.get("val", ""),
                       **tr)


def forward_model(model, inputs, training):
    """Run the model on one batch of numpy inputs (array or 3-tuple)."""
    model.train(training)
    if isinstance(inputs, tuple):
        return model(*(Tensor(a) for a in inputs))
    return model(Tensor(inputs))


def predict(model, inputs, batch_size=64):
    """Eval-mode predictions, fixed order, (N, 2) float pitch/yaw radians."""
    n = inputs[0].shape[0] if isinstance(inputs, tuple) else inputs.shape[0]
    outs = []
    for lo in range(0, n, batch_size):
        if isinstance(inputs, tuple):
            chunk = tuple(a[lo:lo + batch_size] for a in inputs)
        else:
            chunk = inputs[lo:lo + batch_size]
        outs.append(forward_model(model, chunk, training=False).data.astype(np.float64))
    return np.concatenate(outs, axis=0)


@dataclass
class EvalResult:
    mean_deg: float
    median_deg: float
    errors_deg: np.ndarray
    predictions: np.ndarray


def evaluate_arrays(model, inputs, labels, batch_size=64):
    preds = predict(model, inputs, batch_size)
    errors = geo.angular_error_deg(preds, np.asarray(labels, dtype=np.float64))
    return EvalResult(float(errors.mean()), float(np.median(errors)), errors, preds)


def evaluate(model, dataset, batch_size=64):
    """Mean/median angular error of a model on a dataset (eval mode)."""
    if len(dataset) == 0:
        raise TrainingError(f"{dataset.root}: empty dataset")
    inputs, labels = dsmod.load_inputs(dataset)
    return evaluate_arrays(model, inputs, labels, batch_size)


def _check_compat(cfg, dataset, role):
    mc = cfg.model
    want_regions = "multi" if mc.arch == "multiregion" else "face"
    if dataset.regions != want_regions:
        raise TrainingError(
            f"{role} dataset is {dataset.regions}-region but architecture "
            f"{mc.arch!r} needs {want_regions}")
    img = dataset.load_image(dataset.samples[0])
    if img.shape[0] != mc.resolution:
        raise TrainingError(
            f"{role} dataset resolution {img.shape[0]} does not match the "
            f"architecture input resolution {mc.resolution}")
    if want_regions == "multi":
        eye = dataset.load_image(dataset.samples[0], "left")
        if eye.shape[0] != mc.eye_resolution:
            raise TrainingError(
                f"{role} dataset eye resolution {eye.shape[0]} does not match "
                f"the architecture eye resolution {mc.eye_resolution}")


@dataclass
class TrainResult:
    model: object
    history: list
    wall_seconds: float
    checkpoint_path: str = ""
    log_path: str = ""


def run_training(model, train_inputs, train_labels, cfg, val_inputs=None, val_labels=None,
                 train_eval="each"):
    """Core loop over epochs/batches; returns per-epoch history rows.

    ``train_eval`` is "each" (train-set angular error logged every epoch, the
    `train` operation's contract) or "final" (last epoch only, cheaper for
    grid cells whose logs are not persisted).
    """
    cfg = cfg.resolved()
    optimizer = Adam(model.parameters())
    n = train_labels.shape[0]
    history = []
    labels64 = train_labels.astype(np.float64)
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        lr = lr_schedule(cfg.schedule, epoch, cfg.base_lr, total_epochs=cfg.epochs)
        order = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch])).permutation(n)
        loss_sum = 0.0
        for bi, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            if isinstance(train_inputs, tuple):
                batch = tuple(a[idx] for a in train_inputs)
            else:
                batch = train_inputs[idx]
            y = Tensor(train_labels[idx])
            with Tape() as tape:
                out = forward_model(model, batch, training=True)
                loss = T.l1_loss(out, y)
            val = loss.item()
            if not math.isfinite(val):
                raise TrainingError(f"non-finite loss at epoch {epoch} batch {bi}")
            backward(loss, tape)
            optimizer.step(lr)
            optimizer.zero_grad()
            loss_sum += val * len(idx)
        train_err = float("nan")
        if train_eval == "each" or epoch == cfg.epochs - 1:
            train_err = evaluate_arrays(model, train_inputs, labels64).mean_deg
        val_err = float("nan")
        if val_labels is not None:
            val_err = evaluate_arrays(model, val_inputs, val_labels).mean_deg
        history.append({
            "epoch": epoch,
            "lr": lr,
            "train_loss": loss_sum / n,
            "train_err_deg": train_err,
            "val_err_deg": val_err,
        })
    wall = time.perf_counter() - t0
    model.train(True)
    return history, wall


def write_epoch_log(path, history):
    lines = [EPOCH_LOG_HEADER]
    for row in history:
        lines.append(",".join([str(row["epoch"]), repr(row["lr"]), repr(row["train_loss"]),
                               repr(row["train_err_deg"]), repr(row["val_err_deg"])]))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("\n".join(lines) + "\n")


def train(cfg):
    """Full experiment-level training: datasets from disk, logs, checkpoint."""
    from . import checkpoint as ckpt

    cfg = cfg.resolved()
    train_ds = dsmod.load_dataset(cfg.train_dir)
    _check_compat(cfg, train_ds, "train")
    val_data = None
    if cfg.val_dir:
        val_ds = dsmod.load_dataset(cfg.val_dir)
        _check_compat(cfg, val_ds, "val")
        val_data = dsmod.load_inputs(val_ds)
    model = arch.build_from_model_config(cfg.model, seed=cfg.seed)
    train_inputs, train_labels = dsmod.load_inputs(train_ds)
    history, wall = run_training(
        model, train_inputs, train_labels, cfg,
        val_inputs=val_data[0] if val_data else None,
        val_labels=val_data[1] if val_data else None)
    result = TrainResult(model, history, wall)
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.log_path = str(out / "train_log.csv")
        write_epoch_log(result.log_path, history)
        result.checkpoint_path = str(out / "model.gzrf")
        final_lr = history[-1]["lr"] if history else cfg.base_lr
        ckpt.save_checkpoint(model, result.checkpoint_path, cfg.model,
                             epoch=cfg.epochs, seed=cfg.seed, final_lr=final_lr)
    return result
