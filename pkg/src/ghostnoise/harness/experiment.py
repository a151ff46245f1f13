"""Training runs, sweeps and their CSV / JSON tables."""

import csv
import dataclasses
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..tensor import RNG_ALGORITHM, rng_stream
from ..traces import DEFAULT_CAPACITY, NoiseTrace, record_noise
from .data import Dataset
from .model import Mlp, MlpSpec, softmax_cross_entropy
from .optim import cosine_lr, sgd_step

# stream ids derived from a run seed
INIT_STREAM, SHUFFLE_STREAM, NOISE_STREAM, TRACE_STREAM = 1, 2, 3, 4

RUN_COLUMNS = ["run_id", "axis_value", "seed", "epoch", "lr", "train_loss", "train_acc", "val_acc", "diverged"]
SUMMARY_COLUMNS = ["axis_value", "mean_val_acc", "std_val_acc", "mean_test_acc", "std_test_acc"]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 20
    warmup_epochs: int = 2
    batch_size: int = 256
    seed: int = 0
    eval_fraction: float = 0.1
    ema_decay: float = 0.9
    trace_epochs: tuple = ()
    trace_capacity: int = DEFAULT_CAPACITY

    def __post_init__(self):
        object.__setattr__(self, "trace_epochs", tuple(int(e) for e in self.trace_epochs))
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.epochs < 0 or self.warmup_epochs < 0:
            raise ValueError("epochs and warmup_epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not 0.0 < self.eval_fraction < 0.5:
            raise ValueError("eval_fraction must lie in (0, 0.5)")

    def resolved_trace_epochs(self) -> set:
        return {e if e > 0 else self.epochs + 1 + e for e in self.trace_epochs}


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_acc: float
    diverged: bool = False


@dataclass
class Metrics:
    seed: int
    epochs: list = field(default_factory=list)
    test_acc: float = float("nan")
    diverged: bool = False
    traces: list = field(default_factory=list)
    rng_algorithm: str = RNG_ALGORITHM

    @property
    def final_val_acc(self) -> float:
        return self.epochs[-1].val_acc


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def _evaluate(model: Mlp, x, y):
    logits = model.predict(x)
    with np.errstate(all="ignore"):
        loss = softmax_cross_entropy(logits, y)[0] if np.all(np.isfinite(logits)) else float("nan")
    return loss, accuracy(logits, y)


def run_experiment(spec: MlpSpec, cfg: TrainConfig, data: Dataset) -> Metrics:
    """Train ``spec`` on ``data`` and record per-epoch metrics.

    Epoch 0 is the evaluation of the untrained model.  Mini-batches are drawn
    from a fresh permutation each epoch and the trailing incomplete batch is
    dropped.  A non-finite training loss flags the run as diverged and ends it.
    """
    if spec.input_dim != data.input_dim or spec.num_classes != data.num_classes:
        raise ValueError("model spec does not match dataset dimensions")
    n_train = data.x_train.shape[0]
    bsz = cfg.batch_size
    if spec.uses_batch_stats and bsz < 2:
        raise ValueError("batch statistics need batch_size >= 2")
    steps_per_epoch = n_train // bsz
    if steps_per_epoch < 1:
        raise ValueError("training set smaller than one batch")
    total_steps = cfg.epochs * steps_per_epoch
    warmup_steps = min(cfg.warmup_epochs * steps_per_epoch, max(total_steps - 1, 0))

    model = Mlp(spec, rng_stream(cfg.seed, INIT_STREAM))
    shuffle_rng = rng_stream(cfg.seed, SHUFFLE_STREAM)
    noise_rng = rng_stream(cfg.seed, NOISE_STREAM)
    metrics = Metrics(seed=cfg.seed)

    # calibrate running statistics on the first training batch, without noise
    n_layers = len(spec.hidden)
    _, cache = model.forward(data.x_train[:bsz], mode="train", pinned=[None] * n_layers)
    model.update_running(cache, decay=cfg.ema_decay)

    loss0, acc0 = _evaluate(model, data.x_train, data.y_train)
    metrics.epochs.append(EpochRecord(0, 0.0, loss0, acc0, _evaluate(model, data.x_val, data.y_val)[1]))

    trace_epochs = cfg.resolved_trace_epochs()
    gni_layers = [l for l, inj in enumerate(spec.layer_injectors) if inj.kind in ("gni", "agni")]
    params, velocity = model.params, {}
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        traces = {}
        if epoch in trace_epochs:
            for l in gni_layers:
                tseed = int(rng_stream(cfg.seed, TRACE_STREAM).integers(2**63)) + 1000 * epoch + l
                traces[l] = NoiseTrace(f"layer{l}", epoch, capacity=cfg.trace_capacity, seed=tseed)
        perm = shuffle_rng.permutation(n_train)
        losses, accs, lr = [], [], 0.0
        for i in range(steps_per_epoch):
            idx = perm[i * bsz:(i + 1) * bsz]
            xb, yb = data.x_train[idx], data.y_train[idx]
            lr = cosine_lr(step, total_steps, warmup_steps, cfg.lr)
            with np.errstate(all="ignore"):
                logits, cache = model.forward(xb, mode="train", rng=noise_rng)
                loss, grads = model.backward(cache, yb)
            if not math.isfinite(loss):
                metrics.diverged = True
                break
            model.update_running(cache, decay=cfg.ema_decay)
            params, velocity = sgd_step(params, grads, velocity, lr, cfg.momentum, cfg.weight_decay,
                                        decayed=Mlp.is_decayed)
            model.params = params
            losses.append(loss)
            accs.append(accuracy(logits, yb))
            for l, trace in traces.items():
                record_noise(trace, cache.layers[l].draw)
            step += 1
        metrics.traces.extend(traces.values())
        val_acc = _evaluate(model, data.x_val, data.y_val)[1]
        if metrics.diverged:
            metrics.epochs.append(EpochRecord(epoch, lr, float("nan"), float(np.mean(accs)) if accs else float("nan"),
                                              val_acc, True))
            break
        metrics.epochs.append(EpochRecord(epoch, lr, float(np.mean(losses)), float(np.mean(accs)), val_acc))
    metrics.test_acc = _evaluate(model, data.x_test, data.y_test)[1]
    return metrics


# ---------------------------------------------------------------------------
# sweeps


def with_override(spec: MlpSpec, cfg: TrainConfig, axis: str, value):
    """Return ``(spec, cfg)`` with the dotted field ``axis`` set to ``value``.

    ``injector.<field>`` updates every layer's injector.
    """
    head, _, rest = axis.partition(".")
    spec_fields = {f.name for f in dataclasses.fields(MlpSpec)}
    cfg_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    if head == "injector" and rest:
        inj = spec.injector
        if isinstance(inj, tuple):
            new = tuple(dataclasses.replace(i, **{rest: value}) for i in inj)
        else:
            new = dataclasses.replace(inj, **{rest: value})
        return dataclasses.replace(spec, injector=new), cfg
    if rest:
        raise ValueError(f"unknown sweep axis {axis!r}")
    if head in spec_fields:
        return dataclasses.replace(spec, **{head: value}), cfg
    if head in cfg_fields:
        return spec, dataclasses.replace(cfg, **{head: value})
    raise ValueError(f"unknown sweep axis {axis!r}")


@dataclass
class SweepCell:
    axis_value: object
    seed: int
    metrics: Metrics

    @property
    def run_id(self) -> str:
        return f"{self.axis_value}-s{self.seed}"


@dataclass
class SweepResult:
    axis: str
    cells: list

    def summary(self) -> list[dict]:
        rows, order = {}, []
        for cell in self.cells:
            key = str(cell.axis_value)
            if key not in rows:
                rows[key] = []
                order.append(key)
            rows[key].append(cell.metrics)
        out = []
        for key in order:
            val = np.array([m.final_val_acc for m in rows[key]])
            test = np.array([m.test_acc for m in rows[key]])
            # population std so a single seed still yields a finite value
            out.append({"axis_value": key, "mean_val_acc": float(val.mean()), "std_val_acc": float(val.std()),
                        "mean_test_acc": float(test.mean()), "std_test_acc": float(test.std())})
        return out


def _run_cell(args):
    spec, cfg, data, axis, value, seed = args
    spec_v, cfg_v = with_override(spec, cfg, axis, value)
    cfg_v = dataclasses.replace(cfg_v, seed=seed)
    return SweepCell(value, seed, run_experiment(spec_v, cfg_v, data))


def sweep(spec: MlpSpec, cfg: TrainConfig, data: Dataset, axis: str, values: Sequence,
          seeds: Sequence[int], parallel: int = 1) -> SweepResult:
    """Run every (axis value, seed) pair; run streams derive from the seed alone."""
    if not values or not seeds:
        raise ValueError("sweep needs at least one axis value and one seed")
    for v in values:
        with_override(spec, cfg, axis, v)
    jobs = [(spec, cfg, data, axis, v, int(s)) for v in values for s in seeds]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            cells = list(pool.map(_run_cell, jobs))
    else:
        cells = [_run_cell(j) for j in jobs]
    return SweepResult(axis, cells)


# ---------------------------------------------------------------------------
# tables


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_rows(cells: Sequence[SweepCell]) -> list[dict]:
    rows = []
    for cell in cells:
        for rec in cell.metrics.epochs:
            rows.append({"run_id": cell.run_id, "axis_value": str(cell.axis_value), "seed": cell.seed,
                         "epoch": rec.epoch, "lr": rec.lr, "train_loss": rec.train_loss,
                         "train_acc": rec.train_acc, "val_acc": rec.val_acc, "diverged": rec.diverged})
    return rows


def table_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def table_json(rows: list[dict]) -> str:
    def clean(v):
        return None if isinstance(v, float) and not math.isfinite(v) else v
    return json.dumps([{k: clean(v) for k, v in r.items()} for r in rows], indent=1)
