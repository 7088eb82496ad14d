"""Mini-batch AdamW training, evaluation and gradient checking."""
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from .autodiff import Tape
from .base import BaseClickModel
from .data import SessionBatch, SessionDataset, batch_iterator, num_batches
from .errors import NumericalError, TrainingDivergedError, UsageError
from .logger import get_logger
from .metrics import MultiMetric, default_metrics
from .parameters import ParameterStore

logger = get_logger(__name__)

HISTORY_COLUMNS = ["epoch", "train_loss", "val_loss", "seconds"]


class TrainConfig(BaseModel):
    """Optimizer and early-stopping settings."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(0.003, gt=0)
    weight_decay: float = Field(1e-4, ge=0)
    epochs: int = Field(100, ge=1)
    batch_size: int = Field(256, ge=1)
    patience: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    adam_beta1: float = Field(0.9, gt=0, lt=1)
    adam_beta2: float = Field(0.999, gt=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)


@dataclass
class OptimizerState:
    """First and second moments per table plus the global step counter."""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


@dataclass(frozen=True)
class EpochRecord:
    """One line of the training history."""
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float


def adamw_step(store: ParameterStore, state: OptimizerState, config: TrainConfig):
    """
    Apply one AdamW update from the gradients accumulated in ``store``.

    Updates are lazy: only rows that received a gradient move, and their
    moments are the only ones advanced. Frozen tables never accumulate
    gradients and are skipped.

    Raises:
        NumericalError: If a gradient is NaN; no parameter is changed
    """
    for name, grad in store.grads.items():
        rows = store.touched[name]
        if np.isnan(grad[rows]).any():
            bad = np.flatnonzero(rows & np.isnan(grad))
            raise NumericalError(f"NaN gradient in table {name} at rows {bad[:10].tolist()}")

    state.t += 1
    beta1, beta2 = config.adam_beta1, config.adam_beta2
    correction1 = 1.0 - beta1 ** state.t
    correction2 = 1.0 - beta2 ** state.t
    for name, grad in store.grads.items():
        if name in store.frozen:
            continue
        rows = store.touched[name]
        param = store.tables[name]
        m = state.m.setdefault(name, np.zeros_like(param))
        v = state.v.setdefault(name, np.zeros_like(param))
        g = grad[rows]
        m[rows] = beta1 * m[rows] + (1.0 - beta1) * g
        v[rows] = beta2 * v[rows] + (1.0 - beta2) * g * g
        m_hat = m[rows] / correction1
        v_hat = v[rows] / correction2
        param[rows] -= config.learning_rate * (
            m_hat / (np.sqrt(v_hat) + config.adam_eps) + config.weight_decay * param[rows])


def _progress(iterable, total: int, description: str):
    return tqdm(iterable, total=total, desc=description, leave=False,
                disable=not sys.stderr.isatty())


def dataset_loss(model: BaseClickModel, dataset: SessionDataset, batch_size: int) -> float:
    """Mean conditional negative log-likelihood over every observation of a dataset."""
    total, observations = 0.0, 0
    for batch in batch_iterator(dataset, batch_size):
        if batch.num_observations == 0:
            continue
        tape = Tape()
        loss = model.compute_loss(batch, tape)
        total += float(tape.value(loss)) * batch.num_observations
        observations += batch.num_observations
    if observations == 0:
        raise UsageError("no observations")
    return total / observations


def history_frame(history: List[EpochRecord]) -> pd.DataFrame:
    """History as a frame with columns epoch,train_loss,val_loss,seconds."""
    return pd.DataFrame([vars(record) for record in history], columns=HISTORY_COLUMNS)


def write_history(history: List[EpochRecord], path) -> Path:
    """Write the training history CSV."""
    path = Path(path)
    history_frame(history).to_csv(path, index=False, float_format="%.17g",
                                  lineterminator="\n")
    return path


class Trainer:
    """
    Trains a click model with AdamW and validation-based early stopping.

    After training, the parameters of the epoch with the lowest validation
    loss are restored.
    """

    def __init__(self, config: Optional[TrainConfig] = None):
        self.config = config or TrainConfig()
        self.state = OptimizerState()

    def train_step(self, model: BaseClickModel, store: ParameterStore,
                   batch: SessionBatch) -> float:
        """Record the loss of one batch, backpropagate and update parameters."""
        tape = Tape()
        loss = model.compute_loss(batch, tape)
        grads = tape.backward(loss)
        store.zero_grad()
        store.accumulate(tape, grads)
        adamw_step(store, self.state, self.config)
        return float(tape.value(loss))

    def train(self, model: BaseClickModel, store: ParameterStore, train_data: SessionDataset,
              val_data: SessionDataset) -> List[EpochRecord]:
        """
        Run epochs until validation loss stops improving.

        Args:
            model: Model to train; its parameters live in ``store``
            store: Parameter store updated in place
            train_data: Training sessions, shuffled each epoch
            val_data: Validation sessions

        Returns:
            List[EpochRecord]: One record per completed epoch

        Raises:
            UsageError: If either dataset is empty
            TrainingDivergedError: If the validation loss becomes NaN
        """
        if len(train_data) == 0 or len(val_data) == 0:
            raise UsageError("training and validation data must be non-empty")
        config = self.config
        history: List[EpochRecord] = []
        best_loss = math.inf
        best = store.snapshot()
        stale = 0

        for epoch in range(1, config.epochs + 1):
            start = time.perf_counter()
            total, observations = 0.0, 0
            batches = batch_iterator(train_data, config.batch_size, shuffle=True,
                                     seed=[config.seed, epoch])
            for batch in _progress(batches, num_batches(train_data, config.batch_size),
                                   f"epoch {epoch}"):
                if batch.num_observations == 0:
                    continue
                try:
                    loss = self.train_step(model, store, batch)
                except NumericalError as error:
                    raise TrainingDivergedError(str(error), history) from error
                total += loss * batch.num_observations
                observations += batch.num_observations

            val_loss = dataset_loss(model, val_data, config.batch_size)
            record = EpochRecord(epoch, total / max(observations, 1), val_loss,
                                 time.perf_counter() - start)
            history.append(record)
            logger.info("Epoch %d: train loss %.6f, val loss %.6f (%.2fs)",
                        epoch, record.train_loss, val_loss, record.seconds)
            if math.isnan(val_loss):
                raise TrainingDivergedError(f"validation loss is NaN at epoch {epoch}", history)

            if val_loss < best_loss:
                best_loss, best, stale = val_loss, store.snapshot(), 0
            else:
                stale += 1
                if stale >= config.patience:
                    logger.info("Early stopping after epoch %d", epoch)
                    break

        store.restore(best)
        logger.info("Restored parameters with best val loss %.6f", best_loss)
        return history

    def test(self, model: BaseClickModel, data: SessionDataset,
             metrics: Optional[MultiMetric] = None) -> MultiMetric:
        """Evaluate a model on held-out data."""
        return evaluate(model, data, metrics, self.config.batch_size)


def evaluate(model: BaseClickModel, data: SessionDataset, metrics: Optional[MultiMetric] = None,
             batch_size: int = 256) -> MultiMetric:
    """
    Stream a dataset through a metric collection without touching parameters.

    Args:
        model: Model to evaluate
        data: Sessions with clicks (and labels for ranking metrics)
        metrics: Metrics to update; click metrics plus ranking metrics when
            the data has labels by default
        batch_size: Sessions per batch

    Returns:
        MultiMetric: The updated metrics

    Raises:
        UsageError: If the data has no observations
    """
    if data.num_slots == 0:
        raise UsageError("no observations")
    if metrics is None:
        metrics = default_metrics(with_labels=data.has_labels)
    for batch in batch_iterator(data, batch_size):
        inputs = {
            "log_probs": model.predict_clicks(batch),
            "conditional_log_probs": model.predict_conditional_clicks(batch),
            "clicks": batch.clicks,
            "mask": batch.mask,
            "labels": batch.labels,
        }
        if batch.labels is not None:
            inputs["scores"] = model.predict_relevance(batch)
        metrics.update(**inputs)
    return metrics


@dataclass
class GradCheckResult:
    """Largest relative error between tape gradients and finite differences."""
    max_relative_error: float
    worst_table: str = ""
    worst_row: int = -1
    checked: int = 0


def gradcheck(model: BaseClickModel, store: ParameterStore, batch: SessionBatch,
              step: float = 1e-6, floor: float = 1e-3) -> GradCheckResult:
    """
    Compare tape gradients with central finite differences.

    Every row of every table the model reads is perturbed by +-``step``. The
    relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).

    Returns:
        GradCheckResult: Worst relative error and where it occurred
    """
    tape = Tape()
    loss = model.compute_loss(batch, tape)
    store.zero_grad()
    store.accumulate(tape, tape.backward(loss))

    def loss_at() -> float:
        fresh = Tape()
        return float(fresh.value(model.compute_loss(batch, fresh)))

    result = GradCheckResult(max_relative_error=0.0)
    for name in model.tables():
        if name in store.frozen:
            continue
        table = store.tables[name]
        analytic = store.grads.get(name, np.zeros_like(table))
        for row in range(len(table)):
            original = table[row]
            table[row] = original + step
            upper = loss_at()
            table[row] = original - step
            lower = loss_at()
            table[row] = original
            numeric = (upper - lower) / (2.0 * step)
            error = abs(analytic[row] - numeric) / max(abs(analytic[row]), abs(numeric), floor)
            result.checked += 1
            if error > result.max_relative_error:
                result.max_relative_error = float(error)
                result.worst_table, result.worst_row = name, row
    store.zero_grad()
    return result
