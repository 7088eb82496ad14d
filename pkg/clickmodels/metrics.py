"""
Streaming, mask-aware evaluation metrics.

Click-prediction metrics keep running sums per rank so both a global value
and a per-rank vector can be reported. Ranking metrics average per session.
Every metric declares which keyword arguments it reads, so a ``MultiMetric``
can route a single ``update(**inputs)`` call to all of them.
"""
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import logspace
from .autodiff import ROUNDING_SLACK
from .errors import UsageError
from .logger import get_logger

logger = get_logger(__name__)

LN2 = np.log(2.0)


class Metric(ABC):
    """A streaming metric over batches of (sessions x K) arrays."""

    name: str = ""
    inputs: Tuple[str, ...] = ()
    per_rank: bool = False

    def __init__(self):
        self.reset()

    @abstractmethod
    def reset(self):
        """Forget all accumulated state."""

    @abstractmethod
    def update(self, **kwargs):
        """Accumulate one batch; reads the keywords listed in ``inputs``."""

    @abstractmethod
    def merge(self, other: "Metric"):
        """Fold another accumulator of the same metric into this one."""

    @abstractmethod
    def compute(self) -> float:
        """Value over everything accumulated so far."""

    def compute_per_rank(self) -> np.ndarray:
        """One value per rank (1-based rank r at index r - 1)."""
        raise UsageError(f"{self.name} has no per-rank form")


def _validated(log_probs, clicks, mask) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    log_probs = np.asarray(log_probs, dtype=np.float64)
    clicks = np.asarray(clicks, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not log_probs.shape == clicks.shape == mask.shape:
        raise UsageError("log-probabilities, clicks and mask must have the same shape")
    if (log_probs[mask] > ROUNDING_SLACK).any():
        raise UsageError("log-probabilities must be <= 0")
    return np.minimum(log_probs, 0.0), clicks, mask


def click_log_likelihood(log_probs, clicks, mask) -> np.ndarray:
    """c log p + (1 - c) log(1 - p) per slot, 0 on padding."""
    log_probs, clicks, mask = _validated(log_probs, clicks, mask)
    with np.errstate(divide="ignore", invalid="ignore"):
        clicked = np.where(clicks > 0, log_probs, 0.0)
        skipped = np.where(clicks > 0, 0.0, logspace.log1mexp(log_probs))
    return np.where(mask, clicked + skipped, 0.0)


class _RankAccumulator(Metric):
    """Sums of per-slot log-likelihoods and slot counts, by rank."""

    argument = "conditional_log_probs"
    per_rank = True

    @property
    def inputs(self):
        return (self.argument, "clicks", "mask")

    def reset(self):
        self.sums = np.zeros(0)
        self.counts = np.zeros(0, dtype=np.int64)

    def _grow(self, width: int):
        if width > len(self.sums):
            self.sums = np.pad(self.sums, (0, width - len(self.sums)))
            self.counts = np.pad(self.counts, (0, width - len(self.counts)))

    def update(self, **kwargs):
        mask = np.asarray(kwargs["mask"], dtype=bool)
        values = click_log_likelihood(kwargs[self.argument], kwargs["clicks"], mask)
        self._grow(mask.shape[1])
        width = mask.shape[1]
        self.sums[:width] += values.sum(axis=0)
        self.counts[:width] += mask.sum(axis=0)

    def merge(self, other: "Metric"):
        self._grow(len(other.sums))
        self.sums[:len(other.sums)] += other.sums
        self.counts[:len(other.counts)] += other.counts

    def _mean(self) -> float:
        total = self.counts.sum()
        if total == 0:
            raise UsageError(f"{self.name}: no observations")
        return float(self.sums.sum() / total)

    def _rank_means(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.sums / np.maximum(self.counts, 1), np.nan)


class LogLikelihood(_RankAccumulator):
    """Mean conditional log-likelihood per observation (natural log)."""

    name = "ll"

    def compute(self) -> float:
        return self._mean()

    def compute_per_rank(self) -> np.ndarray:
        return self._rank_means()


class Perplexity(_RankAccumulator):
    """2 to the negative mean base-2 log-likelihood of unconditional predictions."""

    name = "ppl"
    argument = "log_probs"

    def compute(self) -> float:
        return float(2.0 ** (-self._mean() / LN2))

    def compute_per_rank(self) -> np.ndarray:
        return 2.0 ** (-self._rank_means() / LN2)


class ConditionalPerplexity(Perplexity):
    """Perplexity of predictions conditioned on the clicks above each slot."""

    name = "cond_ppl"
    argument = "conditional_log_probs"


def _ranked_labels(scores: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> List[np.ndarray]:
    """Labels of each session sorted by descending score; ties keep display order."""
    ranked = []
    for row in range(scores.shape[0]):
        valid = mask[row]
        order = np.argsort(-scores[row][valid], kind="stable")
        ranked.append(labels[row][valid][order])
    return ranked


def dcg(labels: np.ndarray, k: int) -> float:
    """Sum of (2^label - 1) / log2(i + 1) over the first k labels."""
    top = np.asarray(labels[:k], dtype=np.float64)
    discounts = np.log2(np.arange(2, top.size + 2))
    return float(np.sum((2.0 ** top - 1.0) / discounts))


class _SessionMean(Metric):
    """Session-averaged ranking metric over the top ``k`` documents."""

    inputs = ("scores", "labels", "mask")
    prefix = ""

    def __init__(self, k: int = 10):
        if k < 1:
            raise UsageError("k must be >= 1")
        self.k = int(k)
        self.name = f"{self.prefix}@{self.k}"
        super().__init__()

    def reset(self):
        self.total = 0.0
        self.sessions = 0

    @abstractmethod
    def session_value(self, labels: np.ndarray) -> float:
        """Metric of one session's labels in ranked order."""

    def update(self, **kwargs):
        labels = kwargs["labels"]
        if labels is None:
            raise UsageError(f"{self.name} needs relevance labels")
        labels = np.asarray(labels)
        if (labels < 0).any():
            raise UsageError("relevance labels must be non-negative")
        mask = np.asarray(kwargs["mask"], dtype=bool)
        for ranked in _ranked_labels(np.asarray(kwargs["scores"], dtype=np.float64), labels,
                                     mask):
            if ranked.size:
                self.total += self.session_value(ranked)
                self.sessions += 1

    def merge(self, other: "Metric"):
        self.total += other.total
        self.sessions += other.sessions

    def compute(self) -> float:
        if self.sessions == 0:
            raise UsageError(f"{self.name}: no sessions")
        return self.total / self.sessions


class DCG(_SessionMean):
    """Discounted cumulative gain with exponential gain."""

    prefix = "dcg"

    def session_value(self, labels: np.ndarray) -> float:
        return dcg(labels, self.k)


class NDCG(_SessionMean):
    """DCG normalised by the ideal ordering; 0 for sessions without relevant documents."""

    prefix = "ndcg"

    def session_value(self, labels: np.ndarray) -> float:
        ideal = dcg(np.sort(labels)[::-1], self.k)
        return dcg(labels, self.k) / ideal if ideal > 0 else 0.0


class MRR(_SessionMean):
    """Reciprocal rank of the first relevant document in the top k."""

    prefix = "mrr"

    def session_value(self, labels: np.ndarray) -> float:
        hits = np.flatnonzero(labels[:self.k] > 0)
        return 1.0 / (hits[0] + 1) if hits.size else 0.0


class AveragePrecision(_SessionMean):
    """Mean precision at each relevant position within the top k."""

    prefix = "ap"

    def session_value(self, labels: np.ndarray) -> float:
        relevant = labels[:self.k] > 0
        if not relevant.any():
            return 0.0
        precision = np.cumsum(relevant) / np.arange(1, relevant.size + 1)
        return float(precision[relevant].mean())


class MultiMetric:
    """
    A named collection of metrics fed by one call.

    ``update`` takes every available input as a keyword; each metric reads
    only the ones it declared.
    """

    def __init__(self, metrics: Sequence[Metric]):
        self.metrics: Dict[str, Metric] = {}
        for metric in metrics:
            if metric.name in self.metrics:
                raise UsageError(f"duplicate metric {metric.name}")
            self.metrics[metric.name] = metric

    def __getitem__(self, name: str) -> Metric:
        return self.metrics[name]

    def __iter__(self):
        return iter(self.metrics.values())

    def reset(self):
        """Reset every metric."""
        for metric in self:
            metric.reset()

    def update(self, **inputs):
        """Route inputs to each metric by the argument names it declares."""
        for metric in self:
            missing = [name for name in metric.inputs if name not in inputs]
            if missing:
                raise UsageError(f"{metric.name} needs {', '.join(missing)}")
            metric.update(**{name: inputs[name] for name in metric.inputs})

    def merge(self, other: "MultiMetric"):
        """Merge accumulators metric by metric."""
        for name, metric in self.metrics.items():
            metric.merge(other[name])

    def compute(self) -> Dict[str, float]:
        """Global value of every metric."""
        return {name: metric.compute() for name, metric in self.metrics.items()}

    def compute_per_rank(self) -> Dict[str, np.ndarray]:
        """Per-rank vectors of the metrics that have one."""
        return {name: metric.compute_per_rank()
                for name, metric in self.metrics.items() if metric.per_rank}

    def to_frame(self) -> pd.DataFrame:
        """Report rows ``metric,rank,value`` with rank ``all`` for global values."""
        rows = [{"metric": name, "rank": "all", "value": value}
                for name, value in self.compute().items()]
        for name, values in self.compute_per_rank().items():
            rows += [{"metric": name, "rank": str(rank), "value": value}
                     for rank, value in enumerate(values, start=1)]
        return pd.DataFrame(rows, columns=["metric", "rank", "value"])


def click_metrics() -> List[Metric]:
    """Log-likelihood plus unconditional and conditional perplexity."""
    return [LogLikelihood(), Perplexity(), ConditionalPerplexity()]


def ranking_metrics(k: int = 10) -> List[Metric]:
    """DCG, NDCG, MRR and AP at cutoff ``k``."""
    return [DCG(k), NDCG(k), MRR(k), AveragePrecision(k)]


def default_metrics(with_labels: bool = False, k: int = 10) -> MultiMetric:
    """Click metrics, plus ranking metrics when relevance labels exist."""
    metrics = click_metrics()
    if with_labels:
        metrics += ranking_metrics(k)
    return MultiMetric(metrics)


def write_report(report: MultiMetric, path, extra: Optional[pd.DataFrame] = None) -> Path:
    """Write a metric report CSV (``metric,rank,value``)."""
    path = Path(path)
    frame = report.to_frame()
    if extra is not None:
        frame = pd.concat([frame, extra], ignore_index=True)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    logger.info("Wrote %d metric rows to %s", len(frame), path)
    return path
