"""Base classes for click models."""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

import numpy as np

from .autodiff import Tape
from .data import SessionBatch
from .errors import ConfigurationError, UsageError
from .parameters import ParameterProvider

DEFAULT_MIN_LOG_PROB = math.log(1e-6)


class ModelKind(str, Enum):
    """The supported click models."""
    GCTR = "GCTR"
    RCTR = "RCTR"
    DCTR = "DCTR"
    PBM = "PBM"
    CM = "CM"
    UBM = "UBM"
    DCM = "DCM"
    CCM = "CCM"
    DBN = "DBN"
    SDBN = "SDBN"
    MIXTURE = "MIXTURE"


@dataclass
class SampleOutput:
    """Sampled clicks with the latent variables drawn on the way (sessions x K)."""
    clicks: np.ndarray
    examination: np.ndarray
    attraction: np.ndarray
    satisfaction: np.ndarray
    component: Optional[np.ndarray] = None


class BaseClickModel(ABC):
    """Abstract base class: the five-method click model interface."""

    kind: ModelKind

    @abstractmethod
    def compute_loss(self, batch: SessionBatch, tape: Tape) -> int:
        """
        Record the training loss of a batch.

        Args:
            batch: Batch with observed clicks
            tape: Tape to record on

        Returns:
            int: Node id of the scalar loss
        """

    @abstractmethod
    def predict_clicks(self, batch: SessionBatch) -> np.ndarray:
        """
        Log-probability of a click per slot, ignoring clicks in the session.

        Returns:
            np.ndarray: (batch_size, max_positions), 0 on padding
        """

    @abstractmethod
    def predict_conditional_clicks(self, batch: SessionBatch) -> np.ndarray:
        """
        Log-probability of a click per slot given the clicks above it.

        Returns:
            np.ndarray: (batch_size, max_positions), 0 on padding
        """

    @abstractmethod
    def predict_relevance(self, batch: SessionBatch) -> np.ndarray:
        """
        Ranking score per slot.

        Returns:
            np.ndarray: (batch_size, max_positions), 0 on padding
        """

    @abstractmethod
    def sample(self, batch: SessionBatch, seed: int) -> SampleOutput:
        """
        Simulate clicks for the rankings in a batch.

        Args:
            batch: Batch whose positions, ids and mask define the rankings
            seed: Seed of the random generator

        Returns:
            SampleOutput: Clicks and latent variables, zero on padding
        """

    @abstractmethod
    def tables(self) -> List[str]:
        """Names of the parameter tables the model reads."""

    def get_name(self) -> str:
        """Display name of the model."""
        return self.kind.value


def require(binding, name: str, kind: ModelKind):
    """Raise ConfigurationError when a required parameter provider is missing."""
    if binding is None:
        raise ConfigurationError(f"missing binding: {kind.value} requires {name}")
    return binding


def plus(tape: Tape, *node_ids) -> Optional[int]:
    """Add nodes, skipping ``None`` (an empty log term, i.e. log 1)."""
    present = [n for n in node_ids if n is not None]
    if not present:
        return None
    if len(present) == 1:
        return present[0]
    return tape.add(*present)


def select(tape: Tape, when_one: int, when_zero: int, indicator: np.ndarray) -> int:
    """Pick ``when_one`` where indicator is 1 and ``when_zero`` where it is 0."""
    indicator = np.asarray(indicator, dtype=np.float64)
    return tape.add(tape.scale(when_one, indicator), tape.scale(when_zero, 1.0 - indicator))


def slot_log_likelihood(tape: Tape, log_prob: int, clicks: np.ndarray,
                        mask: np.ndarray) -> int:
    """Record c * log p + (1 - c) * log(1 - p) for one slot column, 0 on padding."""
    weight = mask.astype(np.float64)
    clicked = tape.scale(log_prob, clicks * weight)
    skipped = tape.scale(tape.log1mexp(log_prob), (1.0 - clicks) * weight)
    return tape.add(clicked, skipped)


class ClickModel(BaseClickModel):
    """
    Click model whose predictions are tape programs over log-probabilities.

    Subclasses record one log click probability node per slot column and
    implement a top-down generative rollout.
    """

    def __init__(self, min_log_prob: float = DEFAULT_MIN_LOG_PROB):
        if min_log_prob > 0:
            raise UsageError("min_log_prob must be <= 0")
        self.min_log_prob = float(min_log_prob)
        self.attraction = None

    @abstractmethod
    def log_click_nodes(self, tape: Tape, batch: SessionBatch, conditional: bool) -> List[int]:
        """
        Record the log click probability of every slot column.

        Args:
            tape: Tape to record on
            batch: Current batch; its clicks are the conditioning prefix
            conditional: Condition on clicks above each slot

        Returns:
            List[int]: One node per column, each a scalar or (batch_size,) vector
        """

    @abstractmethod
    def _rollout(self, batch: SessionBatch, rng: np.random.Generator) -> SampleOutput:
        """Draw latents and clicks top-down."""

    def relevance_nodes(self, tape: Tape, batch: SessionBatch) -> Optional[List[int]]:
        """Per-column ranking score nodes; log attractiveness by default."""
        return [tape.log_sigmoid(self.attraction.logit(tape, batch, column))
                for column in range(batch.max_positions)]

    @staticmethod
    def _stack(tape: Tape, batch: SessionBatch, nodes: List[int]) -> np.ndarray:
        columns = [np.broadcast_to(tape.value(n), (batch.batch_size,)) for n in nodes]
        return np.where(batch.mask, np.stack(columns, axis=1), 0.0)

    def predict_clicks(self, batch: SessionBatch) -> np.ndarray:
        tape = Tape()
        return self._stack(tape, batch, self.log_click_nodes(tape, batch, conditional=False))

    def predict_conditional_clicks(self, batch: SessionBatch) -> np.ndarray:
        tape = Tape()
        return self._stack(tape, batch, self.log_click_nodes(tape, batch, conditional=True))

    def predict_relevance(self, batch: SessionBatch) -> np.ndarray:
        tape = Tape()
        nodes = self.relevance_nodes(tape, batch)
        if nodes is None:
            return np.zeros(batch.positions.shape)
        return self._stack(tape, batch, nodes)

    def session_log_likelihood(self, tape: Tape, batch: SessionBatch) -> int:
        """
        Record the conditional log-likelihood of each session.

        Returns:
            int: Node id of a (batch_size,) vector of summed slot log-likelihoods
        """
        nodes = self.log_click_nodes(tape, batch, conditional=True)
        terms = [
            slot_log_likelihood(tape, node, batch.clicks[:, column], batch.mask[:, column])
            for column, node in enumerate(nodes)
        ]
        return tape.add(*terms)

    def compute_loss(self, batch: SessionBatch, tape: Tape) -> int:
        observations = batch.num_observations
        if observations == 0:
            raise UsageError("compute_loss: batch has no observations")
        session_ll = self.session_log_likelihood(tape, batch)
        return tape.scale(tape.sum(session_ll), -1.0 / observations)

    def sample(self, batch: SessionBatch, seed: int) -> SampleOutput:
        output = self._rollout(batch, np.random.default_rng(seed))
        mask = batch.mask
        return SampleOutput(
            clicks=np.where(mask, output.clicks, 0).astype(np.int8),
            examination=np.where(mask, output.examination, 0).astype(np.int8),
            attraction=np.where(mask, output.attraction, 0).astype(np.int8),
            satisfaction=np.where(mask, output.satisfaction, 0).astype(np.int8),
        )

    def tables(self) -> List[str]:
        names = []
        for provider in self.providers():
            for name in provider.tables():
                if name not in names:
                    names.append(name)
        return names

    def providers(self) -> list:
        """Parameter providers the model reads."""
        return [p for p in vars(self).values() if isinstance(p, ParameterProvider)]

    @staticmethod
    def probabilities(tape: Tape, logit: int, batch: SessionBatch) -> np.ndarray:
        """Bernoulli probabilities of a logit node, broadcast to the batch."""
        log_p = tape.value(tape.log_sigmoid(logit))
        return np.broadcast_to(np.exp(log_p), (batch.batch_size,))


def prior_clicks(batch: SessionBatch, column: int) -> np.ndarray:
    """1.0 where the session has a click above ``column``."""
    return (batch.clicks[:, :column].sum(axis=1) > 0).astype(np.float64)


def last_click_rank(batch: SessionBatch, column: int) -> np.ndarray:
    """Rank of the last click above ``column`` per session, 0 when none."""
    if column == 0:
        return np.zeros(batch.batch_size, dtype=np.int64)
    clicked = batch.clicks[:, :column] > 0
    ranks = np.where(clicked, np.arange(1, column + 1), 0)
    return ranks.max(axis=1)


def bernoulli(rng: np.random.Generator, probability: np.ndarray) -> np.ndarray:
    """Draw 0/1 outcomes."""
    return (rng.random(np.shape(probability)) < probability).astype(np.int8)
