"""Dynamic Bayesian network and its simplified variant."""
from typing import List, Optional

import numpy as np

from .autodiff import Tape
from .base import ClickModel, ModelKind, SampleOutput, bernoulli, plus, require, select
from .data import SessionBatch
from .parameters import ParameterProvider, ScalarParam


class DynamicBayesianNetwork(ClickModel):
    """
    Attractiveness gamma_d decides clicks, satisfaction sigma_d decides whether
    a click ends the session; otherwise users continue with probability lambda.
    """

    kind = ModelKind.DBN

    def __init__(self, attraction: ParameterProvider, satisfaction: ParameterProvider,
                 continuation: Optional[ScalarParam], **kwargs):
        super().__init__(**kwargs)
        self.attraction = require(attraction, "attraction", self.kind)
        self.satisfaction = require(satisfaction, "satisfaction", self.kind)
        self.continuation = self._bind_continuation(continuation)

    def _bind_continuation(self, continuation):
        return require(continuation, "continuation", self.kind)

    def _log_lambda(self, tape: Tape) -> Optional[int]:
        return tape.log_sigmoid(self.continuation.scalar(tape))

    def log_click_nodes(self, tape: Tape, batch: SessionBatch, conditional: bool) -> List[int]:
        log_lambda = self._log_lambda(tape)
        nodes = []
        log_eps = None
        for column in range(batch.max_positions):
            attraction = self.attraction.logit(tape, batch, column)
            satisfaction = self.satisfaction.logit(tape, batch, column)
            log_gamma = tape.log_sigmoid(attraction)
            log_click = plus(tape, log_gamma, log_eps)
            nodes.append(log_click)

            if conditional:
                after_click = plus(tape, log_lambda, tape.log1m_sigmoid(satisfaction))
                after_skip = plus(tape, log_lambda, tape.log1m_sigmoid(attraction), log_eps,
                                  tape.negate(tape.log1mexp(log_click)))
                log_eps = select(tape, after_click, after_skip, batch.clicks[:, column])
            else:
                log_sigma = tape.log_sigmoid(satisfaction)
                not_done = tape.log1mexp(tape.add(log_gamma, log_sigma))
                log_eps = plus(tape, log_eps, log_lambda, not_done)
        return nodes

    def relevance_nodes(self, tape: Tape, batch: SessionBatch) -> List[int]:
        return [
            tape.add(tape.log_sigmoid(self.attraction.logit(tape, batch, column)),
                     tape.log_sigmoid(self.satisfaction.logit(tape, batch, column)))
            for column in range(batch.max_positions)
        ]

    def _continue_probability(self, tape: Tape, batch: SessionBatch) -> np.ndarray:
        return self.probabilities(tape, self.continuation.scalar(tape), batch)

    def _rollout(self, batch: SessionBatch, rng: np.random.Generator) -> SampleOutput:
        tape = Tape()
        lam = self._continue_probability(tape, batch)
        examining = np.ones(batch.batch_size, dtype=np.int8)
        examined, attracted, satisfied, clicks = [], [], [], []
        for column in range(batch.max_positions):
            gamma = self.probabilities(tape, self.attraction.logit(tape, batch, column), batch)
            sigma = self.probabilities(tape, self.satisfaction.logit(tape, batch, column), batch)
            attractive = bernoulli(rng, gamma)
            click = examining * attractive
            satisfaction = click * bernoulli(rng, sigma)
            proceed = bernoulli(rng, lam)
            examined.append(examining.copy())
            attracted.append(attractive)
            satisfied.append(satisfaction)
            clicks.append(click)
            examining = examining * (1 - satisfaction) * proceed
        clicks = np.stack(clicks, axis=1)
        return SampleOutput(clicks, np.stack(examined, axis=1), np.stack(attracted, axis=1),
                            np.stack(satisfied, axis=1))


class SimplifiedDBN(DynamicBayesianNetwork):
    """DBN whose users always continue unless satisfied (lambda fixed at 1)."""

    kind = ModelKind.SDBN

    def __init__(self, attraction: ParameterProvider, satisfaction: ParameterProvider,
                 **kwargs):
        super().__init__(attraction, satisfaction, None, **kwargs)

    def _bind_continuation(self, continuation):
        return None

    def _log_lambda(self, tape: Tape) -> Optional[int]:
        return None

    def _continue_probability(self, tape: Tape, batch: SessionBatch) -> np.ndarray:
        return np.ones(batch.batch_size)
