"""Dependent click model."""
from typing import List

import numpy as np

from .autodiff import Tape
from .base import ClickModel, ModelKind, SampleOutput, bernoulli, plus, require, select
from .data import SessionBatch
from .parameters import ParameterProvider, ScalarParam


class DependentClickModel(ClickModel):
    """
    Cascade with multiple clicks: after a click at rank k the user continues
    with probability lambda_k, after a skip they always continue.
    """

    kind = ModelKind.DCM

    def __init__(self, attraction: ParameterProvider, continuation: ScalarParam, **kwargs):
        super().__init__(**kwargs)
        self.attraction = require(attraction, "attraction", self.kind)
        self.continuation = require(continuation, "continuation", self.kind)

    def log_click_nodes(self, tape: Tape, batch: SessionBatch, conditional: bool) -> List[int]:
        nodes = []
        log_eps = None
        for column in range(batch.max_positions):
            logit = self.attraction.logit(tape, batch, column)
            log_gamma = tape.log_sigmoid(logit)
            log_skip = tape.log1m_sigmoid(logit)
            log_lambda = tape.log_sigmoid(self.continuation.logit(tape, batch, column))
            log_click = plus(tape, log_gamma, log_eps)
            nodes.append(log_click)

            if conditional:
                # Bayes: P(E_{k+1} | no click) = (1 - gamma) eps / (1 - gamma eps)
                after_skip = plus(tape, log_skip, log_eps, tape.negate(tape.log1mexp(log_click)))
                log_eps = select(tape, log_lambda, after_skip, batch.clicks[:, column])
            else:
                step = tape.log_sum_exp(tape.add(log_gamma, log_lambda), log_skip)
                log_eps = plus(tape, log_eps, step)
        return nodes

    def _rollout(self, batch: SessionBatch, rng: np.random.Generator) -> SampleOutput:
        tape = Tape()
        examining = np.ones(batch.batch_size, dtype=np.int8)
        examined, attracted, clicks = [], [], []
        for column in range(batch.max_positions):
            gamma = self.probabilities(tape, self.attraction.logit(tape, batch, column), batch)
            lam = self.probabilities(tape, self.continuation.logit(tape, batch, column), batch)
            attractive = bernoulli(rng, gamma)
            click = examining * attractive
            proceed = bernoulli(rng, lam)
            examined.append(examining.copy())
            attracted.append(attractive)
            clicks.append(click)
            examining = examining * np.where(click > 0, proceed, 1).astype(np.int8)
        clicks = np.stack(clicks, axis=1)
        return SampleOutput(clicks, np.stack(examined, axis=1), np.stack(attracted, axis=1),
                            np.zeros_like(clicks))
