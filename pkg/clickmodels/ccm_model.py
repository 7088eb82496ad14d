"""Click chain model."""
from typing import List

import numpy as np

from .autodiff import Tape
from .base import ClickModel, ModelKind, SampleOutput, bernoulli, plus, require, select
from .data import SessionBatch
from .parameters import ParameterProvider, ScalarParam


class ClickChainModel(ClickModel):
    """
    Three continuation probabilities: tau1 after a skip, tau2 after a click
    that did not satisfy, tau3 after a satisfying click. Satisfaction after a
    click has the document's attractiveness gamma_d as its probability.
    """

    kind = ModelKind.CCM

    def __init__(self, attraction: ParameterProvider, tau1: ScalarParam, tau2: ScalarParam,
                 tau3: ScalarParam, **kwargs):
        super().__init__(**kwargs)
        self.attraction = require(attraction, "attraction", self.kind)
        self.tau1 = require(tau1, "tau1", self.kind)
        self.tau2 = require(tau2, "tau2", self.kind)
        self.tau3 = require(tau3, "tau3", self.kind)

    def log_click_nodes(self, tape: Tape, batch: SessionBatch, conditional: bool) -> List[int]:
        log_tau1 = tape.log_sigmoid(self.tau1.scalar(tape))
        log_tau2 = tape.log_sigmoid(self.tau2.scalar(tape))
        log_tau3 = tape.log_sigmoid(self.tau3.scalar(tape))
        nodes = []
        log_eps = None
        for column in range(batch.max_positions):
            logit = self.attraction.logit(tape, batch, column)
            log_gamma = tape.log_sigmoid(logit)
            log_skip = tape.log1m_sigmoid(logit)
            log_click = plus(tape, log_gamma, log_eps)
            nodes.append(log_click)

            if conditional:
                after_click = tape.log_sum_exp(tape.add(log_gamma, log_tau3),
                                               tape.add(log_skip, log_tau2))
                after_skip = plus(tape, log_skip, log_eps, log_tau1,
                                  tape.negate(tape.log1mexp(log_click)))
                log_eps = select(tape, after_click, after_skip, batch.clicks[:, column])
            else:
                step = tape.log_sum_exp(
                    tape.add(log_gamma, log_skip, log_tau2),
                    tape.add(log_gamma, log_gamma, log_tau3),
                    tape.add(log_skip, log_tau1),
                )
                log_eps = plus(tape, log_eps, step)
        return nodes

    def _rollout(self, batch: SessionBatch, rng: np.random.Generator) -> SampleOutput:
        tape = Tape()
        tau1 = self.probabilities(tape, self.tau1.scalar(tape), batch)
        tau2 = self.probabilities(tape, self.tau2.scalar(tape), batch)
        tau3 = self.probabilities(tape, self.tau3.scalar(tape), batch)
        examining = np.ones(batch.batch_size, dtype=np.int8)
        examined, attracted, satisfied, clicks = [], [], [], []
        for column in range(batch.max_positions):
            gamma = self.probabilities(tape, self.attraction.logit(tape, batch, column), batch)
            attractive = bernoulli(rng, gamma)
            click = examining * attractive
            satisfaction = click * bernoulli(rng, gamma)
            after_click = np.where(satisfaction > 0, tau3, tau2)
            proceed = bernoulli(rng, np.where(click > 0, after_click, tau1))
            examined.append(examining.copy())
            attracted.append(attractive)
            satisfied.append(satisfaction)
            clicks.append(click)
            examining = examining * proceed
        clicks = np.stack(clicks, axis=1)
        return SampleOutput(clicks, np.stack(examined, axis=1), np.stack(attracted, axis=1),
                            np.stack(satisfied, axis=1))
