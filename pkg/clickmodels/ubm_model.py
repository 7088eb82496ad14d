"""User browsing model."""
from typing import Dict, List

import numpy as np

from .autodiff import Tape
from .base import (ClickModel, ModelKind, SampleOutput, bernoulli, last_click_rank, plus,
                   require)
from .data import SessionBatch
from .errors import ConfigurationError
from .parameters import ParameterProvider, PositionTable


class UserBrowsingModel(ClickModel):
    """
    Examination depends on the rank k and the rank k' of the last click above
    it (0 when there was none): P(C=1 | d, k, c_<k) = theta_{k,k'} * gamma_d.

    Unconditional predictions marginalise over every possible last click rank.
    """

    kind = ModelKind.UBM

    def __init__(self, examination: PositionTable, attraction: ParameterProvider, **kwargs):
        super().__init__(**kwargs)
        self.examination = require(examination, "examination", self.kind)
        self.attraction = require(attraction, "attraction", self.kind)
        if not getattr(examination, "last_click", False):
            raise ConfigurationError("UBM examination must be a rank x last-click table")

    def log_click_nodes(self, tape: Tape, batch: SessionBatch, conditional: bool) -> List[int]:
        if conditional:
            return self._conditional(tape, batch)
        return self._marginal(tape, batch)

    def _conditional(self, tape: Tape, batch: SessionBatch) -> List[int]:
        nodes = []
        for column in range(batch.max_positions):
            last = last_click_rank(batch, column)
            log_theta = tape.log_sigmoid(self.examination.logit(tape, batch, column, last))
            log_gamma = tape.log_sigmoid(self.attraction.logit(tape, batch, column))
            nodes.append(tape.add(log_theta, log_gamma))
        return nodes

    def _marginal(self, tape: Tape, batch: SessionBatch) -> List[int]:
        log_clicks: List[int] = []
        # no_click[i]: log P(no click on ranks i+1..k-1 | last click at i)
        no_click: Dict[int, int] = {0: None}
        for column in range(batch.max_positions):
            rank = column + 1
            log_gamma = tape.log_sigmoid(self.attraction.logit(tape, batch, column))
            paths = []
            for last in range(rank):
                log_theta = tape.log_sigmoid(self.examination.logit(tape, batch, column, last))
                click_here = tape.add(log_theta, log_gamma)
                reached = log_clicks[last - 1] if last > 0 else None
                paths.append(plus(tape, reached, no_click[last], click_here))
                no_click[last] = plus(tape, no_click[last], tape.log1mexp(click_here))
            log_clicks.append(paths[0] if len(paths) == 1 else tape.log_sum_exp(*paths))
            no_click[rank] = None
        return log_clicks

    def _rollout(self, batch: SessionBatch, rng: np.random.Generator) -> SampleOutput:
        tape = Tape()
        last = np.zeros(batch.batch_size, dtype=np.int64)
        examined, attracted, clicks = [], [], []
        for column in range(batch.max_positions):
            theta = self.probabilities(
                tape, self.examination.logit(tape, batch, column, last), batch)
            gamma = self.probabilities(tape, self.attraction.logit(tape, batch, column), batch)
            examination = bernoulli(rng, theta)
            attractive = bernoulli(rng, gamma)
            click = examination * attractive * batch.mask[:, column]
            last = np.where(click > 0, column + 1, last)
            examined.append(examination)
            attracted.append(attractive)
            clicks.append(click.astype(np.int8))
        clicks = np.stack(clicks, axis=1)
        return SampleOutput(clicks, np.stack(examined, axis=1), np.stack(attracted, axis=1),
                            np.zeros_like(clicks))
