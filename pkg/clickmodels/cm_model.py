"""Cascade model."""
from typing import List

import numpy as np

from .autodiff import Tape
from .base import ClickModel, ModelKind, SampleOutput, bernoulli, plus, prior_clicks, require
from .data import SessionBatch
from .parameters import ParameterProvider


class CascadeModel(ClickModel):
    """
    Users scan top-down and click the first attractive document, then stop.

    After a click every later slot gets ``min_log_prob`` in conditional
    predictions.
    """

    kind = ModelKind.CM

    def __init__(self, attraction: ParameterProvider, **kwargs):
        super().__init__(**kwargs)
        self.attraction = require(attraction, "attraction", self.kind)

    def log_click_nodes(self, tape: Tape, batch: SessionBatch, conditional: bool) -> List[int]:
        nodes = []
        skipped = None
        for column in range(batch.max_positions):
            logit = self.attraction.logit(tape, batch, column)
            log_gamma = tape.log_sigmoid(logit)
            if conditional:
                clicked_before = prior_clicks(batch, column)
                floor = tape.constant(np.where(clicked_before > 0, self.min_log_prob, 0.0))
                nodes.append(tape.add(tape.scale(log_gamma, 1.0 - clicked_before), floor))
            else:
                nodes.append(plus(tape, log_gamma, skipped))
                skipped = plus(tape, skipped, tape.log1m_sigmoid(logit))
        return nodes

    def _rollout(self, batch: SessionBatch, rng: np.random.Generator) -> SampleOutput:
        tape = Tape()
        examining = np.ones(batch.batch_size, dtype=np.int8)
        examined, attracted, clicks = [], [], []
        for column in range(batch.max_positions):
            gamma = self.probabilities(tape, self.attraction.logit(tape, batch, column), batch)
            attractive = bernoulli(rng, gamma)
            click = examining * attractive
            examined.append(examining.copy())
            attracted.append(attractive)
            clicks.append(click)
            examining = examining * (1 - click)
        clicks = np.stack(clicks, axis=1)
        return SampleOutput(clicks, np.stack(examined, axis=1), np.stack(attracted, axis=1),
                            np.zeros_like(clicks))
