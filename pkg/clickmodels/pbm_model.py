"""Position-based model."""
from typing import List

import numpy as np

from .autodiff import Tape
from .base import ClickModel, ModelKind, SampleOutput, bernoulli, require
from .data import SessionBatch
from .parameters import ParameterProvider, PositionTable


class PositionBasedModel(ClickModel):
    """
    A click needs examination of rank k (theta_k) and an attractive document
    (gamma_d); both are independent of the other slots.
    """

    kind = ModelKind.PBM

    def __init__(self, examination: PositionTable, attraction: ParameterProvider, **kwargs):
        super().__init__(**kwargs)
        self.examination = require(examination, "examination", self.kind)
        self.attraction = require(attraction, "attraction", self.kind)

    def log_click_nodes(self, tape: Tape, batch: SessionBatch, conditional: bool) -> List[int]:
        nodes = []
        for column in range(batch.max_positions):
            log_theta = tape.log_sigmoid(self.examination.logit(tape, batch, column))
            log_gamma = tape.log_sigmoid(self.attraction.logit(tape, batch, column))
            nodes.append(tape.add(log_theta, log_gamma))
        return nodes

    def _rollout(self, batch: SessionBatch, rng: np.random.Generator) -> SampleOutput:
        tape = Tape()
        examined, attracted = [], []
        for column in range(batch.max_positions):
            theta = self.probabilities(tape, self.examination.logit(tape, batch, column), batch)
            gamma = self.probabilities(tape, self.attraction.logit(tape, batch, column), batch)
            examined.append(bernoulli(rng, theta))
            attracted.append(bernoulli(rng, gamma))
        examined = np.stack(examined, axis=1)
        attracted = np.stack(attracted, axis=1)
        return SampleOutput(examined * attracted, examined, attracted, np.zeros_like(examined))
