"""CTR baselines: global, rank-based and document-based click-through rates."""
from typing import List

import numpy as np

from .autodiff import Tape
from .base import ClickModel, ModelKind, SampleOutput, bernoulli, require
from .data import SessionBatch
from .parameters import ParameterProvider, PositionTable, ScalarParam


class GlobalCTRModel(ClickModel):
    """One click probability rho shared by every slot."""

    kind = ModelKind.GCTR

    def __init__(self, rho: ScalarParam, **kwargs):
        super().__init__(**kwargs)
        self.rho = require(rho, "rho", self.kind)

    def log_click_nodes(self, tape: Tape, batch: SessionBatch, conditional: bool) -> List[int]:
        log_rho = tape.log_sigmoid(self.rho.scalar(tape))
        return [log_rho] * batch.max_positions

    def relevance_nodes(self, tape: Tape, batch: SessionBatch):
        return None

    def _rollout(self, batch: SessionBatch, rng: np.random.Generator) -> SampleOutput:
        tape = Tape()
        rho = self.probabilities(tape, self.rho.scalar(tape), batch)
        clicks = np.stack([bernoulli(rng, rho) for _ in range(batch.max_positions)], axis=1)
        ones = np.ones_like(clicks)
        return SampleOutput(clicks, ones, clicks, np.zeros_like(clicks))


class RankCTRModel(ClickModel):
    """Click probability theta_k depends on the rank only."""

    kind = ModelKind.RCTR

    def __init__(self, examination: PositionTable, **kwargs):
        super().__init__(**kwargs)
        self.examination = require(examination, "examination", self.kind)

    def log_click_nodes(self, tape: Tape, batch: SessionBatch, conditional: bool) -> List[int]:
        return [tape.log_sigmoid(self.examination.logit(tape, batch, column))
                for column in range(batch.max_positions)]

    def relevance_nodes(self, tape: Tape, batch: SessionBatch):
        return None

    def _rollout(self, batch: SessionBatch, rng: np.random.Generator) -> SampleOutput:
        tape = Tape()
        examined = np.stack([
            bernoulli(rng, self.probabilities(tape, self.examination.logit(tape, batch, column),
                                              batch))
            for column in range(batch.max_positions)
        ], axis=1)
        return SampleOutput(examined, examined, np.ones_like(examined), np.zeros_like(examined))


class DocumentCTRModel(ClickModel):
    """Click probability gamma_d depends on the document only."""

    kind = ModelKind.DCTR

    def __init__(self, attraction: ParameterProvider, **kwargs):
        super().__init__(**kwargs)
        self.attraction = require(attraction, "attraction", self.kind)

    def log_click_nodes(self, tape: Tape, batch: SessionBatch, conditional: bool) -> List[int]:
        return [tape.log_sigmoid(self.attraction.logit(tape, batch, column))
                for column in range(batch.max_positions)]

    def _rollout(self, batch: SessionBatch, rng: np.random.Generator) -> SampleOutput:
        tape = Tape()
        attracted = np.stack([
            bernoulli(rng, self.probabilities(tape, self.attraction.logit(tape, batch, column),
                                              batch))
            for column in range(batch.max_positions)
        ], axis=1)
        return SampleOutput(attracted, np.ones_like(attracted), attracted,
                            np.zeros_like(attracted))
