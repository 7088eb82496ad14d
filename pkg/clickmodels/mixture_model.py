"""Mixture of click models trained jointly through a session-level loss."""
from typing import List, Sequence

import numpy as np

from . import logspace
from .autodiff import Tape
from .base import BaseClickModel, ClickModel, ModelKind, SampleOutput
from .data import SessionBatch
from .errors import UsageError
from .parameters import ParameterStore, ScalarParam


class MixtureModel(BaseClickModel):
    """
    Prior-weighted combination of member click models.

    The prior P(m) is a softmax over free logits stored in the table
    ``{name}``. Members may share parameter tables; the mixture loss trains
    priors and members together:

        loss(s) = -log sum_m P(m) * exp(LL_m(s) / temperature)

    where LL_m(s) is the conditional log-likelihood of session s under member m.
    """

    kind = ModelKind.MIXTURE

    def __init__(self, store: ParameterStore, members: Sequence[ClickModel],
                 temperature: float = 1.0, name: str = "mixture.prior"):
        if not members:
            raise UsageError("a mixture needs at least one member")
        if temperature <= 0:
            raise UsageError("temperature must be positive")
        self.members: List[ClickModel] = list(members)
        self.temperature = float(temperature)
        self.prior = ScalarParam(store, name, 0.0, size=len(self.members))

    def get_name(self) -> str:
        return "+".join(member.get_name() for member in self.members)

    def log_prior(self) -> np.ndarray:
        """Normalised log P(m) from the current prior logits."""
        logits = self.prior.store[self.prior.name]
        return logits - logspace.log_sum_exp(logits)

    def _log_prior_nodes(self, tape: Tape) -> List[int]:
        logits = [self.prior.scalar(tape, m) for m in range(len(self.members))]
        norm = tape.log_sum_exp(*logits)
        return [tape.subtract(logit, norm) for logit in logits]

    def compute_loss(self, batch: SessionBatch, tape: Tape) -> int:
        observations = batch.num_observations
        if observations == 0:
            raise UsageError("compute_loss: batch has no observations")
        terms = []
        for log_p, member in zip(self._log_prior_nodes(tape), self.members):
            session_ll = member.session_log_likelihood(tape, batch)
            terms.append(tape.add(log_p, tape.scale(session_ll, 1.0 / self.temperature)))
        mixed = terms[0] if len(terms) == 1 else tape.log_sum_exp(*terms)
        # normalised per observation so a single member at temperature 1 matches its own loss
        return tape.scale(tape.sum(mixed), -1.0 / observations)

    def _weighted(self, log_weights: np.ndarray, member_outputs: np.ndarray,
                  batch: SessionBatch) -> np.ndarray:
        mixed = logspace.log_sum_exp(log_weights + member_outputs, axis=0)
        return np.where(batch.mask, mixed, 0.0)

    def predict_clicks(self, batch: SessionBatch) -> np.ndarray:
        outputs = np.stack([m.predict_clicks(batch) for m in self.members])
        return self._weighted(self.log_prior()[:, None, None], outputs, batch)

    def predict_conditional_clicks(self, batch: SessionBatch) -> np.ndarray:
        outputs = np.stack([m.predict_conditional_clicks(batch) for m in self.members])
        clicks = batch.clicks[None]
        with np.errstate(divide="ignore", invalid="ignore"):
            skipped = logspace.log1mexp(np.minimum(outputs, 0.0))
            slot_ll = clicks * outputs + (1.0 - clicks) * skipped
        # 0 * inf terms are impossible branches and contribute nothing
        slot_ll = np.where(batch.mask[None] & ~np.isnan(slot_ll), slot_ll, 0.0)
        # log-likelihood of the clicks strictly above each slot
        prefix = np.concatenate(
            [np.zeros(slot_ll.shape[:2] + (1,)), np.cumsum(slot_ll, axis=2)[:, :, :-1]], axis=2)
        log_weights = self.log_prior()[:, None, None] + prefix
        norm = logspace.log_sum_exp(log_weights, axis=0)
        unexplained = np.isneginf(norm)
        if unexplained.any():
            # no member explains the prefix: fall back to the prior
            log_weights = np.where(unexplained[None], self.log_prior()[:, None, None],
                                   log_weights)
            norm = logspace.log_sum_exp(log_weights, axis=0)
        return self._weighted(log_weights - norm[None], outputs, batch)

    def predict_relevance(self, batch: SessionBatch) -> np.ndarray:
        outputs = np.stack([m.predict_relevance(batch) for m in self.members])
        return self._weighted(self.log_prior()[:, None, None], outputs, batch)

    def sample(self, batch: SessionBatch, seed: int) -> SampleOutput:
        rng = np.random.default_rng(seed)
        component = rng.choice(len(self.members), size=batch.batch_size,
                               p=np.exp(self.log_prior()))
        draws = [member.sample(batch, int(rng.integers(2**63 - 1)))
                 for member in self.members]

        def pick(field: str) -> np.ndarray:
            stacked = np.stack([getattr(draw, field) for draw in draws])
            return stacked[component, np.arange(batch.batch_size)]

        return SampleOutput(
            clicks=pick("clicks"),
            examination=pick("examination"),
            attraction=pick("attraction"),
            satisfaction=pick("satisfaction"),
            component=component,
        )

    def tables(self) -> List[str]:
        names = []
        for member in self.members:
            for name in member.tables():
                if name not in names:
                    names.append(name)
        names.append(self.prior.name)
        return names
