"""
Expectation-maximisation for the position-based model.

A probability-space reference optimiser used to cross-check gradient training:
closed-form E and M steps, a marginal log-likelihood trace, and the analytic
gradient of the EM auxiliary function.
"""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .data import SessionDataset
from .errors import NumericalError, UsageError
from .logger import get_logger

logger = get_logger(__name__)

PROB_FLOOR = 1e-9
PROB_CEIL = 1.0 - 1e-9


@dataclass(frozen=True)
class Observations:
    """Flat (rank, document, click) triples; ranks are zero-based."""
    ranks: np.ndarray
    docs: np.ndarray
    clicks: np.ndarray

    def __len__(self) -> int:
        return len(self.clicks)


@dataclass(frozen=True)
class Posteriors:
    """Expected examination and attractiveness of every observation."""
    e_hat: np.ndarray
    a_hat: np.ndarray


@dataclass
class EMResult:
    """Fitted probabilities and the marginal log-likelihood after each iteration."""
    theta: np.ndarray
    gamma: np.ndarray
    trace: List[float] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        """Number of E/M iterations run."""
        return max(len(self.trace) - 1, 0)


def to_observations(dataset: SessionDataset) -> Observations:
    """Flatten a dataset into observation triples."""
    if len(dataset) == 0:
        return Observations(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
    ranks = np.concatenate([s.ranks - 1 for s in dataset])
    docs = np.concatenate([s.query_doc_ids for s in dataset]).astype(np.int64)
    clicks = np.concatenate([s.clicks for s in dataset]).astype(np.float64)
    return Observations(ranks=ranks.astype(np.int64), docs=docs, clicks=clicks)


def _check_probabilities(values: np.ndarray, name: str):
    if ((values < 0) | (values > 1)).any() or np.isnan(values).any():
        raise UsageError(f"{name} must contain probabilities")


def clamp(values: np.ndarray) -> np.ndarray:
    """Keep probabilities inside [1e-9, 1 - 1e-9]."""
    return np.clip(values, PROB_FLOOR, PROB_CEIL)


def e_step(theta: np.ndarray, gamma: np.ndarray, observations: Observations) -> Posteriors:
    """
    Posterior examination and attractiveness per observation.

    Args:
        theta: Examination probability per rank
        gamma: Attractiveness per document
        observations: Observation triples

    Returns:
        Posteriors: 1 for clicked observations, the no-click posteriors otherwise

    Raises:
        UsageError: If a skipped observation has theta * gamma = 1
    """
    theta = np.asarray(theta, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    _check_probabilities(theta, "theta")
    _check_probabilities(gamma, "gamma")
    t = theta[observations.ranks]
    g = gamma[observations.docs]
    c = observations.clicks
    skip = 1.0 - t * g
    if ((skip <= 0) & (c == 0)).any():
        raise UsageError("e_step: degenerate posterior, skipped slot with theta * gamma = 1")
    safe = np.where(skip > 0, skip, 1.0)
    e_hat = c + (1.0 - c) * (1.0 - g) * t / safe
    a_hat = c + (1.0 - c) * (1.0 - t) * g / safe
    return Posteriors(e_hat=e_hat, a_hat=a_hat)


def _group_mean(values: np.ndarray, index: np.ndarray, previous: np.ndarray) -> np.ndarray:
    totals = np.bincount(index, weights=values, minlength=len(previous))
    counts = np.bincount(index, minlength=len(previous))
    with np.errstate(invalid="ignore", divide="ignore"):
        means = totals / counts
    return np.where(counts > 0, means, previous)


def m_step(posteriors: Posteriors, observations: Observations, theta: np.ndarray,
           gamma: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Closed-form maximisation: theta_k and gamma_d are posterior means.

    Ranks and documents without observations keep the values passed in.

    Returns:
        Tuple[np.ndarray, np.ndarray]: New (theta, gamma), unclamped
    """
    new_theta = _group_mean(posteriors.e_hat, observations.ranks, np.asarray(theta, float))
    new_gamma = _group_mean(posteriors.a_hat, observations.docs, np.asarray(gamma, float))
    return new_theta, new_gamma


def marginal_log_likelihood(theta: np.ndarray, gamma: np.ndarray,
                            observations: Observations) -> float:
    """Sum over observations of c log(theta gamma) + (1 - c) log(1 - theta gamma)."""
    p = theta[observations.ranks] * gamma[observations.docs]
    c = observations.clicks
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(c > 0, np.log(p), np.log1p(-p))
    return float(terms.sum())


def run_em(observations: Observations, theta: np.ndarray, gamma: np.ndarray,
           max_iters: int = 100, tol: float = 1e-6) -> EMResult:
    """
    Alternate E and M steps until the log-likelihood gain drops below ``tol``.

    Args:
        observations: Observation triples
        theta: Initial examination probabilities per rank, in (0, 1)
        gamma: Initial attractiveness per document, in (0, 1)
        max_iters: Upper bound on iterations
        tol: Convergence threshold on the absolute log-likelihood change

    Returns:
        EMResult: Final clamped probabilities and the full trace, starting with
        the log-likelihood of the initial parameters

    Raises:
        UsageError: If an initial probability is outside (0, 1)
        NumericalError: If the log-likelihood decreases
    """
    theta = np.asarray(theta, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    for name, values in (("theta", theta), ("gamma", gamma)):
        if ((values <= 0) | (values >= 1)).any():
            raise UsageError(f"run_em: initial {name} must lie in (0, 1)")

    theta, gamma = clamp(theta), clamp(gamma)
    trace = [marginal_log_likelihood(theta, gamma, observations)]
    for iteration in range(1, max_iters + 1):
        posteriors = e_step(theta, gamma, observations)
        theta, gamma = m_step(posteriors, observations, theta, gamma)
        theta, gamma = clamp(theta), clamp(gamma)
        trace.append(marginal_log_likelihood(theta, gamma, observations))
        logger.debug("EM iteration %d: LL %.10f", iteration, trace[-1])

        change = trace[-1] - trace[-2]
        if change < -1e-9 * max(1.0, abs(trace[-2])):
            raise NumericalError(
                f"EM log-likelihood decreased at iteration {iteration}: "
                f"{trace[-2]:.12g} -> {trace[-1]:.12g}")
        if abs(change) < tol:
            break

    logger.info("EM finished after %d iterations, LL %.6f", len(trace) - 1, trace[-1])
    return EMResult(theta=theta, gamma=gamma, trace=trace)


def q_gradient(theta: np.ndarray, gamma: np.ndarray,
               observations: Observations) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradient of the EM auxiliary function at the current parameters.

    Posteriors are taken at (theta, gamma) themselves. In logit coordinates the
    derivative of e log theta + (1 - e) log(1 - theta) is e - theta, so each
    entry is a sum of posterior residuals. This equals the gradient of the
    marginal log-likelihood with respect to the logits.

    Returns:
        Tuple[np.ndarray, np.ndarray]: d/d logit(theta) and d/d logit(gamma)
    """
    posteriors = e_step(theta, gamma, observations)
    theta_residual = posteriors.e_hat - theta[observations.ranks]
    gamma_residual = posteriors.a_hat - gamma[observations.docs]
    grad_theta = np.bincount(observations.ranks, weights=theta_residual, minlength=len(theta))
    grad_gamma = np.bincount(observations.docs, weights=gamma_residual, minlength=len(gamma))
    return grad_theta, grad_gamma
