"""Synthetic click logs sampled from a click model."""
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np
import pandas as pd

from .base import BaseClickModel, SampleOutput
from .data import SessionBatch, SessionDataset, write_sessions
from .errors import UsageError
from .logger import get_logger

logger = get_logger(__name__)


@dataclass
class Simulation:
    """Sampled sessions and the latent draws behind each slot."""
    dataset: SessionDataset
    latents: pd.DataFrame


def ranking_layout(n_sessions: int, n_queries: int, positions: int,
                   seed: int = 0, shuffle: bool = True, feature_dim: int = 0) -> SessionBatch:
    """
    Rankings for simulated sessions.

    Query q owns documents ``q * positions .. q * positions + positions - 1``.
    Every session picks a query uniformly and shows its documents in a random
    order (display order when ``shuffle`` is off). With ``feature_dim`` every
    slot also gets a standard normal feature vector.

    Returns:
        SessionBatch: (n_sessions x positions) rankings with zero clicks
    """
    if n_sessions < 1 or n_queries < 1 or positions < 1:
        raise UsageError("n_sessions, n_queries and positions must be >= 1")
    rng = np.random.default_rng(seed)
    queries = rng.integers(n_queries, size=n_sessions)
    if shuffle:
        offsets = rng.permuted(np.tile(np.arange(positions), (n_sessions, 1)), axis=1)
    else:
        offsets = np.tile(np.arange(positions), (n_sessions, 1))
    shape = (n_sessions, positions)
    features = rng.normal(size=shape + (feature_dim,)) if feature_dim else None
    return SessionBatch(
        positions=np.tile(np.arange(1, positions + 1), (n_sessions, 1)),
        query_doc_ids=queries[:, None] * positions + offsets,
        clicks=np.zeros(shape),
        mask=np.ones(shape, dtype=bool),
        session_ids=np.arange(n_sessions),
        features=features,
    )


def latent_frame(batch: SessionBatch, sample: SampleOutput) -> pd.DataFrame:
    """One row per displayed slot with its sampled latent variables."""
    mask = batch.mask
    frame = pd.DataFrame({
        "session_id": np.broadcast_to(batch.session_ids[:, None], mask.shape)[mask],
        "rank": batch.positions[mask],
        "query_doc_id": batch.query_doc_ids[mask],
        "examination": sample.examination[mask],
        "attraction": sample.attraction[mask],
        "satisfaction": sample.satisfaction[mask],
        "click": sample.clicks[mask],
    })
    if sample.component is not None:
        frame["component"] = np.broadcast_to(sample.component[:, None], mask.shape)[mask]
    return frame


def simulate(model: BaseClickModel, batch: SessionBatch, seed: int = 0) -> Simulation:
    """
    Sample clicks for every ranking in ``batch``.

    Returns:
        Simulation: Sessions in click-log form plus a latent-variable frame
    """
    sample = model.sample(batch, seed)
    dataset = SessionDataset.from_arrays(batch.query_doc_ids, sample.clicks, batch.mask,
                                         batch.session_ids, batch.features)
    logger.info("Simulated %d sessions, CTR %.4f", len(dataset),
                float(sample.clicks[batch.mask].mean()))
    return Simulation(dataset=dataset, latents=latent_frame(batch, sample))


def write_simulation(simulation: Simulation, directory,
                     name: str = "sessions.csv") -> Tuple[Path, Path]:
    """Write the click log and its ``latents.csv`` sidecar."""
    directory = Path(directory)
    sessions = write_sessions(simulation.dataset, directory / name)
    latents = directory / "latents.csv"
    simulation.latents.to_csv(latents, index=False, lineterminator="\n")
    return sessions, latents
