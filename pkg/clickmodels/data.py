"""Click log ingestion, padded batches and dataset splits."""
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import DataValidationError, UsageError
from .logger import get_logger

logger = get_logger(__name__)

MAX_POSITIONS = 25
REQUIRED_COLUMNS = ("session_id", "rank", "query_doc_id", "click")


@dataclass(frozen=True)
class SessionRecord:
    """One displayed ranking and the clicks it received, top-down."""
    session_id: int
    query_doc_ids: np.ndarray
    clicks: np.ndarray
    features: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    @property
    def ranks(self) -> np.ndarray:
        """Positions 1..K in display order."""
        return np.arange(1, len(self.query_doc_ids) + 1)

    def __len__(self) -> int:
        return len(self.query_doc_ids)


@dataclass
class SessionBatch:
    """Sessions padded to a common width; ``mask`` marks real slots."""
    positions: np.ndarray
    query_doc_ids: np.ndarray
    clicks: np.ndarray
    mask: np.ndarray
    session_ids: np.ndarray
    features: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    @property
    def batch_size(self) -> int:
        """Number of sessions."""
        return self.positions.shape[0]

    @property
    def max_positions(self) -> int:
        """Padded width."""
        return self.positions.shape[1]

    @property
    def num_observations(self) -> int:
        """Number of unmasked slots."""
        return int(self.mask.sum())

    def with_clicks(self, clicks: np.ndarray) -> "SessionBatch":
        """Copy of the batch with clicks replaced (padding stays zero)."""
        return SessionBatch(
            positions=self.positions,
            query_doc_ids=self.query_doc_ids,
            clicks=np.where(self.mask, clicks, 0.0).astype(np.float64),
            mask=self.mask,
            session_ids=self.session_ids,
            features=self.features,
            labels=self.labels,
        )


class SessionDataset:
    """Immutable, ordered collection of sessions."""

    def __init__(self, sessions: Sequence[SessionRecord], feature_dim: int = 0):
        self._sessions: Tuple[SessionRecord, ...] = tuple(sessions)
        self.feature_dim = feature_dim

    def __len__(self) -> int:
        return len(self._sessions)

    def __getitem__(self, index: int) -> SessionRecord:
        return self._sessions[index]

    def __iter__(self) -> Iterator[SessionRecord]:
        return iter(self._sessions)

    @property
    def has_labels(self) -> bool:
        """True when every session carries relevance labels."""
        return bool(self._sessions) and all(s.labels is not None for s in self._sessions)

    @property
    def num_slots(self) -> int:
        """Total number of displayed documents."""
        return sum(len(s) for s in self._sessions)

    def subset(self, indices: Sequence[int]) -> "SessionDataset":
        """Dataset restricted to the given session indices, in that order."""
        return SessionDataset([self._sessions[i] for i in indices], self.feature_dim)

    @classmethod
    def from_arrays(cls, query_doc_ids: np.ndarray, clicks: np.ndarray,
                    mask: Optional[np.ndarray] = None,
                    session_ids: Optional[np.ndarray] = None,
                    features: Optional[np.ndarray] = None) -> "SessionDataset":
        """Build a dataset from (sessions x K) arrays and optional (sessions x K x D) features."""
        query_doc_ids = np.asarray(query_doc_ids)
        features = None if features is None else np.asarray(features, dtype=np.float64)
        clicks = np.asarray(clicks)
        if mask is None:
            mask = np.ones(query_doc_ids.shape, dtype=bool)
        if session_ids is None:
            session_ids = np.arange(query_doc_ids.shape[0])
        sessions = []
        for row, session_id in enumerate(session_ids):
            width = int(mask[row].sum())
            sessions.append(SessionRecord(
                session_id=int(session_id),
                query_doc_ids=to_ids(query_doc_ids[row, :width]),
                clicks=clicks[row, :width].astype(np.int8),
                features=None if features is None else np.array(features[row, :width]),
            ))
        return cls(sessions, feature_dim=0 if features is None else features.shape[-1])


def to_ids(ids) -> np.ndarray:
    """
    Query-document ids as unsigned 64-bit integers.

    Raises:
        UsageError: If any id is negative or not an integer
    """
    ids = np.asarray(ids)
    if ids.size == 0:
        return ids.astype(np.uint64)
    if ids.dtype.kind not in "iuO":
        raise UsageError(f"ids must be integers, got {ids.dtype}")
    if ids.dtype.kind != "u" and (ids < 0).any():
        raise UsageError("ids must be non-negative")
    return ids.astype(np.uint64)


def _feature_columns(columns: Sequence[str]) -> List[str]:
    features = [c for c in columns if c.startswith("f") and c[1:].isdigit()]
    expected = [f"f{i}" for i in range(len(features))]
    if sorted(features, key=lambda c: int(c[1:])) != expected:
        raise DataValidationError(f"feature columns must be f0..f{len(features) - 1}")
    return expected


def load_sessions(path, max_positions: int = MAX_POSITIONS) -> SessionDataset:
    """
    Load a click log CSV (gzip when the name ends in ``.gz``).

    Rows are grouped by session_id in order of first appearance and sorted by
    rank within each session.

    Args:
        path: CSV path or open file with header
            session_id,rank,query_doc_id,click[,label][,f0..]
        max_positions: Largest allowed session length

    Returns:
        SessionDataset: The validated sessions

    Raises:
        DataValidationError: On missing columns, duplicate or missing ranks,
            non-binary clicks or negative ids
    """
    if isinstance(path, str):
        path = Path(path)
    frame = pd.read_csv(path, compression="infer")
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise DataValidationError(f"missing column(s): {', '.join(missing)}")
    feature_columns = _feature_columns(list(frame.columns))
    has_labels = "label" in frame.columns
    if frame.empty:
        logger.warning("No rows in %s", getattr(path, "name", path))
        return SessionDataset([], feature_dim=len(feature_columns))

    # line numbers as seen in the file, header is line 1
    line = np.arange(len(frame)) + 2

    clicks = frame["click"].to_numpy()
    bad = ~np.isin(clicks, (0, 1))
    if bad.any():
        raise DataValidationError("click must be 0 or 1", int(line[bad.argmax()]))
    ids = frame["query_doc_id"].to_numpy()
    if (ids < 0).any():
        raise DataValidationError("query_doc_id must be non-negative",
                                  int(line[(ids < 0).argmax()]))
    if has_labels:
        labels = frame["label"].to_numpy()
        bad = (labels < 0) | (np.mod(labels, 1) != 0)
        if bad.any():
            raise DataValidationError("label must be a non-negative integer",
                                      int(line[bad.argmax()]))
    duplicated = frame.duplicated(["session_id", "rank"]).to_numpy()
    if duplicated.any():
        raise DataValidationError("duplicate (session, rank)", int(line[duplicated.argmax()]))

    codes, uniques = pd.factorize(frame["session_id"])
    ranks = frame["rank"].to_numpy()
    order = np.lexsort((ranks, codes))
    codes = codes[order]
    starts = np.flatnonzero(np.r_[True, codes[1:] != codes[:-1]])
    lengths = np.diff(np.r_[starts, len(codes)])
    expected = np.arange(len(codes)) - np.repeat(starts, lengths) + 1
    gaps = ranks[order] != expected
    if gaps.any():
        first = gaps.argmax()
        raise DataValidationError(
            f"rank gap at session {uniques[codes[first]]}", int(line[order][first]))
    if lengths.max(initial=0) > max_positions:
        raise DataValidationError(f"session longer than max_positions={max_positions}")

    ids = ids[order].astype(np.uint64)
    clicks = clicks[order].astype(np.int8)
    labels = frame["label"].to_numpy()[order].astype(np.int64) if has_labels else None
    features = frame[feature_columns].to_numpy(np.float64)[order] if feature_columns else None

    sessions = []
    for code, start, length in zip(codes[starts], starts, lengths):
        stop = start + length
        sessions.append(SessionRecord(
            session_id=int(uniques[code]),
            query_doc_ids=ids[start:stop],
            clicks=clicks[start:stop],
            features=None if features is None else features[start:stop],
            labels=None if labels is None else labels[start:stop],
        ))
    logger.info("Loaded %d sessions (%d rows) from %s", len(sessions), len(frame),
                getattr(path, "name", path))
    return SessionDataset(sessions, feature_dim=len(feature_columns))


def sessions_to_frame(dataset: SessionDataset) -> pd.DataFrame:
    """Flatten a dataset into one row per displayed document."""
    columns = {"session_id": [], "rank": [], "query_doc_id": [], "click": []}
    labels, features = [], []
    for session in dataset:
        size = len(session)
        columns["session_id"].append(np.full(size, session.session_id, dtype=np.int64))
        columns["rank"].append(session.ranks)
        columns["query_doc_id"].append(session.query_doc_ids)
        columns["click"].append(np.asarray(session.clicks, dtype=np.int64))
        if session.labels is not None:
            labels.append(np.asarray(session.labels, dtype=np.int64))
        if session.features is not None:
            features.append(session.features)
    frame = pd.DataFrame({k: np.concatenate(v) if v else [] for k, v in columns.items()})
    if dataset.has_labels:
        frame["label"] = np.concatenate(labels)
    if features and len(features) == len(dataset):
        stacked = np.concatenate(features)
        for i in range(stacked.shape[1]):
            frame[f"f{i}"] = stacked[:, i]
    return frame


def write_sessions(dataset: SessionDataset, path) -> Path:
    """Write a dataset in the click log CSV format."""
    path = Path(path)
    sessions_to_frame(dataset).to_csv(
        path, index=False, lineterminator="\n", float_format="%.17g", compression="infer")
    logger.info("Wrote %d sessions to %s", len(dataset), path)
    return path


def collate(sessions: Sequence[SessionRecord], feature_dim: int = 0) -> SessionBatch:
    """Pad sessions to the longest one and build the mask."""
    batch_size = len(sessions)
    width = max(len(s) for s in sessions)
    positions = np.zeros((batch_size, width), dtype=np.int64)
    ids = np.zeros((batch_size, width), dtype=np.uint64)
    clicks = np.zeros((batch_size, width), dtype=np.float64)
    mask = np.zeros((batch_size, width), dtype=bool)
    with_labels = all(s.labels is not None for s in sessions)
    labels = np.zeros((batch_size, width), dtype=np.int64) if with_labels else None
    features = None
    if feature_dim and all(s.features is not None for s in sessions):
        features = np.zeros((batch_size, width, feature_dim), dtype=np.float64)

    for row, session in enumerate(sessions):
        size = len(session)
        positions[row, :size] = session.ranks
        ids[row, :size] = session.query_doc_ids
        clicks[row, :size] = session.clicks
        mask[row, :size] = True
        if labels is not None:
            labels[row, :size] = session.labels
        if features is not None:
            features[row, :size] = session.features

    return SessionBatch(
        positions=positions,
        query_doc_ids=ids,
        clicks=clicks,
        mask=mask,
        session_ids=np.array([s.session_id for s in sessions], dtype=np.int64),
        features=features,
        labels=labels,
    )


def batch_iterator(dataset: SessionDataset, batch_size: int, shuffle: bool = False,
                   seed: int = 0) -> Iterator[SessionBatch]:
    """
    Yield padded batches over a dataset.

    Args:
        dataset: Sessions to batch
        batch_size: Sessions per batch (the last batch may be smaller)
        shuffle: Permute session order with a generator seeded by ``seed``
        seed: Seed for the permutation

    Yields:
        SessionBatch: ceil(N / batch_size) batches
    """
    if batch_size < 1:
        raise UsageError("batch_size must be >= 1")
    order = np.arange(len(dataset))
    if shuffle:
        order = np.random.default_rng(seed).permutation(len(dataset))
    for start in range(0, len(dataset), batch_size):
        chunk = [dataset[int(i)] for i in order[start:start + batch_size]]
        yield collate(chunk, dataset.feature_dim)


def num_batches(dataset: SessionDataset, batch_size: int) -> int:
    """Number of batches ``batch_iterator`` yields."""
    return math.ceil(len(dataset) / batch_size)


def split(dataset: SessionDataset, fractions: Tuple[float, float, float],
          seed: int = 0) -> Tuple[SessionDataset, SessionDataset, SessionDataset]:
    """
    Split sessions into disjoint train/validation/test sets.

    Args:
        dataset: Sessions to split
        fractions: (train, val, test), non-negative and summing to 1
        seed: Seed of the session permutation

    Returns:
        Tuple of three datasets

    Raises:
        UsageError: If the fractions are negative or do not sum to 1
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise UsageError("split fractions must be three non-negative numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise UsageError(f"split fractions must sum to 1, got {sum(fractions)}")
    size = len(dataset)
    order = np.random.default_rng(seed).permutation(size)
    cuts = np.rint(np.cumsum(fractions)[:2] * size).astype(int)
    cuts = np.clip(cuts, 0, size)
    return (
        dataset.subset(order[:cuts[0]]),
        dataset.subset(order[cuts[0]:cuts[1]]),
        dataset.subset(order[cuts[1]:]),
    )
