"""
Parameter providers mapping batch fields to logits.

All click-model parameters are Bernoulli logits stored in a ``ParameterStore``.
Providers gather the rows a batch needs as tape leaves, so gradients flow back
into exactly the referenced rows.
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .autodiff import Tape
from .data import SessionBatch, to_ids
from .errors import UsageError
from .logger import get_logger

logger = get_logger(__name__)

FNV_OFFSET_BASIS = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1


def hash_index(ids, physical_rows: int, seed: int = 0):
    """
    Map ids onto ``physical_rows`` rows with 64-bit FNV-1a.

    The hash runs over the 8 little-endian bytes of ``id XOR seed``.

    Args:
        ids: Non-negative 64-bit id or array of ids
        physical_rows: Number of rows to map onto, >= 1
        seed: 64-bit hash seed

    Returns:
        int or np.ndarray: Row index in [0, physical_rows)
    """
    if physical_rows < 1:
        raise UsageError("physical_rows must be >= 1")
    scalar = np.ndim(ids) == 0
    keys = np.atleast_1d(to_ids(ids))
    keys ^= np.uint64(seed & _MASK64)
    digest = np.full(keys.shape, FNV_OFFSET_BASIS, dtype=np.uint64)
    prime = np.uint64(FNV_PRIME)
    for shift in range(0, 64, 8):
        octet = (keys >> np.uint64(shift)) & np.uint64(0xFF)
        digest = (digest ^ octet) * prime
    rows = (digest % np.uint64(physical_rows)).astype(np.int64)
    return int(rows[0]) if scalar else rows


class ParameterStore:
    """
    Named float64 tables of logits plus their gradients.

    Tables are registered once by name; registering a name again returns the
    existing table, which is how models share parameters.
    """

    def __init__(self):
        self.tables: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.touched: Dict[str, np.ndarray] = {}
        self.frozen: set = set()

    def __contains__(self, name: str) -> bool:
        return name in self.tables

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tables[name]

    def add_table(self, name: str, size: int, init: float = 0.0, frozen: bool = False) -> str:
        """Register a table of ``size`` logits initialised to ``init``."""
        if name in self.tables:
            if len(self.tables[name]) != size:
                raise UsageError(f"table {name} already registered with size "
                                 f"{len(self.tables[name])}, not {size}")
            return name
        if size < 1:
            raise UsageError(f"table {name} needs at least one row")
        self.tables[name] = np.full(int(size), float(init), dtype=np.float64)
        if frozen:
            self.frozen.add(name)
        return name

    def zero_grad(self):
        """Clear accumulated gradients."""
        self.grads = {}
        self.touched = {}

    def accumulate(self, tape: Tape, leaf_grads: Dict[int, np.ndarray]):
        """
        Scatter-add leaf gradients from a tape into the tables they gathered.

        Args:
            tape: Tape the gradients were computed on
            leaf_grads: Output of ``Tape.backward``
        """
        for leaf_id, ref in tape.leaves().items():
            if ref.table in self.frozen:
                continue
            grad = self.grads.setdefault(ref.table, np.zeros_like(self.tables[ref.table]))
            touched = self.touched.setdefault(ref.table, np.zeros(len(grad), dtype=bool))
            values = np.broadcast_to(leaf_grads[leaf_id], ref.index.shape)
            if ref.valid is not None:
                values = values[ref.valid]
            rows = ref.rows()
            np.add.at(grad, rows, np.ravel(values))
            touched[rows] = True

    def snapshot(self) -> Dict[str, np.ndarray]:
        """Copy of all tables."""
        return {name: table.copy() for name, table in self.tables.items()}

    def restore(self, snapshot: Dict[str, np.ndarray]):
        """Overwrite tables from a snapshot."""
        for name, table in snapshot.items():
            self.tables[name][:] = table

    def to_frame(self) -> pd.DataFrame:
        """Long table,row,value frame of every parameter."""
        frames = [
            pd.DataFrame({"table": name, "row": np.arange(len(table)), "value": table})
            for name, table in self.tables.items()
        ]
        return pd.concat(frames, ignore_index=True)

    def dump(self, path) -> Path:
        """Write all parameters as CSV with 17 significant digits."""
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        logger.info("Wrote %d parameter tables to %s", len(self.tables), path)
        return path

    def load(self, path, strict: bool = True):
        """
        Restore parameters from a dump.

        Args:
            path: CSV written by ``dump``
            strict: Reject tables that are not registered in this store
        """
        frame = pd.read_csv(path, float_precision="round_trip")
        for name, group in frame.groupby("table", sort=False):
            if name not in self.tables:
                if strict:
                    raise UsageError(f"unknown parameter table {name}")
                continue
            rows = group["row"].to_numpy()
            if rows.max(initial=-1) >= len(self.tables[name]):
                raise UsageError(f"row out of range for table {name}")
            self.tables[name][rows] = group["value"].to_numpy(np.float64)


class ParameterProvider(ABC):
    """Produces one logit per session for a given slot column of a batch."""

    @abstractmethod
    def logit(self, tape: Tape, batch: SessionBatch, column: int) -> int:
        """
        Record the logit for slot ``column`` of every session.

        Args:
            tape: Tape to record on
            batch: Current batch
            column: Zero-based slot index

        Returns:
            int: Node id of a (batch_size,) logit vector
        """

    @abstractmethod
    def tables(self) -> List[str]:
        """Names of the store tables this provider reads."""


class Compression(str, Enum):
    """Embedding compression schemes."""
    NONE = "none"
    HASHING = "hashing"
    QUOTIENT_REMAINDER = "quotient_remainder"


@dataclass(frozen=True)
class CompressionConfig:
    """How an embedding table maps ids to physical rows."""
    mode: Compression = Compression.NONE
    ratio: float = 10.0
    remainder_size: int = 1000
    seed: int = 0


class EmbeddingTable(ParameterProvider):
    """
    One logit per id, optionally compressed and baseline-corrected.

    With a baseline the logit is ``baseline + offset[row]``: offsets start at
    zero and the shared baseline starts at the init logit.
    """

    def __init__(self, store: ParameterStore, name: str, size: int, init: float,
                 baseline: bool = False, compression: CompressionConfig = CompressionConfig(),
                 feature: str = "query_doc_ids"):
        if size < 1:
            raise UsageError(f"embedding {name} needs size >= 1")
        self.store = store
        self.name = name
        self.size = int(size)
        self.baseline = baseline
        self.compression = compression
        self.feature = feature
        row_init = 0.0 if baseline else init

        if baseline:
            store.add_table(f"{name}.baseline", 1, init)
        if compression.mode == Compression.HASHING:
            if compression.ratio <= 0:
                raise UsageError("compression ratio must be positive")
            self.physical_rows = math.ceil(self.size / compression.ratio)
            store.add_table(name, self.physical_rows, row_init)
        elif compression.mode == Compression.QUOTIENT_REMAINDER:
            remainder = int(compression.remainder_size)
            if remainder < 1:
                raise UsageError("remainder_size must be >= 1")
            self.physical_rows = math.ceil(self.size / remainder) + remainder
            store.add_table(f"{name}.quotient", math.ceil(self.size / remainder), row_init)
            store.add_table(f"{name}.remainder", remainder, 0.0)
        else:
            self.physical_rows = self.size
            store.add_table(name, self.size, row_init)

    def tables(self) -> List[str]:
        names = []
        if self.baseline:
            names.append(f"{self.name}.baseline")
        if self.compression.mode == Compression.QUOTIENT_REMAINDER:
            names += [f"{self.name}.quotient", f"{self.name}.remainder"]
        else:
            names.append(self.name)
        return names

    def _check_range(self, ids: np.ndarray, valid: np.ndarray):
        used = ids[valid]
        if used.size and (used.min() < 0 or used.max() >= self.size):
            raise UsageError(f"id out of range for embedding {self.name} (size {self.size})")

    def qr_lookup(self, tape: Tape, ids, valid=None) -> int:
        """Record quotient_table[id // r] + remainder_table[id % r]."""
        ids = np.asarray(ids)
        valid = np.ones(ids.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
        self._check_range(ids, valid)
        remainder = np.uint64(self.compression.remainder_size)
        safe = to_ids(np.where(valid, ids, 0))
        quotient_name = f"{self.name}.quotient"
        remainder_name = f"{self.name}.remainder"
        quotient = tape.leaf(quotient_name, self.store[quotient_name], safe // remainder, valid)
        rest = tape.leaf(remainder_name, self.store[remainder_name], safe % remainder, valid)
        return tape.add(quotient, rest)

    def lookup_logit(self, tape: Tape, ids, valid=None) -> int:
        """
        Record the logit for each id.

        Args:
            tape: Tape to record on
            ids: Integer id array
            valid: Boolean array of slots that are not padding

        Returns:
            int: Node id of the logits
        """
        ids = np.asarray(ids)
        valid = np.ones(ids.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
        if self.compression.mode == Compression.QUOTIENT_REMAINDER:
            node = self.qr_lookup(tape, ids, valid)
        else:
            if self.compression.mode == Compression.HASHING:
                if ids.dtype.kind != "u" and (ids[valid] < 0).any():
                    raise UsageError(f"negative id for embedding {self.name}")
                rows = hash_index(np.where(valid, ids, 0), self.physical_rows,
                                  self.compression.seed)
            else:
                self._check_range(ids, valid)
                rows = to_ids(np.where(valid, ids, 0)).astype(np.int64)
            node = tape.leaf(self.name, self.store[self.name], rows, valid)
        if self.baseline:
            baseline_name = f"{self.name}.baseline"
            baseline = tape.leaf(baseline_name, self.store[baseline_name], 0)
            node = tape.add(baseline, node)
        return node

    def logit(self, tape: Tape, batch: SessionBatch, column: int) -> int:
        ids = getattr(batch, self.feature)[:, column]
        return self.lookup_logit(tape, ids, batch.mask[:, column])


class PositionTable(ParameterProvider):
    """
    Rank-indexed logits, or rank x last-click-rank logits for the UBM.

    The last-click index 0 means no click so far; entry (k, i) is only read
    for i < k.
    """

    def __init__(self, store: ParameterStore, name: str, positions: int, init: float,
                 last_click: bool = False):
        if positions < 1:
            raise UsageError("positions must be >= 1")
        self.store = store
        self.name = name
        self.positions = int(positions)
        self.last_click = last_click
        size = self.positions * self.positions if last_click else self.positions
        store.add_table(name, size, init)

    def tables(self) -> List[str]:
        return [self.name]

    def _rank_rows(self, batch: SessionBatch, column: int):
        ranks = batch.positions[:, column]
        valid = batch.mask[:, column]
        if (ranks[valid] > self.positions).any():
            raise UsageError(f"rank exceeds {self.name} size {self.positions}")
        return np.where(valid, ranks - 1, 0), valid

    def logit(self, tape: Tape, batch: SessionBatch, column: int, last_click=None) -> int:
        """
        Record the examination logit at ``column``.

        Args:
            tape: Tape to record on
            batch: Current batch
            column: Zero-based slot index
            last_click: For last-click tables, rank of the last click before
                this slot per session (0 for none); int or array
        """
        rows, valid = self._rank_rows(batch, column)
        if self.last_click:
            if last_click is None:
                raise UsageError(f"{self.name} needs the last clicked rank")
            last = np.broadcast_to(np.asarray(last_click, dtype=np.int64), rows.shape)
            rows = rows * self.positions + np.where(valid, last, 0)
        return tape.leaf(self.name, self.store[self.name], rows, valid)


class ScalarParam(ParameterProvider):
    """
    A free Bernoulli logit, or a small vector of them indexed by rank.

    Frozen parameters never receive optimizer updates.
    """

    def __init__(self, store: ParameterStore, name: str, init: float, size: int = 1,
                 frozen: bool = False):
        self.store = store
        self.name = name
        self.size = int(size)
        store.add_table(name, self.size, init, frozen=frozen)

    def tables(self) -> List[str]:
        return [self.name]

    def scalar(self, tape: Tape, index: int = 0) -> int:
        """Record a single entry as a scalar leaf."""
        return tape.leaf(self.name, self.store[self.name], index)

    def logit(self, tape: Tape, batch: SessionBatch, column: int) -> int:
        if self.size == 1:
            return self.scalar(tape)
        ranks = batch.positions[:, column]
        valid = batch.mask[:, column]
        rows = np.clip(np.where(valid, ranks - 1, 0), 0, self.size - 1)
        return tape.leaf(self.name, self.store[self.name], rows, valid)


class LinearModel(ParameterProvider):
    """
    Logit ``bias + sum_i w_i * f_i`` over per-slot feature vectors.

    ``columns`` picks the features this model reads out of the batch's
    ``input_dim`` wide vectors; by default it reads all of them.
    """

    def __init__(self, store: ParameterStore, name: str, input_dim: int, init: float,
                 columns: Optional[Sequence[int]] = None):
        if input_dim < 1:
            raise UsageError("feature_dim must be >= 1")
        self.input_dim = int(input_dim)
        self.columns = None
        if columns:
            self.columns = np.asarray(columns, dtype=np.int64)
            if self.columns.min() < 0 or self.columns.max() >= self.input_dim:
                raise UsageError(f"feature columns of {name} must be in [0, {self.input_dim})")
        self.store = store
        self.name = name
        self.feature_dim = self.input_dim if self.columns is None else len(self.columns)
        store.add_table(f"{name}.weights", self.feature_dim, 0.0)
        store.add_table(f"{name}.bias", 1, init)

    def tables(self) -> List[str]:
        return [f"{self.name}.bias", f"{self.name}.weights"]

    def logit(self, tape: Tape, batch: SessionBatch, column: int) -> int:
        if batch.features is None:
            raise UsageError(f"{self.name} needs feature vectors in the batch")
        if batch.features.shape[-1] != self.input_dim:
            raise UsageError(f"{self.name} expects {self.input_dim} features per slot, "
                             f"got {batch.features.shape[-1]}")
        features = batch.features[:, column, :]
        if self.columns is not None:
            features = features[:, self.columns]
        return linear_logit(self, features, tape)


def linear_logit(model: LinearModel, features, tape: Tape) -> int:
    """
    Record ``bias + sum_i w_i * f_i`` from scale and add nodes.

    Args:
        model: Linear model holding weights and bias
        features: Array of shape (feature_dim,) or (batch, feature_dim)
        tape: Tape to record on

    Returns:
        int: Node id of the logit

    Raises:
        UsageError: If the trailing feature dimension does not match
    """
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != model.feature_dim:
        raise UsageError(f"expected {model.feature_dim} features, got {features.shape[-1]}")
    weights_name = f"{model.name}.weights"
    bias_name = f"{model.name}.bias"
    terms = [tape.leaf(bias_name, model.store[bias_name], 0)]
    for i in range(model.feature_dim):
        weight = tape.leaf(weights_name, model.store[weights_name], i)
        terms.append(tape.scale(weight, features[..., i]))
    return tape.add(*terms)
