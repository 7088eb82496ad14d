"""Shared test fixtures for the click model toolkit."""
import numpy as np
import pytest

from clickmodels.base import ModelKind
from clickmodels.config import RunConfig
from clickmodels.data import SessionBatch, SessionDataset
from clickmodels.factory import build_model
from clickmodels.logspace import logit
from clickmodels.parameters import ParameterStore


@pytest.fixture
def store():
    """An empty parameter store."""
    return ParameterStore()


@pytest.fixture
def make_batch():
    """Build a SessionBatch from (sessions x K) id and click arrays."""
    def _make(ids, clicks=None, mask=None, labels=None, features=None):
        ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
        clicks = np.zeros(ids.shape) if clicks is None else np.atleast_2d(clicks)
        mask = np.ones(ids.shape, dtype=bool) if mask is None else np.atleast_2d(mask)
        positions = np.where(mask, np.arange(1, ids.shape[1] + 1), 0)
        return SessionBatch(
            positions=positions,
            query_doc_ids=np.where(mask, ids, 0),
            clicks=np.where(mask, clicks, 0).astype(np.float64),
            mask=mask.astype(bool),
            session_ids=np.arange(ids.shape[0]),
            labels=None if labels is None else np.atleast_2d(labels),
            features=None if features is None else np.asarray(features, dtype=np.float64),
        )
    return _make


@pytest.fixture
def set_probs():
    """Write probabilities into a store table as logits."""
    def _set(store, name, probs):
        store.tables[name][:] = logit(np.asarray(probs, dtype=np.float64))
    return _set


@pytest.fixture
def make_model():
    """Build a model of a given kind with its own store."""
    def _make(kind, positions=3, table_size=None, **settings):
        table_size = table_size or positions
        config = RunConfig(model=ModelKind(kind), positions=positions, table_size=table_size,
                           satisfaction_size=table_size, **settings)
        model_store = ParameterStore()
        return build_model(config, model_store), model_store
    return _make


@pytest.fixture
def tiny_dataset():
    """Ten random sessions over six documents with three slots each."""
    rng = np.random.default_rng(7)
    ids = np.stack([rng.permutation(6)[:3] for _ in range(10)])
    clicks = rng.integers(0, 2, size=ids.shape)
    return SessionDataset.from_arrays(ids, clicks)
