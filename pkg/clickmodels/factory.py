"""Build click models and their parameter tables from a run configuration."""
from typing import Dict, Optional, Type

import numpy as np

from . import logspace
from .base import BaseClickModel, ClickModel, ModelKind
from .ccm_model import ClickChainModel
from .cm_model import CascadeModel
from .config import FeatureMode, RunConfig
from .ctr_models import DocumentCTRModel, GlobalCTRModel, RankCTRModel
from .data import SessionDataset
from .dbn_model import DynamicBayesianNetwork, SimplifiedDBN
from .dcm_model import DependentClickModel
from .errors import ConfigurationError
from .mixture_model import MixtureModel
from .parameters import (CompressionConfig, EmbeddingTable, LinearModel, ParameterStore,
                         PositionTable, ScalarParam)
from .pbm_model import PositionBasedModel
from .ubm_model import UserBrowsingModel

MODEL_CLASSES: Dict[ModelKind, Type[ClickModel]] = {
    ModelKind.GCTR: GlobalCTRModel,
    ModelKind.RCTR: RankCTRModel,
    ModelKind.DCTR: DocumentCTRModel,
    ModelKind.PBM: PositionBasedModel,
    ModelKind.CM: CascadeModel,
    ModelKind.UBM: UserBrowsingModel,
    ModelKind.DCM: DependentClickModel,
    ModelKind.CCM: ClickChainModel,
    ModelKind.DBN: DynamicBayesianNetwork,
    ModelKind.SDBN: SimplifiedDBN,
}

# parameter roles each kind reads
ROLES = {
    ModelKind.GCTR: ("rho",),
    ModelKind.RCTR: ("examination",),
    ModelKind.DCTR: ("attraction",),
    ModelKind.PBM: ("examination", "attraction"),
    ModelKind.CM: ("attraction",),
    ModelKind.UBM: ("examination", "attraction"),
    ModelKind.DCM: ("attraction", "continuation"),
    ModelKind.CCM: ("attraction", "tau1", "tau2", "tau3"),
    ModelKind.DBN: ("attraction", "satisfaction", "continuation"),
    ModelKind.SDBN: ("attraction", "satisfaction"),
}


def infer_table_size(*datasets: SessionDataset) -> int:
    """One more than the largest query-document id in the data."""
    largest = -1
    for dataset in datasets:
        for session in dataset:
            if len(session):
                largest = max(largest, int(session.query_doc_ids.max()))
    if largest < 0:
        raise ConfigurationError("cannot infer table_size from empty data")
    return largest + 1


class ModelBuilder:
    """Creates providers for one model, naming tables ``{prefix}{role}``."""

    def __init__(self, config: RunConfig, store: ParameterStore, table_size: Optional[int]):
        self.config = config
        self.store = store
        self.table_size = table_size
        self.init = logspace.logit(config.init_prob)
        self.compression = CompressionConfig(
            mode=config.compression,
            ratio=config.compression_ratio,
            remainder_size=config.remainder_size,
            seed=config.hash_seed,
        )

    def _embedding(self, name: str, size: Optional[int]):
        if size is None:
            return None
        return EmbeddingTable(self.store, name, size, self.init, baseline=self.config.baseline,
                              compression=self.compression)

    def _linear(self, name: str, columns) -> LinearModel:
        return LinearModel(self.store, name, self.config.feature_dim, self.init, columns=columns)

    def provider(self, kind: ModelKind, role: str, name: str):
        """Provider for ``role`` of ``kind`` stored under ``name``."""
        config = self.config
        if role == "attraction":
            if config.feature_mode == FeatureMode.FEATURES:
                return self._linear(name, config.attraction_features)
            return self._embedding(name, self.table_size)
        if role == "satisfaction":
            if config.satisfaction_feature_mode == FeatureMode.FEATURES:
                return self._linear(name, config.satisfaction_features)
            return self._embedding(name, config.satisfaction_size)
        if role == "examination":
            if config.examination_feature_mode == FeatureMode.FEATURES:
                return self._linear(name, config.examination_features)
            return PositionTable(self.store, name, config.positions, self.init,
                                 last_click=kind == ModelKind.UBM)
        if role == "continuation":
            size = config.positions if kind == ModelKind.DCM else 1
            return ScalarParam(self.store, name, self.init, size=size)
        return ScalarParam(self.store, name, self.init)

    def build(self, kind: ModelKind, prefix: str = "", shared=()) -> ClickModel:
        """Instantiate one click model."""
        bindings = {}
        for role in ROLES[kind]:
            name = role if role in shared else f"{prefix}{role}"
            bindings[role] = self.provider(kind, role, name)
        return MODEL_CLASSES[kind](min_log_prob=self.config.min_log_prob, **bindings)


def build_model(config: RunConfig, store: ParameterStore,
                table_size: Optional[int] = None) -> BaseClickModel:
    """
    Create the configured model and register its tables in ``store``.

    Mixture members get tables prefixed with their kind (``pbm.attraction``)
    unless the role is listed in ``mixture_shared``.

    Args:
        config: Run configuration
        store: Store to register parameter tables in
        table_size: Number of query-document ids; defaults to ``config.table_size``

    Returns:
        BaseClickModel: The model

    Raises:
        ConfigurationError: If a required binding is missing
    """
    builder = ModelBuilder(config, store, table_size or config.table_size)
    if config.model != ModelKind.MIXTURE:
        return builder.build(config.model)

    members = []
    seen: Dict[ModelKind, int] = {}
    for kind in config.mixture_members:
        seen[kind] = seen.get(kind, 0) + 1
        suffix = "" if seen[kind] == 1 else str(seen[kind])
        prefix = f"{kind.value.lower()}{suffix}."
        members.append(builder.build(kind, prefix, config.mixture_shared))
    return MixtureModel(store, members, temperature=config.mixture_temperature)


def randomize_parameters(store: ParameterStore, rng: np.random.Generator, positions: int):
    """
    Draw ground-truth parameters for simulation.

    Probabilities are uniform in [0.05, 0.95]; examination tables decay as
    0.95 / distance from the last click. Linear weights are standard normal.
    Baselines, remainder tables and mixture priors are set to 0.
    """
    for name, table in store.tables.items():
        role = name.rsplit(".", 1)[-1]
        if role in ("baseline", "remainder", "prior"):
            table[:] = 0.0
        elif role == "weights":
            table[:] = rng.normal(size=len(table))
        elif role == "examination":
            if len(table) == positions * positions:
                ranks = np.arange(positions)[:, None] + 1
                last = np.arange(positions)[None, :]
                distance = np.maximum(ranks - last, 1)
                table[:] = logspace.logit(0.95 / distance).ravel()
            else:
                table[:] = logspace.logit(0.95 / np.arange(1, len(table) + 1))
        else:
            table[:] = logspace.logit(rng.uniform(0.05, 0.95, size=len(table)))
