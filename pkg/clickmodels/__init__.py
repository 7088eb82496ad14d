"""Differentiable click models over a log-space autodiff tape."""
from .autodiff import Tape
from .base import BaseClickModel, ClickModel, ModelKind, SampleOutput
from .ccm_model import ClickChainModel
from .cm_model import CascadeModel
from .config import RunConfig, load_run_config
from .ctr_models import DocumentCTRModel, GlobalCTRModel, RankCTRModel
from .data import SessionBatch, SessionDataset, SessionRecord, load_sessions
from .dbn_model import DynamicBayesianNetwork, SimplifiedDBN
from .dcm_model import DependentClickModel
from .errors import (ClickModelError, ConfigurationError, DataValidationError, NumericalError,
                     TrainingDivergedError, UsageError)
from .factory import build_model
from .mixture_model import MixtureModel
from .parameters import ParameterStore
from .pbm_model import PositionBasedModel
from .training import TrainConfig, Trainer, evaluate
from .ubm_model import UserBrowsingModel

__all__ = [
    'Tape',
    'BaseClickModel',
    'ClickModel',
    'ModelKind',
    'SampleOutput',
    'GlobalCTRModel',
    'RankCTRModel',
    'DocumentCTRModel',
    'PositionBasedModel',
    'CascadeModel',
    'UserBrowsingModel',
    'DependentClickModel',
    'ClickChainModel',
    'DynamicBayesianNetwork',
    'SimplifiedDBN',
    'MixtureModel',
    'ParameterStore',
    'SessionRecord',
    'SessionBatch',
    'SessionDataset',
    'load_sessions',
    'RunConfig',
    'load_run_config',
    'build_model',
    'TrainConfig',
    'Trainer',
    'evaluate',
    'ClickModelError',
    'UsageError',
    'DataValidationError',
    'ConfigurationError',
    'NumericalError',
    'TrainingDivergedError',
]
