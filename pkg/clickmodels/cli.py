"""
Command-line entry point.

Usage: ``clickmodels train|evaluate|simulate|em-compare|gradcheck --config PATH
[--seed N] [--out DIR]``. Exit codes: 0 success, 2 invalid configuration or
input, 3 numerical failure.
"""
import functools
from pathlib import Path
from typing import Optional, Tuple

import click
import numpy as np
import pandas as pd
from dotenv import load_dotenv
from pydantic import ValidationError
from tabulate import tabulate

from . import em
from .base import ModelKind
from .config import RunConfig, load_run_config, write_resolved
from .data import SessionDataset, collate, load_sessions, split
from .errors import ClickModelError, ConfigurationError, NumericalError, TrainingDivergedError
from .factory import build_model, infer_table_size, randomize_parameters
from .logger import get_logger
from .metrics import MultiMetric, default_metrics, write_report
from .parameters import ParameterStore
from .simulate import ranking_layout, simulate, write_simulation
from .training import Trainer, evaluate, gradcheck, write_history

logger = get_logger(__name__)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
GRADCHECK_TOLERANCE = 1e-5


def handle_errors(command):
    """Map toolkit errors onto exit codes with a one-line message."""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except NumericalError as error:
            click.echo(f"error: {error}", err=True)
            raise SystemExit(EXIT_NUMERICAL) from error
        except ValidationError as error:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in item['loc']) or 'config'}: {item['msg']}"
                for item in error.errors())
            click.echo(f"error: invalid config: {problems}", err=True)
            raise SystemExit(EXIT_CONFIG) from error
        except (ClickModelError, ValueError, OSError) as error:
            click.echo(f"error: {error}", err=True)
            raise SystemExit(EXIT_CONFIG) from error
    return wrapper


def common_options(command):
    """--config, --seed and --out."""
    command = click.option("--out", "out", type=click.Path(file_okay=False), default=None,
                           help="Output directory")(command)
    command = click.option("--seed", type=int, default=None, help="Override the seed")(command)
    command = click.option("--config", "config_path", type=click.Path(dir_okay=False),
                           required=True, help="Run configuration file")(command)
    return command


def prepare(config_path: str, seed: Optional[int], out: Optional[str]) -> Tuple[RunConfig, Path]:
    """Load the config and create the output directory."""
    config = load_run_config(config_path, seed=seed)
    directory = config.resolve_output_dir(out)
    directory.mkdir(parents=True, exist_ok=True)
    return config, directory


def require_path(config: RunConfig, name: str) -> str:
    """Config value that must name a file."""
    value = getattr(config, name)
    if not value:
        raise ConfigurationError(f"{name} is required for this command")
    return value


def load_splits(config: RunConfig) -> Tuple[SessionDataset, SessionDataset, SessionDataset]:
    """Train/validation/test sessions; ``test_path`` replaces the test split."""
    data = load_sessions(require_path(config, "train_path"), config.max_positions)
    train_set, val_set, test_set = split(data, config.split, config.seed)
    if config.test_path:
        test_set = load_sessions(config.test_path, config.max_positions)
    if len(val_set) == 0:
        raise ConfigurationError("the validation split is empty")
    return train_set, val_set, test_set


def check_features(config: RunConfig, *datasets: SessionDataset):
    """Feature-based parameters need logs with exactly ``feature_dim`` feature columns."""
    if not config.uses_features:
        return
    for dataset in datasets:
        if len(dataset) and dataset.feature_dim != config.feature_dim:
            raise ConfigurationError(f"feature_dim = {config.feature_dim} but the click log has "
                                     f"{dataset.feature_dim} feature columns")


def layout_features(config: RunConfig) -> int:
    """Feature vector width for simulated rankings."""
    return config.feature_dim if config.uses_features else 0


def echo_report(metrics: MultiMetric):
    """Print global metric values as a table."""
    rows = [(name, f"{value:.6f}") for name, value in metrics.compute().items()]
    click.echo(tabulate(rows, headers=["metric", "value"]))


@click.group()
def main():
    """Differentiable click models: train, evaluate, simulate and compare with EM."""
    load_dotenv()


@main.command()
@common_options
@handle_errors
def train(config_path, seed, out):
    """Train a model and evaluate it on the test split."""
    config, directory = prepare(config_path, seed, out)
    train_set, val_set, test_set = load_splits(config)
    check_features(config, train_set, val_set, test_set)
    table_size = config.table_size or infer_table_size(train_set, val_set, test_set)
    config = config.model_copy(update={"table_size": table_size})
    write_resolved(config, directory)

    store = ParameterStore()
    model = build_model(config, store, table_size)
    trainer = Trainer(config.train_config())
    try:
        history = trainer.train(model, store, train_set, val_set)
    except TrainingDivergedError as error:
        write_history(error.history, directory / "history.csv")
        raise
    write_history(history, directory / "history.csv")
    store.dump(directory / "params.csv")

    metrics = default_metrics(with_labels=test_set.has_labels, k=config.metric_k)
    if len(test_set):
        evaluate(model, test_set, metrics, config.batch_size)
        write_report(metrics, directory / "metrics.csv")
        echo_report(metrics)
    logger.info("Trained %s for %d epochs, artifacts in %s", model.get_name(), len(history),
                directory)


@main.command(name="evaluate")
@common_options
@handle_errors
def evaluate_command(config_path, seed, out):
    """Evaluate a parameter dump on a click log."""
    config, directory = prepare(config_path, seed, out)
    write_resolved(config, directory)
    data = load_sessions(config.test_path or require_path(config, "train_path"),
                         config.max_positions)
    check_features(config, data)
    store = ParameterStore()
    model = build_model(config, store, config.table_size or infer_table_size(data))
    store.load(require_path(config, "params_path"))
    metrics = evaluate(model, data, default_metrics(data.has_labels, config.metric_k),
                       config.batch_size)
    write_report(metrics, directory / "metrics.csv")
    echo_report(metrics)


@main.command(name="simulate")
@common_options
@handle_errors
def simulate_command(config_path, seed, out):
    """Sample a synthetic click log from ground-truth parameters."""
    config, directory = prepare(config_path, seed, out)
    layout = ranking_layout(config.n_sessions, config.n_queries, config.positions, config.seed,
                            feature_dim=layout_features(config))
    table_size = config.table_size or config.n_queries * config.positions
    config = config.model_copy(update={"table_size": table_size})
    write_resolved(config, directory)

    store = ParameterStore()
    model = build_model(config, store, table_size)
    if config.params_path:
        store.load(config.params_path)
    elif config.randomize:
        randomize_parameters(store, np.random.default_rng([config.seed, 1]), config.positions)
    store.dump(directory / "ground_truth.csv")

    simulation = simulate(model, layout, seed=config.seed)
    sessions, latents = write_simulation(simulation, directory)
    click.echo(f"wrote {len(simulation.dataset)} sessions to {sessions} and latents to {latents}")


@main.command(name="em-compare")
@common_options
@handle_errors
def em_compare(config_path, seed, out):
    """Fit a PBM with EM and with gradients on the same data and compare."""
    config, directory = prepare(config_path, seed, out)
    if config.model != ModelKind.PBM:
        raise ConfigurationError(f"em-compare needs model = PBM, got {config.model.value}")
    if config.uses_features:
        raise ConfigurationError("em-compare needs id and rank tables, not feature_mode features")
    train_set, val_set, test_set = load_splits(config)
    table_size = config.table_size or infer_table_size(train_set, val_set, test_set)
    config = config.model_copy(update={"table_size": table_size})
    write_resolved(config, directory)

    observations = em.to_observations(train_set)
    if len(observations) and observations.ranks.max() >= config.positions:
        raise ConfigurationError("the click log has more ranks than positions")
    result = em.run_em(observations, np.full(config.positions, config.init_prob),
                       np.full(table_size, config.init_prob), config.em_max_iters, config.em_tol)

    store = ParameterStore()
    model = build_model(config, store, table_size)
    history = Trainer(config.train_config()).train(model, store, train_set, val_set)

    batch = collate(list(train_set))
    gradient_probs = np.exp(model.predict_clicks(batch))[batch.mask]
    em_probs = result.theta[observations.ranks] * result.gamma[observations.docs]
    with np.errstate(divide="ignore"):
        gradient_ll = float(np.sum(np.where(observations.clicks > 0, np.log(gradient_probs),
                                            np.log1p(-gradient_probs))))
    count = len(observations)
    rows = [
        ("em_ll_per_obs", result.trace[-1] / count),
        ("gradient_ll_per_obs", gradient_ll / count),
        ("ll_difference", abs(result.trace[-1] - gradient_ll) / count),
        ("em_iterations", result.iterations),
        ("gradient_epochs", len(history)),
        ("max_click_prob_difference", float(np.max(np.abs(em_probs - gradient_probs)))),
        ("mean_click_prob_difference", float(np.mean(np.abs(em_probs - gradient_probs)))),
    ]
    report = pd.DataFrame(rows, columns=["metric", "value"])
    report.to_csv(directory / "em_compare.csv", index=False, float_format="%.17g",
                  lineterminator="\n")
    trace = pd.DataFrame({"iteration": np.arange(len(result.trace)),
                          "em_ll_per_obs": np.asarray(result.trace) / count})
    trace.to_csv(directory / "em_trace.csv", index=False, float_format="%.17g",
                 lineterminator="\n")
    click.echo(tabulate(rows, headers=["metric", "value"]))


@main.command(name="gradcheck")
@common_options
@handle_errors
def gradcheck_command(config_path, seed, out):
    """Compare tape gradients with finite differences on random batches."""
    config, directory = prepare(config_path, seed, out)
    table_size = config.table_size or config.n_queries * config.positions
    config = config.model_copy(update={"table_size": table_size})
    write_resolved(config, directory)

    rows = []
    worst = 0.0
    for index in range(config.gradcheck_batches):
        rng = np.random.default_rng([config.seed, index])
        store = ParameterStore()
        model = build_model(config, store, table_size)
        for table in store.tables.values():
            table[:] = rng.normal(0.0, 1.0, size=len(table))
        layout = ranking_layout(config.gradcheck_batch_size, config.n_queries,
                                config.positions, seed=int(rng.integers(2**32)),
                                feature_dim=layout_features(config))
        batch = layout.with_clicks(rng.integers(0, 2, size=layout.clicks.shape))
        result = gradcheck(model, store, batch)
        worst = max(worst, result.max_relative_error)
        rows.append((index, result.checked, f"{result.max_relative_error:.3e}",
                     f"{result.worst_table}[{result.worst_row}]"))
    click.echo(tabulate(rows, headers=["batch", "entries", "max_rel_error", "worst"]))
    click.echo(f"max relative error: {worst:.3e}")
    if worst > GRADCHECK_TOLERANCE:
        raise NumericalError(f"gradient check failed: {worst:.3e} > {GRADCHECK_TOLERANCE}")
