"""End-to-end tests for the clickmodels command line."""
# pylint: disable=redefined-outer-name
import pandas as pd
import pytest
from click.testing import CliRunner

from clickmodels.cli import EXIT_CONFIG, main
from clickmodels.config import RESOLVED_NAME, load_run_config


def write_config(path, **values):
    """Write a key = value config file."""
    path.write_text("".join(f"{key} = {value}\n" for key, value in values.items()))
    return str(path)


def run(*args):
    """Invoke the CLI and return the click result."""
    return CliRunner().invoke(main, [str(arg) for arg in args])


@pytest.fixture
def simulated(tmp_path):
    """A PBM click log of 60 sessions over 5 queries and 3 positions."""
    config = write_config(tmp_path / "simulate.conf", model="PBM", positions=3, n_sessions=60,
                          n_queries=5, randomize="true", seed=0)
    result = run("simulate", "--config", config, "--out", tmp_path / "sim")
    assert result.exit_code == 0, result.output
    return tmp_path / "sim" / "sessions.csv"


class TestSimulate:
    """Test suite for the simulate command."""

    def test_outputs(self, simulated):
        """Sessions, latents and ground truth are written."""
        directory = simulated.parent
        sessions = pd.read_csv(simulated)
        latents = pd.read_csv(directory / "latents.csv")
        assert len(sessions) == 60 * 3
        assert len(latents) == 60 * 3
        assert sessions["session_id"].nunique() == 60
        assert (latents["click"] == latents["examination"] * latents["attraction"]).all()
        assert (directory / "ground_truth.csv").exists()
        assert load_run_config(directory / RESOLVED_NAME).table_size == 15

    def test_same_seed_same_log(self, simulated, tmp_path):
        """Simulation is reproducible."""
        config = write_config(tmp_path / "again.conf", model="PBM", positions=3, n_sessions=60,
                              n_queries=5, randomize="true", seed=0)
        assert run("simulate", "--config", config, "--out", tmp_path / "again").exit_code == 0
        assert (tmp_path / "again" / "sessions.csv").read_bytes() == simulated.read_bytes()


class TestTrain:
    """Test suite for the train command."""

    def test_artifacts(self, simulated, tmp_path):
        """Training writes history, parameters, metrics and the resolved config."""
        config = write_config(tmp_path / "ubm.conf", model="UBM", positions=3,
                              train_path=simulated, epochs=3, patience=3, batch_size=16)
        result = run("train", "--config", config, "--out", tmp_path / "ubm")
        assert result.exit_code == 0, result.output
        directory = tmp_path / "ubm"
        history = pd.read_csv(directory / "history.csv")
        assert list(history.columns) == ["epoch", "train_loss", "val_loss", "seconds"]
        assert len(history) == 3
        metrics = pd.read_csv(directory / "metrics.csv", dtype={"rank": str})
        assert set(metrics["metric"]) == {"ll", "ppl", "cond_ppl"}
        assert len(metrics) == 3 + 3 * 3
        params = pd.read_csv(directory / "params.csv")
        assert set(params["table"]) == {"attraction", "examination"}
        assert load_run_config(directory / RESOLVED_NAME).table_size == 15
        assert "ppl" in result.output

    def test_reproducible(self, simulated, tmp_path):
        """Two runs with the same seed dump identical parameters."""
        config = write_config(tmp_path / "pbm.conf", model="PBM", positions=3,
                              train_path=simulated, epochs=2, patience=2, batch_size=8, seed=5)
        for name in ("first", "second"):
            assert run("train", "--config", config, "--out", tmp_path / name).exit_code == 0
        assert (tmp_path / "first" / "params.csv").read_bytes() == \
            (tmp_path / "second" / "params.csv").read_bytes()

    def test_seed_override(self, simulated, tmp_path):
        """--seed replaces the configured seed in the resolved config."""
        config = write_config(tmp_path / "pbm.conf", model="PBM", positions=3,
                              train_path=simulated, epochs=1, seed=5)
        assert run("train", "--config", config, "--seed", 9, "--out",
                   tmp_path / "out").exit_code == 0
        assert load_run_config(tmp_path / "out" / RESOLVED_NAME).seed == 9

    def test_missing_binding(self, simulated, tmp_path):
        """DBN without a satisfaction table size is a configuration error."""
        config = write_config(tmp_path / "dbn.conf", model="DBN", positions=3,
                              train_path=simulated, epochs=1)
        result = run("train", "--config", config, "--out", tmp_path / "dbn")
        assert result.exit_code == EXIT_CONFIG
        assert "missing binding" in result.output

    def test_unknown_key(self, tmp_path):
        """A misspelt key exits with the configuration code."""
        config = write_config(tmp_path / "bad.conf", model="PBM", learning_rat=0.1)
        result = run("train", "--config", config, "--out", tmp_path / "bad")
        assert result.exit_code == EXIT_CONFIG
        assert "invalid config" in result.output

    def test_missing_train_path(self, tmp_path):
        """Training needs a click log."""
        config = write_config(tmp_path / "empty.conf", model="PBM")
        result = run("train", "--config", config, "--out", tmp_path / "empty")
        assert result.exit_code == EXIT_CONFIG
        assert "train_path" in result.output


class TestEvaluate:
    """Test suite for the evaluate command."""

    def test_trained_parameters(self, simulated, tmp_path):
        """A parameter dump from train can be evaluated."""
        train_config = write_config(tmp_path / "train.conf", model="PBM", positions=3,
                                    train_path=simulated, epochs=2)
        assert run("train", "--config", train_config, "--out", tmp_path / "run").exit_code == 0
        config = write_config(tmp_path / "eval.conf", model="PBM", positions=3,
                              test_path=simulated, params_path=tmp_path / "run" / "params.csv")
        result = run("evaluate", "--config", config, "--out", tmp_path / "eval")
        assert result.exit_code == 0, result.output
        metrics = pd.read_csv(tmp_path / "eval" / "metrics.csv", dtype={"rank": str})
        ppl = metrics.loc[(metrics["metric"] == "ppl") & (metrics["rank"] == "all"), "value"]
        assert ppl.item() >= 1.0

    def test_needs_params(self, simulated, tmp_path):
        """Evaluation without a parameter dump fails cleanly."""
        config = write_config(tmp_path / "eval.conf", model="PBM", positions=3,
                              test_path=simulated)
        result = run("evaluate", "--config", config, "--out", tmp_path / "eval")
        assert result.exit_code == EXIT_CONFIG
        assert "params_path" in result.output


class TestEMCompare:
    """Test suite for the em-compare command."""

    def test_writes_report(self, simulated, tmp_path):
        """The comparison and the EM trace are written."""
        config = write_config(tmp_path / "em.conf", model="PBM", positions=3,
                              train_path=simulated, epochs=5, patience=5, em_max_iters=20)
        result = run("em-compare", "--config", config, "--out", tmp_path / "em")
        assert result.exit_code == 0, result.output
        report = pd.read_csv(tmp_path / "em" / "em_compare.csv")
        assert "ll_difference" in report["metric"].tolist()
        trace = pd.read_csv(tmp_path / "em" / "em_trace.csv")
        assert trace["em_ll_per_obs"].diff().dropna().min() > -1e-9

    def test_needs_pbm(self, simulated, tmp_path):
        """Only the position-based model has an EM reference."""
        config = write_config(tmp_path / "em.conf", model="UBM", train_path=simulated)
        result = run("em-compare", "--config", config, "--out", tmp_path / "em")
        assert result.exit_code == EXIT_CONFIG
        assert "PBM" in result.output


class TestGradcheck:
    """Test suite for the gradcheck command."""

    @pytest.mark.parametrize("model", ["PBM", "DBN", "MIXTURE"])
    def test_passes(self, tmp_path, model):
        """Tape gradients match finite differences."""
        extra = {"mixture_members": "PBM,UBM"} if model == "MIXTURE" else {}
        config = write_config(tmp_path / "grad.conf", model=model, positions=4, n_queries=3,
                              satisfaction_size=12, **extra)
        result = run("gradcheck", "--config", config, "--out", tmp_path / "grad")
        assert result.exit_code == 0, result.output
        assert "max relative error" in result.output

    def test_two_tower_pbm(self, tmp_path):
        """Rankings get feature vectors when examination reads features."""
        config = write_config(tmp_path / "grad.conf", model="PBM", positions=4, n_queries=3,
                              feature_mode="features", examination_feature_mode="features",
                              feature_dim=3, examination_features="0",
                              attraction_features="1,2")
        result = run("gradcheck", "--config", config, "--out", tmp_path / "grad")
        assert result.exit_code == 0, result.output


class TestFeatureRuns:
    """Simulating and training with feature-based parameters."""

    def test_simulate_then_train(self, tmp_path):
        """A simulated feature log trains a two-tower PBM."""
        towers = {"model": "PBM", "positions": 3, "feature_mode": "features",
                  "examination_feature_mode": "features", "feature_dim": 2,
                  "examination_features": "0", "attraction_features": "1"}
        simulate_config = write_config(tmp_path / "sim.conf", n_sessions=80, n_queries=4,
                                       randomize="true", **towers)
        assert run("simulate", "--config", simulate_config,
                   "--out", tmp_path / "sim").exit_code == 0
        sessions = pd.read_csv(tmp_path / "sim" / "sessions.csv")
        assert {"f0", "f1"} <= set(sessions.columns)

        train_config = write_config(tmp_path / "train.conf", epochs=2, batch_size=16,
                                    train_path=tmp_path / "sim" / "sessions.csv", **towers)
        result = run("train", "--config", train_config, "--out", tmp_path / "train")
        assert result.exit_code == 0, result.output
        params = pd.read_csv(tmp_path / "train" / "params.csv")
        assert {"examination.weights", "attraction.weights"} <= set(params["table"])

    def test_feature_width_mismatch(self, simulated, tmp_path):
        """A log without feature columns cannot train a feature model."""
        config = write_config(tmp_path / "train.conf", model="PBM", positions=3,
                              feature_mode="features", feature_dim=2, train_path=simulated)
        result = run("train", "--config", config, "--out", tmp_path / "train")
        assert result.exit_code == EXIT_CONFIG
        assert "feature_dim" in result.output
