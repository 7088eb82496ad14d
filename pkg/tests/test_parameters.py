"""Tests for parameter tables and providers."""
import math

import numpy as np
import pytest

from clickmodels.autodiff import Tape
from clickmodels.config import RunConfig
from clickmodels.data import SessionDataset
from clickmodels.errors import UsageError
from clickmodels.factory import build_model
from clickmodels.parameters import (Compression, CompressionConfig, EmbeddingTable, LinearModel,
                                    ParameterStore, PositionTable, ScalarParam, hash_index,
                                    linear_logit)
from clickmodels.simulate import ranking_layout, simulate
from clickmodels.training import TrainConfig, Trainer, evaluate


def fnv1a(value):
    """Reference FNV-1a over the 8 little-endian bytes of a 64-bit value."""
    digest = 0xCBF29CE484222325
    for byte in value.to_bytes(8, "little"):
        digest = ((digest ^ byte) * 0x100000001B3) % 2**64
    return digest


class TestHashIndex:
    """Test suite for hash_index."""

    def test_single_row(self):
        """With one physical row every id maps to 0."""
        assert all(hash_index(i, 1, seed=s) == 0 for i in (0, 5, 2**40) for s in (0, 9))

    def test_reference_value(self):
        """FNV-1a of eight zero bytes is 0xA8C7F832281A39C5."""
        assert 0xA8C7F832281A39C5 % 10 == 5
        assert hash_index(0, 10, seed=0) == 5
        assert hash_index(0, 2**62, seed=0) == 0xA8C7F832281A39C5 % 2**62

    def test_seed_is_xored(self):
        """id XOR seed is what gets hashed."""
        assert hash_index(0, 1000, seed=77) == hash_index(77, 1000, seed=0)

    def test_deterministic_and_vectorized(self):
        """Arrays hash elementwise and repeat exactly."""
        ids = np.arange(50)
        rows = hash_index(ids, 7, seed=3)
        np.testing.assert_array_equal(rows, hash_index(ids, 7, seed=3))
        assert rows.min() >= 0 and rows.max() < 7
        assert rows[12] == hash_index(12, 7, seed=3)

    def test_ids_above_int64(self):
        """Ids at and above 2**63 hash like any other 64-bit value."""
        big = 2**63 + 5
        assert hash_index(big, 1000) == fnv1a(big) % 1000
        rows = hash_index(np.array([big, 2**64 - 1], dtype=np.uint64), 1000, seed=3)
        np.testing.assert_array_equal(
            rows, [fnv1a(big ^ 3) % 1000, fnv1a((2**64 - 1) ^ 3) % 1000])

    def test_negative_id_rejected(self):
        """Negative ids have no 64-bit unsigned encoding."""
        with pytest.raises(UsageError, match="non-negative"):
            hash_index(-1, 10)

    def test_zero_rows_rejected(self):
        """physical_rows must be positive."""
        with pytest.raises(UsageError):
            hash_index(1, 0)


class TestParameterStore:
    """Test suite for ParameterStore."""

    def test_register_once(self, store):
        """Registering an existing name returns the shared table."""
        store.add_table("a", 3, init=1.5)
        store.add_table("a", 3, init=-7.0)
        np.testing.assert_array_equal(store["a"], [1.5, 1.5, 1.5])
        with pytest.raises(UsageError):
            store.add_table("a", 4)

    def test_accumulate_scatters_into_rows(self, store):
        """Repeated rows add up and untouched rows stay zero."""
        store.add_table("a", 4)
        tape = Tape()
        leaf = tape.leaf("a", store["a"], np.array([0, 0, 2, 1]),
                         valid=np.array([True, True, True, False]))
        store.accumulate(tape, tape.backward(tape.sum(leaf)))
        np.testing.assert_array_equal(store.grads["a"], [2.0, 0.0, 1.0, 0.0])
        np.testing.assert_array_equal(store.touched["a"], [True, False, True, False])

    def test_frozen_tables_get_no_gradient(self, store):
        """Frozen tables are skipped during accumulation."""
        param = ScalarParam(store, "fixed", 0.0, frozen=True)
        tape = Tape()
        leaf = param.scalar(tape)
        store.accumulate(tape, tape.backward(leaf))
        assert "fixed" not in store.grads

    def test_dump_and_load_exact(self, store, tmp_path):
        """A dump restores bit-identical values."""
        store.add_table("a", 3)
        store["a"][:] = [0.1, -1.0 / 3.0, math.pi]
        path = store.dump(tmp_path / "params.csv")
        other = ParameterStore()
        other.add_table("a", 3)
        other.load(path)
        assert other["a"].tobytes() == store["a"].tobytes()

    def test_load_rejects_unknown_table(self, store, tmp_path):
        """Strict loading refuses tables the model does not have."""
        store.add_table("a", 1)
        path = store.dump(tmp_path / "params.csv")
        other = ParameterStore()
        other.add_table("b", 1)
        with pytest.raises(UsageError, match="unknown parameter table"):
            other.load(path)
        other.load(path, strict=False)

    def test_snapshot_restore(self, store):
        """Restoring a snapshot undoes later writes."""
        store.add_table("a", 2, init=1.0)
        saved = store.snapshot()
        store["a"][:] = 5.0
        store.restore(saved)
        np.testing.assert_array_equal(store["a"], [1.0, 1.0])


class TestEmbeddingTable:
    """Test suite for EmbeddingTable."""

    def test_plain_lookup(self, store):
        """Without a baseline the row logit is returned."""
        table = EmbeddingTable(store, "attraction", 4, -2.1972)
        tape = Tape()
        node = table.lookup_logit(tape, np.array([3]))
        assert tape.value(node)[0] == pytest.approx(-2.1972)

    def test_baseline(self, store):
        """baseline -2.0 plus offset 0.5 gives -1.5."""
        table = EmbeddingTable(store, "attraction", 4, -2.0, baseline=True)
        store["attraction"][1] = 0.5
        tape = Tape()
        node = table.lookup_logit(tape, np.array([1]))
        assert tape.value(node)[0] == pytest.approx(-1.5)

    def test_baseline_gradient_is_sum_of_rows(self, store):
        """The shared baseline collects the gradients of every referenced row."""
        table = EmbeddingTable(store, "attraction", 5, 0.0, baseline=True)
        store["attraction"][:] = [0.3, -0.2, 1.0, 0.0, 0.7]
        tape = Tape()
        node = table.lookup_logit(tape, np.array([0, 2, 2, 4]))
        store.accumulate(tape, tape.backward(tape.sum(tape.log_sigmoid(node))))
        assert store.grads["attraction.baseline"][0] == pytest.approx(
            store.grads["attraction"].sum())

    def test_out_of_range(self, store):
        """Uncompressed tables reject ids beyond their size."""
        table = EmbeddingTable(store, "attraction", 4, 0.0)
        with pytest.raises(UsageError, match="out of range"):
            table.lookup_logit(Tape(), np.array([4]))

    def test_padding_is_not_range_checked(self, store):
        """Masked slots are ignored."""
        table = EmbeddingTable(store, "attraction", 4, 0.0)
        table.lookup_logit(Tape(), np.array([99, 1]), valid=np.array([False, True]))

    def test_hashing_size(self):
        """Hashing 100M ids at ratio 10 keeps 10M rows."""
        store = ParameterStore()
        table = EmbeddingTable(store, "attraction", 100_000_000, 0.0,
                               compression=CompressionConfig(Compression.HASHING, ratio=10))
        assert table.physical_rows == 10_000_000
        assert len(store["attraction"]) == 10_000_000

    def test_hashing_accepts_large_ids(self, store):
        """Hashed tables map any non-negative id."""
        table = EmbeddingTable(store, "attraction", 10, 0.0,
                               compression=CompressionConfig(Compression.HASHING, ratio=5))
        tape = Tape()
        table.lookup_logit(tape, np.array([10**12]))
        assert tape.leaves()[0].index[0] == hash_index(10**12, 2)

    def test_hashing_unsigned_batch_ids(self, store):
        """Ids above 2**63 from a loaded log reach the hashed row."""
        table = EmbeddingTable(store, "attraction", 10, 0.0,
                               compression=CompressionConfig(Compression.HASHING, ratio=5))
        tape = Tape()
        table.lookup_logit(tape, np.array([2**63 + 5, 0], dtype=np.uint64),
                           valid=np.array([True, False]))
        assert tape.leaves()[0].index[0] == fnv1a(2**63 + 5) % 2

    def test_quotient_remainder_rows(self, store):
        """id 7 with remainder size 3 reads quotient row 2 and remainder row 1."""
        table = EmbeddingTable(
            store, "attraction", 9, 0.0,
            compression=CompressionConfig(Compression.QUOTIENT_REMAINDER, remainder_size=3))
        assert len(store["attraction.quotient"]) == 3
        assert len(store["attraction.remainder"]) == 3
        store["attraction.quotient"][:] = [0.0, 10.0, 20.0]
        store["attraction.remainder"][:] = [0.0, 1.0, 2.0]
        tape = Tape()
        node = table.qr_lookup(tape, np.array([7]))
        assert tape.value(node)[0] == 21.0

    def test_quotient_remainder_degenerate(self, store):
        """remainder_size 1 is one full table plus one shared scalar."""
        EmbeddingTable(
            store, "attraction", 6, 0.0,
            compression=CompressionConfig(Compression.QUOTIENT_REMAINDER, remainder_size=1))
        assert len(store["attraction.quotient"]) == 6
        assert len(store["attraction.remainder"]) == 1

    def test_gradient_sparsity(self, store):
        """Only rows a batch references get a nonzero gradient."""
        table = EmbeddingTable(store, "attraction", 10, 0.0)
        tape = Tape()
        node = table.lookup_logit(tape, np.array([1, 4, 4]))
        store.accumulate(tape, tape.backward(tape.sum(tape.log_sigmoid(node))))
        nonzero = np.flatnonzero(store.grads["attraction"])
        np.testing.assert_array_equal(nonzero, [1, 4])


class TestHashingRemap:
    """Hashing with an injective mapping trains like the remapped plain table."""

    def test_identical_trajectories(self):
        """Hashed ids and pre-remapped ids give bit-identical parameters."""
        ids = np.arange(6)
        rows = 12
        seed = next(s for s in range(1000) if len(set(hash_index(ids, rows, s))) == len(ids))

        rng = np.random.default_rng(0)
        layout = np.stack([rng.permutation(6)[:3] for _ in range(40)])
        clicks = rng.integers(0, 2, size=layout.shape)
        hashed_data = SessionDataset.from_arrays(layout, clicks)
        plain_data = SessionDataset.from_arrays(hash_index(layout.ravel(), rows, seed)
                                                .reshape(layout.shape), clicks)

        train_config = TrainConfig(learning_rate=0.05, epochs=5, batch_size=8, patience=5)
        hashed_store, plain_store = ParameterStore(), ParameterStore()
        hashed = build_model(RunConfig(model="DCTR", positions=3, table_size=6,
                                       compression="hashing", compression_ratio=0.5,
                                       hash_seed=seed), hashed_store)
        plain = build_model(RunConfig(model="DCTR", positions=3, table_size=rows), plain_store)
        Trainer(train_config).train(hashed, hashed_store, hashed_data, hashed_data)
        Trainer(train_config).train(plain, plain_store, plain_data, plain_data)
        assert hashed_store["attraction"].tobytes() == plain_store["attraction"].tobytes()


class TestHashingFit:
    """Hashed tables keep most of the per-document signal."""

    def test_ten_times_hashing_beats_global_ctr(self, make_model, set_probs):
        """1,000 hashed rows for 10,000 documents still predict better than one global rate."""
        truth, truth_store = make_model("DCTR", positions=5, table_size=10000)
        set_probs(truth_store, "attraction",
                  np.random.default_rng(60).uniform(0.05, 0.95, 10000))

        def click_log(n_sessions, seed):
            return simulate(truth, ranking_layout(n_sessions, 2000, 5, seed=seed),
                            seed=seed + 1).dataset

        train, val, test = click_log(40000, 61), click_log(5000, 63), click_log(10000, 65)
        config = TrainConfig(learning_rate=0.05, weight_decay=0.0, epochs=30,
                             batch_size=1000, patience=3)
        hashed, hashed_store = make_model("DCTR", positions=5, table_size=10000,
                                          compression="hashing", compression_ratio=10)
        assert len(hashed_store["attraction"]) == 1000
        baseline, baseline_store = make_model("GCTR", positions=5)
        Trainer(config).train(hashed, hashed_store, train, val)
        Trainer(config).train(baseline, baseline_store, train, val)
        hashed_ppl = evaluate(hashed, test, batch_size=1000).compute()["ppl"]
        baseline_ppl = evaluate(baseline, test, batch_size=1000).compute()["ppl"]
        assert hashed_ppl < baseline_ppl


class TestSmallProviders:
    """Test suite for PositionTable, ScalarParam and LinearModel."""

    def test_position_rows(self, store, make_batch):
        """Rank k reads row k-1."""
        table = PositionTable(store, "examination", 3, 0.0)
        store["examination"][:] = [1.0, 2.0, 3.0]
        tape = Tape()
        node = table.logit(tape, make_batch([[5, 6, 7]]), 2)
        assert tape.value(node)[0] == 3.0

    def test_last_click_rows(self, store, make_batch):
        """Last-click tables read (rank - 1) * K + last."""
        table = PositionTable(store, "examination", 3, 0.0, last_click=True)
        store["examination"][:] = np.arange(9.0)
        tape = Tape()
        node = table.logit(tape, make_batch([[5, 6, 7]]), 2, last_click=1)
        assert tape.value(node)[0] == 7.0
        with pytest.raises(UsageError):
            table.logit(tape, make_batch([[5, 6, 7]]), 2)

    def test_rank_beyond_table(self, store, make_batch):
        """A rank larger than the table is a usage error."""
        table = PositionTable(store, "examination", 2, 0.0)
        with pytest.raises(UsageError):
            table.logit(Tape(), make_batch([[1, 2, 3]]), 2)

    def test_rank_indexed_scalar(self, store, make_batch):
        """Vector scalars are indexed by rank."""
        param = ScalarParam(store, "continuation", 0.0, size=3)
        store["continuation"][:] = [0.1, 0.2, 0.3]
        tape = Tape()
        node = param.logit(tape, make_batch([[0, 1, 2]]), 1)
        assert tape.value(node)[0] == 0.2

    @pytest.mark.parametrize("weights,bias,features,expected", [
        ([0.0, 0.0], 1.25, [3.0, -4.0], 1.25),
        ([1.0], 0.0, [0.3], 0.3),
        ([2.0, -1.0], 0.5, [1.0, 2.0], 0.5),
    ])
    def test_linear_logit(self, store, weights, bias, features, expected):
        """bias + w . f from scale and add nodes."""
        model = LinearModel(store, "attraction", len(weights), 0.0)
        store["attraction.weights"][:] = weights
        store["attraction.bias"][:] = bias
        tape = Tape()
        assert float(tape.value(linear_logit(model, features, tape))) == pytest.approx(expected)

    def test_linear_dimension_mismatch(self, store):
        """Feature vectors must match feature_dim."""
        model = LinearModel(store, "attraction", 2, 0.0)
        with pytest.raises(UsageError, match="expected 2 features"):
            linear_logit(model, [1.0, 2.0, 3.0], Tape())

    def test_linear_gradients(self, store):
        """Each weight's gradient is scaled by its feature."""
        model = LinearModel(store, "attraction", 2, 0.0)
        tape = Tape()
        node = linear_logit(model, np.array([[1.0, 2.0], [3.0, -1.0]]), tape)
        store.accumulate(tape, tape.backward(tape.sum(node)))
        np.testing.assert_allclose(store.grads["attraction.weights"], [4.0, 1.0])
        np.testing.assert_allclose(store.grads["attraction.bias"], [2.0])

    def test_linear_columns(self, store, make_batch):
        """A column subset reads only those features of each slot."""
        model = LinearModel(store, "examination", 3, 0.0, columns=[2])
        assert len(store["examination.weights"]) == 1
        store["examination.weights"][:] = [2.0]
        features = np.array([[[5.0, 5.0, 0.5], [5.0, 5.0, -1.0]]])
        batch = make_batch([[0, 1]], features=features)
        tape = Tape()
        assert tape.value(model.logit(tape, batch, 1))[0] == pytest.approx(-2.0)

    def test_linear_columns_out_of_range(self, store):
        """Columns must index into the input width."""
        with pytest.raises(UsageError, match="feature columns"):
            LinearModel(store, "examination", 2, 0.0, columns=[0, 2])

    def test_linear_input_width_checked(self, store, make_batch):
        """Batches must carry input_dim features per slot."""
        model = LinearModel(store, "attraction", 3, 0.0, columns=[0])
        batch = make_batch([[0]], features=np.zeros((1, 1, 2)))
        with pytest.raises(UsageError, match="expects 3 features"):
            model.logit(Tape(), batch, 0)


class TestFeatureProviders:
    """Test suite for feature-based providers chosen by the factory."""

    def test_two_tower_pbm(self, store):
        """Examination and attraction both become linear models."""
        model = build_model(RunConfig(model="PBM", positions=3, feature_mode="features",
                                      examination_feature_mode="features", feature_dim=3,
                                      examination_features="0", attraction_features="1,2"),
                            store)
        assert isinstance(model.examination, LinearModel)
        assert isinstance(model.attraction, LinearModel)
        assert len(store["examination.weights"]) == 1
        assert len(store["attraction.weights"]) == 2
        assert "examination" not in store

    def test_feature_satisfaction(self, store):
        """DBN satisfaction from features needs no satisfaction_size."""
        model = build_model(RunConfig(model="DBN", positions=3, table_size=6,
                                      satisfaction_feature_mode="features", feature_dim=2),
                            store)
        assert isinstance(model.satisfaction, LinearModel)
        assert isinstance(model.attraction, EmbeddingTable)
        assert len(store["satisfaction.weights"]) == 2
