"""
Click Model Playground
A Streamlit app to simulate click logs and train click models on them.
"""
import json
import os

import numpy as np
import pandas as pd
import streamlit as st
from dotenv import load_dotenv
from pydantic import ValidationError

from clickmodels import ClickModelError, ModelKind, ParameterStore, Trainer, build_model
from clickmodels import evaluate, load_sessions
from clickmodels.config import RunConfig, parse_config_text
from clickmodels.data import split
from clickmodels.factory import infer_table_size, randomize_parameters
from clickmodels.metrics import default_metrics
from clickmodels.simulate import ranking_layout, simulate
from clickmodels.training import history_frame

# Load environment variables from .env file
load_dotenv()

MODEL_KINDS = [kind.value for kind in ModelKind if kind != ModelKind.MIXTURE]


def load_config():
    """Load UI defaults from config.json."""
    config_path = "config.json"

    if os.path.exists(config_path):
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                return json.load(f)
        except (json.JSONDecodeError, OSError) as e:
            st.error(f"Error loading {config_path}: {e}")

    return {"default_model": "PBM", "default_preset": None, "defaults": {}}


def load_presets():
    """Load run presets from the configs folder."""
    presets = {}
    preset_dir = "configs"
    if os.path.exists(preset_dir):
        for filename in sorted(os.listdir(preset_dir)):
            if filename.endswith(".conf"):
                preset_name = os.path.splitext(filename)[0].replace("_", " ").title()
                try:
                    with open(os.path.join(preset_dir, filename), "r", encoding="utf-8") as f:
                        presets[preset_name] = parse_config_text(f.read())
                except (OSError, ClickModelError) as e:
                    st.error(f"Error loading preset {filename}: {e}")
    return presets


def run_config(values):
    """Validate settings into a RunConfig, reporting problems in the UI."""
    try:
        return RunConfig(**values)
    except ValidationError as e:
        st.error(f"Invalid settings: {e}")
        st.stop()
    return None


def train_and_evaluate(config, dataset):
    """Split, train and evaluate; returns history, report and per-rank frames."""
    train_set, val_set, test_set = split(dataset, config.split, config.seed)
    store = ParameterStore()
    model = build_model(config, store, config.table_size or infer_table_size(dataset))
    history = Trainer(config.train_config()).train(model, store, train_set, val_set)
    metrics = evaluate(model, test_set if len(test_set) else val_set,
                       default_metrics(dataset.has_labels, config.metric_k), config.batch_size)
    per_rank = pd.DataFrame(metrics.compute_per_rank())
    per_rank.index = np.arange(1, len(per_rank) + 1)
    per_rank.index.name = "rank"
    return history_frame(history), metrics.to_frame(), per_rank


st.set_page_config(page_title="Click Model Playground", layout="wide")

st.title("Click Model Playground")

if "results" not in st.session_state:
    st.session_state["results"] = None

config = load_config()
defaults = config.get("defaults", {})
presets = load_presets()

with st.sidebar:
    st.header("Settings")

    mode = st.selectbox("App Mode", ["Simulate", "Upload Click Log"])
    st.divider()

    st.subheader("🧩 Preset")
    preset_names = ["None"] + list(presets.keys())
    default_preset = config.get("default_preset")
    preset_index = preset_names.index(default_preset) if default_preset in preset_names else 0
    preset_name = st.selectbox("Run preset", preset_names, index=preset_index,
                               help="Presets are read from the configs folder")
    preset = presets.get(preset_name, {})

    st.subheader("🤖 Model")
    default_model = preset.get("model", config.get("default_model", "PBM"))
    model_index = MODEL_KINDS.index(default_model) if default_model in MODEL_KINDS else 0
    model_kind = st.selectbox("Model to train", MODEL_KINDS, index=model_index)

    st.divider()

    positions = st.slider("Positions per session", min_value=2, max_value=25,
                          value=int(preset.get("positions", defaults.get("positions", 5))))
    epochs = st.slider("Max epochs", min_value=1, max_value=100,
                       value=int(preset.get("epochs", defaults.get("epochs", 20))))
    learning_rate = st.number_input(
        "Learning rate", min_value=1e-5, max_value=1.0, format="%.4f",
        value=float(preset.get("learning_rate", defaults.get("learning_rate", 0.05))))
    seed = st.number_input("Seed", min_value=0, step=1,
                           value=int(preset.get("seed", defaults.get("seed", 0))))

settings = {key: value for key, value in preset.items()
            if key not in ("train_path", "test_path", "params_path", "output_dir")}
settings.update({
    "model": model_kind,
    "positions": positions,
    "epochs": epochs,
    "learning_rate": learning_rate,
    "seed": int(seed),
    "batch_size": int(defaults.get("batch_size", 64)),
})

if mode == "Simulate":
    st.subheader("Simulate a Click Log")

    col1, col2, col3 = st.columns(3)
    with col1:
        truth_kind = st.selectbox("Ground-truth model", MODEL_KINDS,
                                  index=MODEL_KINDS.index("PBM"))
    with col2:
        n_sessions = st.number_input("Sessions", min_value=10, max_value=200000, step=100,
                                     value=int(defaults.get("n_sessions", 1000)))
    with col3:
        n_queries = st.number_input("Queries", min_value=1, max_value=10000,
                                    value=int(defaults.get("n_queries", 20)))

    if st.button("Simulate and Train", use_container_width=True):
        with st.spinner("Simulating and training..."):
            try:
                table_size = int(n_queries) * positions
                truth_config = run_config({
                    **settings, "model": truth_kind, "table_size": table_size,
                    "satisfaction_size": table_size})
                truth_store = ParameterStore()
                truth = build_model(truth_config, truth_store)
                randomize_parameters(truth_store, np.random.default_rng(int(seed)), positions)
                layout = ranking_layout(
                    int(n_sessions), int(n_queries), positions, int(seed),
                    feature_dim=truth_config.feature_dim if truth_config.uses_features else 0)
                simulation = simulate(truth, layout, seed=int(seed))

                train_config = run_config({
                    **settings, "table_size": table_size,
                    "satisfaction_size": settings.get("satisfaction_size") or table_size})
                st.session_state["results"] = train_and_evaluate(train_config,
                                                                 simulation.dataset)
            except ClickModelError as e:
                st.error(f"An error occurred: {e}")

elif mode == "Upload Click Log":
    st.subheader("Train on a Click Log")

    uploaded_file = st.file_uploader(
        "📎 Upload a click log (CSV with session_id, rank, query_doc_id, click)",
        type=["csv", "gz"],
        help="Optional columns: label for ranking metrics, f0..fN for features"
    )

    if st.button("Train", use_container_width=True):
        if uploaded_file is None:
            st.warning("Please upload a click log first.")
        else:
            with st.spinner("Training..."):
                try:
                    dataset = load_sessions(uploaded_file)
                    table_size = infer_table_size(dataset)
                    st.session_state["results"] = train_and_evaluate(run_config({
                        **settings,
                        "satisfaction_size": settings.get("satisfaction_size") or table_size,
                    }), dataset)
                except ClickModelError as e:
                    st.error(f"An error occurred: {e}")

if st.session_state["results"] is not None:
    history, report, per_rank = st.session_state["results"]
    st.success("Training Complete!")
    st.markdown("### Training history")
    st.line_chart(history.set_index("epoch")[["train_loss", "val_loss"]])
    st.markdown("### Test metrics")
    st.dataframe(report[report["rank"] == "all"], hide_index=True)
    st.markdown("### Per-rank perplexity")
    st.line_chart(per_rank[["ppl", "cond_ppl"]])
