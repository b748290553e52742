"""Answer-record refinement for knowledge tracing."""

import json

from ._core import (
    Corpus,
    accuracy,
    auc,
    collaborate,
    control_value,
    coordinate,
    difficulty,
    read_csv,
    rmse,
    synth,
)
from . import _core

__all__ = [
    "Corpus",
    "accuracy",
    "auc",
    "collaborate",
    "control_value",
    "coordinate",
    "difficulty",
    "evaluate_run",
    "read_csv",
    "rmse",
    "run_ablation",
    "run_pipeline",
    "synth",
]


def run_pipeline(corpus, config=None, out_dir=""):
    """Run one configuration; returns the report as a dict."""
    return json.loads(_core._run_pipeline(corpus, json.dumps(config or {}), str(out_dir)))


def run_ablation(corpus, variants, config=None, jobs=1):
    """One CSV row per variant name, returned as a list of dicts."""
    text = _core._run_ablation(corpus, json.dumps(config or {}), list(variants), jobs)
    header, *rows = text.strip().splitlines()
    keys = header.split(",")
    return [dict(zip(keys, r.split(","))) for r in rows]


def evaluate_run(run_dir):
    return json.loads(_core._evaluate_run(str(run_dir)))
