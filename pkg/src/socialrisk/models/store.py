"""Structured-text (JSON) persistence for fitted models.

Floats round-trip through JSON via shortest-repr, so a reloaded model
reproduces its predictions bit-identically.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from socialrisk.errors import StageError
from socialrisk.models.gbdt import GBDTParams, Tree, TreeEnsemble
from socialrisk.models.linear import LinearModel

FORMAT_VERSION = 1


def _model_payload(model):
    if isinstance(model, LinearModel):
        return {
            "kind": "linear",
            "weights": [float(v) for v in model.weights],
            "intercept": float(model.intercept),
            "l1": model.l1,
            "l2": model.l2,
            "converged": model.converged,
            "objective": model.objective,
            "n_sweeps": model.n_sweeps,
            "feature_names": model.feature_names,
        }
    if isinstance(model, TreeEnsemble):
        return {
            "kind": "gbdt",
            "base_score": model.base_score,
            "best_round": model.best_round,
            "params": vars(model.params),
            "feature_names": model.feature_names,
            "trees": [
                {
                    "feature": tree.feature.tolist(),
                    "threshold": [float(v) for v in tree.threshold],
                    "left": tree.left.tolist(),
                    "right": tree.right.tolist(),
                    "value": [float(v) for v in tree.value],
                    "gain": [float(v) for v in tree.gain],
                }
                for tree in model.trees
            ],
        }
    raise TypeError(f"cannot serialize model of type {type(model).__name__}")


def save_model(model, path):
    payload = {"format_version": FORMAT_VERSION, "model": _model_payload(model)}
    Path(path).write_text(json.dumps(payload, indent=1))


def load_model(path):
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise StageError(f"cannot read model file {path}: {exc}") from exc
    if payload.get("format_version") != FORMAT_VERSION:
        raise StageError(f"unsupported model format in {path}")
    data = payload["model"]
    if data["kind"] == "linear":
        return LinearModel(
            weights=np.asarray(data["weights"], dtype=np.float64),
            intercept=data["intercept"],
            l1=data["l1"],
            l2=data["l2"],
            converged=data["converged"],
            objective=data["objective"],
            n_sweeps=data["n_sweeps"],
            feature_names=data["feature_names"],
        )
    if data["kind"] == "gbdt":
        trees = [
            Tree(
                feature=np.asarray(t["feature"], dtype=np.int64),
                threshold=np.asarray(t["threshold"], dtype=np.float64),
                left=np.asarray(t["left"], dtype=np.int64),
                right=np.asarray(t["right"], dtype=np.int64),
                value=np.asarray(t["value"], dtype=np.float64),
                gain=np.asarray(t["gain"], dtype=np.float64),
            )
            for t in data["trees"]
        ]
        return TreeEnsemble(
            trees=trees,
            base_score=data["base_score"],
            params=GBDTParams(**data["params"]),
            best_round=data["best_round"],
            feature_names=data["feature_names"],
        )
    raise StageError(f"unknown model kind {data['kind']!r} in {path}")
