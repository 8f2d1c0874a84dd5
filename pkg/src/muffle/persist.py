"""Model serialization: ensemble and linear predictors as versioned JSON."""

from __future__ import annotations

import json

import numpy as np

from muffle.predictors import EnsemblePredictor, LinearPredictor
from muffle.trees import DecisionTree, NodeSpecialist, TreeMember

MODEL_SCHEMA = 1


class ModelFormatError(ValueError):
    pass


def ensemble_document(pred: EnsemblePredictor, algorithm="") -> dict:
    """Trees are stored once each; members reference them as (tree, node),
    with node 0 meaning the whole tree's prediction."""
    trees: list[DecisionTree] = []
    index: dict[int, int] = {}
    members = []
    for mem in pred.members:
        key = id(mem.tree)
        if key not in index:
            index[key] = len(trees)
            trees.append(mem.tree)
        members.append({"tree": index[key], "node": int(mem.node_id)})
    return {
        "schema": MODEL_SCHEMA,
        "kind": "ensemble",
        "algorithm": algorithm,
        "sigma": [float(v) for v in pred.sigma],
        "b": None if pred.b is None else [float(v) for v in pred.b],
        "trees": [t.to_dict() for t in trees],
        "members": members,
    }


def linear_document(pred: LinearPredictor, algorithm="") -> dict:
    return {
        "schema": MODEL_SCHEMA,
        "kind": "linear",
        "algorithm": algorithm,
        "weights": [float(v) for v in pred.weights],
        "intercept": float(pred.intercept),
        "mean": [float(v) for v in pred.mean],
        "scale": [float(v) for v in pred.scale],
    }


def model_document(pred, algorithm="") -> dict:
    if isinstance(pred, EnsemblePredictor):
        return ensemble_document(pred, algorithm)
    if isinstance(pred, LinearPredictor):
        return linear_document(pred, algorithm)
    raise ModelFormatError(f"cannot serialize predictor type {type(pred).__name__}")


def save_model(pred, path, algorithm=""):
    with open(path, "w") as fh:
        json.dump(model_document(pred, algorithm), fh, sort_keys=True, indent=2)
        fh.write("\n")


def predictor_from_document(doc: dict):
    try:
        schema = doc["schema"]
        kind = doc["kind"]
    except (KeyError, TypeError):
        raise ModelFormatError("not a model document (missing schema/kind)") from None
    if schema != MODEL_SCHEMA:
        raise ModelFormatError(f"unsupported model schema {schema!r}")
    if kind == "linear":
        return LinearPredictor(
            weights=np.array(doc["weights"], dtype=np.float64),
            intercept=float(doc["intercept"]),
            mean=np.array(doc["mean"], dtype=np.float64),
            scale=np.array(doc["scale"], dtype=np.float64),
        )
    if kind != "ensemble":
        raise ModelFormatError(f"unknown model kind {kind!r}")
    trees = [DecisionTree.from_dict(td) for td in doc["trees"]]
    members = []
    for i, ref in enumerate(doc["members"]):
        tree_idx, node_id = int(ref["tree"]), int(ref["node"])
        if not 0 <= tree_idx < len(trees):
            raise ModelFormatError(f"member {i}: tree index {tree_idx} out of range")
        tree = trees[tree_idx]
        if node_id == 0:
            members.append(TreeMember(tree, tree_index=tree_idx))
        else:
            if not 0 <= node_id < len(tree.nodes):
                raise ModelFormatError(f"member {i}: node {node_id} not in tree "
                                       f"{tree_idx}")
            members.append(NodeSpecialist(tree, node_id, tree_index=tree_idx))
    sigma = np.array(doc["sigma"], dtype=np.float64)
    b = None if doc.get("b") is None else np.array(doc["b"], dtype=np.float64)
    return EnsemblePredictor(members=members, sigma=sigma, b=b)


def load_model(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: invalid JSON ({exc})") from None
    try:
        return predictor_from_document(doc)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"{path}: malformed model ({exc})") from exc
