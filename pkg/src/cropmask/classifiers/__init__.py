"""From-scratch classifiers: decision trees, random forest, SMO-based SVM,
and CV-driven grid search."""

import json

from ..errors import SchemaError
from .forest import (ForestModel, ForestParams, forest_from_dict,
                     forest_to_dict, predict_forest, train_forest)
from .search import (DEFAULT_RF_GRID, DEFAULT_SVM_GRID, enumerate_grid,
                     format_params, grid_search, write_grid_csv)
from .svm import (SvmModel, SvmParams, decision_function, predict_svm,
                  svm_from_dict, svm_to_dict, train_svm)
from .trees import Tree, best_split, grow_tree, impurity


def model_to_json(model):
    """Deterministic JSON text for a trained model (either kind)."""
    doc = forest_to_dict(model) if isinstance(model, ForestModel) else svm_to_dict(model)
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def model_from_json(text):
    doc = json.loads(text)
    kind = doc.get("kind")
    if kind == "rf":
        return forest_from_dict(doc)
    if kind == "svm":
        return svm_from_dict(doc)
    raise SchemaError(f"unknown model kind {kind!r}")


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(model))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_json(fh.read())


def predict_any(model, X):
    """Labels (and vote fraction for forests, decision value for SVMs)."""
    if isinstance(model, ForestModel):
        return predict_forest(model, X)
    return predict_svm(model, X), decision_function(model, X)
