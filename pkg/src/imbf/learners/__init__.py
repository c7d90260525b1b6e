"""Base classifiers behind one fit / predict_proba contract."""

from .base import (
    Classifier,
    ClassifierSpec,
    learner_kinds,
    model_from_dict,
    model_from_json,
    register_learner,
    sigmoid,
)
from .cnn import CNN1D
from .gbt import GradientBoostedTrees
from .gru import BiGRU, GruParams, gru_step
from .linear import LinearSVM, LogisticRegression
from .tree import DecisionTree, RandomForest, gini


def _train(kind, ds, seed=0, **hp):
    return ClassifierSpec(kind, hp, seed).build().fit(ds)


def train_decision_tree(ds, seed=0, **hp):
    return _train("decision_tree", ds, seed, **hp)


def train_random_forest(ds, seed=0, **hp):
    return _train("random_forest", ds, seed, **hp)


def train_logistic(ds, seed=0, **hp):
    return _train("logistic", ds, seed, **hp)


def train_linear_svm(ds, seed=0, **hp):
    return _train("linear_svm", ds, seed, **hp)


def train_gbt(ds, seed=0, **hp):
    return _train("gbt", ds, seed, **hp)


def train_bigru(ds, seed=0, **hp):
    return _train("bigru", ds, seed, **hp)


def train_cnn1d(ds, seed=0, **hp):
    return _train("cnn1d", ds, seed, **hp)
