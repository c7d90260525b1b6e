import numpy as np
import pytest

from imbf.data import KAGGLE_FEATURES, Dataset, write_csv


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def kaggle_like(n_major, n_minor, seed=0, separation=2.0):
    """A dataset with the Kaggle column layout and Gaussian-blob classes."""
    r = np.random.default_rng(seed)
    X = r.standard_normal((n_major + n_minor, len(KAGGLE_FEATURES)))
    y = np.r_[np.zeros(n_major, int), np.ones(n_minor, int)]
    X[n_major:] += separation
    X[:, 0] = np.sort(r.uniform(0, 172792, len(y)))  # Time
    X[:, -1] = np.abs(X[:, -1]) * 80  # Amount
    order = r.permutation(len(y))
    return Dataset(X[order], y[order], KAGGLE_FEATURES)


@pytest.fixture
def kaggle_csv(tmp_path):
    path = tmp_path / "creditcard.csv"
    write_csv(kaggle_like(400, 40, seed=1), path)
    return path


from imbf.learners import Classifier, register_learner  # noqa: E402


@register_learner("test_constant")
class ConstantLearner(Classifier):
    """Scores every row with the same value."""

    defaults = {"value": 0.3}

    def _fit(self, X, y):
        pass

    def _predict(self, X):
        return np.full(len(X), float(self.hp["value"]))

    def params(self):
        return {}

    def load_params(self, p):
        pass


@register_learner("test_first_feature")
class FirstFeatureLearner(Classifier):
    """Scores a row by its first feature, squashed into [0, 1]; perfect when that feature is the label."""

    defaults = {}

    def _fit(self, X, y):
        pass

    def _predict(self, X):
        return 1.0 / (1.0 + np.exp(-X[:, 0]))

    def params(self):
        return {}

    def load_params(self, p):
        pass


def label_leak_dataset(n_major, n_minor, seed=0):
    """Feature 0 is +-3 by class so the first-feature learner ranks perfectly."""
    r = np.random.default_rng(seed)
    y = np.r_[np.zeros(n_major, int), np.ones(n_minor, int)]
    X = r.normal(size=(len(y), 4))
    X[:, 0] = np.where(y == 1, 3.0, -3.0) + r.uniform(-1, 1, len(y))
    order = r.permutation(len(y))
    return Dataset(X[order], y[order], ["leak", "a", "b", "c"])


# acceptance verdicts, printed once per run by the terminal-summary hook below
ACCEPTANCE = {}


def record(number: int, title: str, passed, detail: str) -> None:
    verdict = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
    ACCEPTANCE[number] = f"criterion {number:>2} {verdict}  {title}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
