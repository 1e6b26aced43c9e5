import numpy as np
import pytest

from poolal.data import PoolState, RngStream, generate_gaussian_blobs
from poolal.learner import InferenceBundle, MlpModel, TrainConfig, train

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    def _report(number, ok, detail=""):
        ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        print(ACCEPTANCE_LINES[-1])
        return ok

    return _report


@pytest.fixture(scope="session")
def blobs4():
    return generate_gaussian_blobs(4, 100, 2, 0.25, RngStream(11))


@pytest.fixture(scope="session")
def small_model(blobs4):
    lab = np.arange(0, 400, 10)
    return train(blobs4, lab, TrainConfig(epochs=30), RngStream(3))


@pytest.fixture
def pool4(blobs4):
    lab = np.arange(0, 400, 10)
    return PoolState(labeled=lab, unlabeled=np.setdiff1d(np.arange(400), lab))


def random_model(gen, dim=3, hidden=5, classes=4, dropout=0.5):
    return MlpModel.initialize(dim, hidden, classes, dropout, gen)


def make_bundle(probs, mc=None, embeddings=None):
    probs = np.asarray(probs, dtype=float)
    n = probs.shape[0]
    mc = probs[None] if mc is None else np.asarray(mc, dtype=float)
    emb = np.ones((n, 1)) if embeddings is None else np.asarray(embeddings, dtype=float)
    return InferenceBundle(np.arange(n), probs, mc, emb, np.log(np.maximum(probs, 1e-300)))
