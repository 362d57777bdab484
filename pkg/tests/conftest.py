import numpy as np
import pytest

from tilmil.core import FeatureBag
from tilmil.model import HeadKind, ModelHead


def make_bag(features, label=0.5, slide_id="S0", patient_id=None, stratum="A", coords=None):
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats.reshape(-1, 1)
    n = feats.shape[0]
    if coords is None:
        coords = [(i, 0) for i in range(n)]
    return FeatureBag(patient_id or slide_id, slide_id, coords, feats, label, stratum)


def random_bag(rng: np.random.Generator, n: int, h: int, label=None, slide_id="S0", scale=1.0):
    width = int(np.ceil(np.sqrt(n)))
    coords = [(i % width, i // width) for i in range(n)]
    lab = rng.uniform(0, 1) if label is None else label
    return FeatureBag(slide_id, slide_id, coords, scale * rng.standard_normal((n, h)), lab, "A")


def random_head(rng: np.random.Generator, kind: HeadKind, h: int, hidden: int = 8, scale=1.0):
    if kind is HeadKind.LINEAR:
        return ModelHead(kind, {"w": scale * rng.standard_normal(h) / np.sqrt(h),
                                "b": np.array(rng.normal())})
    return ModelHead(kind, {
        "W1": scale * rng.standard_normal((h, hidden)) / np.sqrt(h),
        "b1": 0.5 * rng.standard_normal(hidden),
        "w2": scale * rng.standard_normal(hidden) / np.sqrt(hidden),
        "b2": np.array(rng.normal()),
    })


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


# One PASS/FAIL line per acceptance criterion, printed after the run.
_ACCEPTANCE: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _ACCEPTANCE[name] = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{_ACCEPTANCE[name]}  {name}")
