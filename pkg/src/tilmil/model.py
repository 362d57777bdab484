"""TILMIL heads: per-tile sigmoid scores averaged over the bag.

Three heads are supported, all mapping a tile's feature vector h to a
logit and then through a sigmoid:

* ``linear``           w.h + b
* ``two_linear``       w2.(W1^T h + b1) + b2
* ``two_linear_tanh``  w2.tanh(W1^T h + b1) + b2

The bag score is the mean of the tile scores and the training loss is the
squared error between bag score and slide label.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import FeatureBag
from .rng import Xoshiro256

DEFAULT_HIDDEN = 128


class HeadKind(enum.Enum):
    LINEAR = "linear"
    TWO_LINEAR = "two_linear"
    TWO_LINEAR_TANH = "two_linear_tanh"

    @property
    def code(self) -> int:
        return _KIND_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "HeadKind":
        for kind, c in _KIND_CODES.items():
            if c == code:
                return kind
        raise ValueError(f"unknown head kind code {code}")

    @classmethod
    def parse(cls, text: "str | HeadKind") -> "HeadKind":
        if isinstance(text, HeadKind):
            return text
        key = text.strip().lower().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(
                f"unknown head kind {text!r} (expected one of {', '.join(k.value for k in cls)})"
            ) from None


_KIND_CODES = {HeadKind.LINEAR: 0, HeadKind.TWO_LINEAR: 1, HeadKind.TWO_LINEAR_TANH: 2}

LINEAR_PARAMS = ("w", "b")
MLP_PARAMS = ("W1", "b1", "w2", "b2")


@dataclass(frozen=True, eq=False)
class ModelHead:
    """Parameters of one head. ``params`` maps names to float64 arrays
    (scalar biases are 0-d arrays) in a fixed order per kind."""

    kind: HeadKind
    params: dict[str, np.ndarray]

    def __post_init__(self):
        names = LINEAR_PARAMS if self.kind is HeadKind.LINEAR else MLP_PARAMS
        if tuple(self.params) != names:
            raise ValueError(f"{self.kind.value} head needs parameters {names}, got {tuple(self.params)}")
        fixed = {k: np.array(v, dtype=np.float64) for k, v in self.params.items()}
        if self.kind is HeadKind.LINEAR:
            h = fixed["w"].shape
            ok = len(h) == 1 and fixed["b"].shape == ()
        else:
            W1 = fixed["W1"]
            ok = (
                W1.ndim == 2
                and fixed["b1"].shape == (W1.shape[1],)
                and fixed["w2"].shape == (W1.shape[1],)
                and fixed["b2"].shape == ()
            )
        if not ok:
            shapes = {k: v.shape for k, v in fixed.items()}
            raise ValueError(f"inconsistent parameter shapes for {self.kind.value}: {shapes}")
        for v in fixed.values():
            v.setflags(write=False)
        object.__setattr__(self, "params", fixed)

    @property
    def h_dim(self) -> int:
        if self.kind is HeadKind.LINEAR:
            return int(self.params["w"].shape[0])
        return int(self.params["W1"].shape[0])

    @property
    def hidden(self) -> int:
        return 0 if self.kind is HeadKind.LINEAR else int(self.params["W1"].shape[1])

    def is_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.params.values())

    def replace(self, **params: np.ndarray) -> "ModelHead":
        new = dict(self.params)
        new.update(params)
        return ModelHead(self.kind, new)


@dataclass(frozen=True, eq=False)
class BagPrediction:
    tile_scores: np.ndarray
    bag_score: float


def sigmoid(z: float) -> float:
    """Logistic function; only ever exponentiates a non-positive argument."""
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def sigmoid_array(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def bag_mean(values: np.ndarray) -> float:
    # fsum is exactly rounded, so the mean does not depend on tile order
    return math.fsum(values.tolist()) / len(values)


def init_head(kind: "HeadKind | str", h_dim: int, seed: int = 0, hidden: int = DEFAULT_HIDDEN,
              rng: Xoshiro256 | None = None) -> ModelHead:
    """Linear heads start at zero. MLP weights are fan-in uniform,
    U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero. W1 is drawn row-major
    first, then w2."""
    kind = HeadKind.parse(kind)
    if h_dim < 1:
        raise ValueError(f"h_dim must be >= 1, got {h_dim}")
    if kind is HeadKind.LINEAR:
        return ModelHead(kind, {"w": np.zeros(h_dim), "b": np.array(0.0)})
    if hidden < 1:
        raise ValueError(f"hidden must be >= 1, got {hidden}")
    rng = rng if rng is not None else Xoshiro256(seed)
    bound1 = 1.0 / math.sqrt(h_dim)
    bound2 = 1.0 / math.sqrt(hidden)
    W1 = rng.uniform_array(h_dim * hidden, -bound1, bound1).reshape(h_dim, hidden)
    w2 = rng.uniform_array(hidden, -bound2, bound2)
    return ModelHead(kind, {"W1": W1, "b1": np.zeros(hidden), "w2": w2, "b2": np.array(0.0)})


def _check_dims(head: ModelHead, bag: FeatureBag) -> None:
    if bag.features.shape[1] != head.h_dim:
        raise ValueError(
            f"dimension mismatch: head expects H={head.h_dim}, bag {bag.slide_id} has H={bag.features.shape[1]}"
        )


def _logits(head: ModelHead, X: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    p = head.params
    if head.kind is HeadKind.LINEAR:
        return X @ p["w"] + p["b"], None
    hidden = X @ p["W1"] + p["b1"]
    if head.kind is HeadKind.TWO_LINEAR_TANH:
        hidden = np.tanh(hidden)
    return hidden @ p["w2"] + p["b2"], hidden


def forward(head: ModelHead, bag: FeatureBag) -> BagPrediction:
    _check_dims(head, bag)
    z, _ = _logits(head, bag.features)
    scores = sigmoid_array(z)
    return BagPrediction(scores, bag_mean(scores))


def loss(pred: BagPrediction, label: float) -> float:
    diff = pred.bag_score - label
    return diff * diff


def forward_backward(head: ModelHead, bag: FeatureBag, label: float) -> tuple[BagPrediction, dict[str, np.ndarray]]:
    """Prediction and gradient of the squared bag error (no L2 term)."""
    _check_dims(head, bag)
    X = bag.features
    z, hidden = _logits(head, X)
    s = sigmoid_array(z)
    n = len(s)
    y_hat = bag_mean(s)
    dz = (2.0 * (y_hat - label) / n) * s * (1.0 - s)
    p = head.params
    pred = BagPrediction(s, y_hat)
    if head.kind is HeadKind.LINEAR:
        return pred, {"w": X.T @ dz, "b": np.array(math.fsum(dz.tolist()))}
    d_hidden = dz[:, None] * p["w2"]
    if head.kind is HeadKind.TWO_LINEAR_TANH:
        d_hidden *= 1.0 - hidden * hidden
    return pred, {
        "W1": X.T @ d_hidden,
        "b1": d_hidden.sum(axis=0),
        "w2": hidden.T @ dz,
        "b2": np.array(math.fsum(dz.tolist())),
    }


def backward(head: ModelHead, bag: FeatureBag, label: float) -> dict[str, np.ndarray]:
    """Gradient of the squared bag error w.r.t. every parameter (no L2 term)."""
    return forward_backward(head, bag, label)[1]


def predict_scores(head: ModelHead, bags) -> np.ndarray:
    return np.array([forward(head, bag).bag_score for bag in bags])
