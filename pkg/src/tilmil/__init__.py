"""Weak-label multiple-instance regression of stromal TIL scores."""
from .core import EvalReport, FeatureBag, TileFeature, TileGeometry, validate_bag
from .model import BagPrediction, HeadKind, ModelHead, backward, forward, init_head, loss, sigmoid
from .optim import AdamState, adam_step
from .train import TrainConfig, TrainResult, train_fold

__version__ = "0.1.0"
