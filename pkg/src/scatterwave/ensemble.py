"""Three-branch ResNet ensemble with WST fusion and late merging.

Branches ``wst1``, ``wst2`` and ``mel`` each produce class probabilities.
The two scattering branches are fused by a small MLP into ``p12``; ``p12``
and the Mel probabilities ``pm`` are then merged by max, a convex
combination with a grid-searched weight, or a second MLP.
"""

from __future__ import annotations

import configparser
import hashlib
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, ParameterError, ShapeError
from .metrics import REPORT_COLUMNS, EvalReport, evaluate
from .nn import MLP, ResNet, ResNetSpec, TrainConfig, load_checkpoint, save_checkpoint, softmax, train
from .seeds import derive_seed

log = logging.getLogger(__name__)

BRANCHES = ("wst1", "wst2", "mel")
MERGES = ("max", "hard", "mlp")
LAMBDA_GRID = np.arange(101) / 100.0
MLP_HIDDEN = (256, 128)


def _probs(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a[None] if a.ndim == 1 else a


def _check_pair(p12, pm):
    if p12.shape != pm.shape:
        raise ShapeError(f"probability arrays differ in shape: {p12.shape} vs {pm.shape}")


def branch_probs(branches: dict, features: dict, batch_size: int = 128):
    """Softmax outputs ``(p1, p2, pm)`` of the three branch networks."""
    missing = [b for b in BRANCHES if b not in features]
    if missing:
        raise InputError(f"missing feature images: {missing}")
    out = []
    for name in BRANCHES:
        x = np.asarray(features[name])
        if x.ndim == 3:
            x = x[:, None]
        out.append(softmax(branches[name].predict_logits(x, batch_size).astype(np.float64)))
    return tuple(out)


def fuse_wst(p1, p2, fusion: MLP) -> np.ndarray:
    p1, p2 = _probs(p1), _probs(p2)
    _check_pair(p1, p2)
    if fusion.dims[0] != 2 * p1.shape[1]:
        raise ShapeError(f"fusion MLP expects {fusion.dims[0]} inputs, got {2 * p1.shape[1]}")
    return softmax(fusion.predict_logits(np.hstack([p1, p2])).astype(np.float64))


def merge_max(p12, pm) -> np.ndarray:
    """Class of the largest entry in the stacked vector ``[p12, pm]``.

    ``np.argmax`` returns the first maximum, so ties go to the lowest stacked
    index (``p12`` before ``pm``, then lower class).
    """
    p12, pm = _probs(p12), _probs(pm)
    _check_pair(p12, pm)
    return np.argmax(np.hstack([p12, pm]), axis=1) % p12.shape[1]


def merge_max_scores(p12, pm) -> np.ndarray:
    """Elementwise maximum renormalized to sum 1; used as the score for AUC."""
    p12, pm = _probs(p12), _probs(pm)
    _check_pair(p12, pm)
    m = np.maximum(p12, pm)
    return m / m.sum(axis=1, keepdims=True)


def merge_hard(p12, pm, lam: float) -> np.ndarray:
    """``lam * pm + (1 - lam) * p12``; the endpoints reproduce the inputs bit for bit."""
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"lambda must lie in [0, 1], got {lam}")
    p12, pm = _probs(p12), _probs(pm)
    _check_pair(p12, pm)
    return lam * pm + (1.0 - lam) * p12


def search_lambda(p12, pm, labels, grid=LAMBDA_GRID) -> tuple[float, float]:
    """Grid value maximizing accuracy of the hard merge; ties go to the smallest lambda."""
    labels = np.asarray(labels)
    best_lam, best_acc = float(grid[0]), -1.0
    for lam in grid:
        acc = float(np.mean(merge_hard(p12, pm, float(lam)).argmax(axis=1) == labels))
        if acc > best_acc:
            best_lam, best_acc = float(lam), acc
    return best_lam, best_acc


def merge_mlp(p12, pm, mlp: MLP) -> np.ndarray:
    p12, pm = _probs(p12), _probs(pm)
    _check_pair(p12, pm)
    if mlp.dims[0] != 2 * p12.shape[1]:
        raise ShapeError(f"merge MLP expects {mlp.dims[0]} inputs, got {2 * p12.shape[1]}")
    return softmax(mlp.predict_logits(np.hstack([p12, pm])).astype(np.float64))


# --------------------------------------------------------------------------
# Whole model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class WhaleNetConfig:
    branch: TrainConfig = TrainConfig(epochs=100, batch_size=128)
    mlp: TrainConfig = TrainConfig(epochs=500, batch_size=128)
    blocks_per_stage: int = 2
    merge: str = "hard"
    seed: int = 0

    def __post_init__(self):
        if self.merge not in MERGES:
            raise ParameterError(f"merge must be one of {MERGES}, got {self.merge!r}")

    def digest(self) -> str:
        text = repr(sorted(asdict(self).items()))
        return hashlib.blake2b(text.encode(), digest_size=8).hexdigest()


def _seeded(cfg: TrainConfig, seed: int) -> TrainConfig:
    return TrainConfig(**{**asdict(cfg), "seed": seed})


@dataclass
class Predictions:
    """Per-column class scores and hard predictions on one set of signals."""

    scores: dict[str, np.ndarray]
    preds: dict[str, np.ndarray]


@dataclass
class WhaleNet:
    branches: dict[str, ResNet]
    fusion: MLP
    merger: MLP
    lam: float
    merge: str
    classes: list[str]
    config_hash: str = ""
    branch_logs: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def column_probs(self, features: dict) -> Predictions:
        p1, p2, pm = branch_probs(self.branches, features)
        p12 = fuse_wst(p1, p2, self.fusion)
        scores = {
            "Mel": pm, "S1": p1, "S2": p2, "S1+S2": p12,
            "Max Merge": merge_max_scores(p12, pm),
            "Hard Merge": merge_hard(p12, pm, self.lam),
            "MLP Merge": merge_mlp(p12, pm, self.merger),
        }
        preds = {k: v.argmax(axis=1) for k, v in scores.items()}
        preds["Max Merge"] = merge_max(p12, pm)
        return Predictions(scores, preds)

    def predict(self, features: dict) -> np.ndarray:
        column = {"max": "Max Merge", "hard": "Hard Merge", "mlp": "MLP Merge"}[self.merge]
        return self.column_probs(features).preds[column]

    def evaluate(self, features: dict, labels) -> dict[str, EvalReport]:
        p = self.column_probs(features)
        return {c: evaluate(labels, p.scores[c], p.preds[c], self.n_classes) for c in REPORT_COLUMNS}


def _subset(features: dict, mask) -> dict:
    return {k: np.asarray(v)[mask] for k, v in features.items()}


def train_whalenet(features: dict, labels, is_train, classes, cfg: WhaleNetConfig = WhaleNetConfig(),
                   callback=None) -> WhaleNet:
    """Train branches, then the fusion MLP, then fit the merges.

    ``features`` maps each branch name to an ``[N, H, W]`` array and
    ``is_train`` marks the training rows; the rest is the validation split.
    Validation data drives the plateau scheduler and the lambda search only.
    """
    labels = np.asarray(labels)
    is_train = np.asarray(is_train, dtype=bool)
    n_classes = len(classes)
    tr, va = _subset(features, is_train), _subset(features, ~is_train)
    y_tr, y_va = labels[is_train], labels[~is_train]

    branches, logs = {}, {}
    for name in BRANCHES:
        spec = ResNetSpec(n_classes, blocks_per_stage=cfg.blocks_per_stage)
        net = ResNet(spec, seed=derive_seed(cfg.seed, "init", name))
        tcfg = _seeded(cfg.branch, derive_seed(cfg.seed, "shuffle", name))
        cb = None if callback is None else (lambda rec, n=name: callback(n, rec))
        logs[name] = train(net, tr[name][:, None], y_tr, va[name][:, None], y_va, tcfg, cb).history
        branches[name] = net
        log.info("branch %s trained, final loss %.4f", name, logs[name][-1].train_loss if logs[name] else float("nan"))

    for net in branches.values():
        net.store.frozen = True
    dims = (2 * n_classes, *MLP_HIDDEN, n_classes)

    p1, p2, pm = branch_probs(branches, tr)
    v1, v2, vm = branch_probs(branches, va)
    fusion = MLP(dims, seed=derive_seed(cfg.seed, "init", "fusion"))
    logs["fusion"] = train(fusion, np.hstack([p1, p2]), y_tr, np.hstack([v1, v2]), y_va,
                           _seeded(cfg.mlp, derive_seed(cfg.seed, "shuffle", "fusion")),
                           None if callback is None else (lambda rec: callback("fusion", rec))).history

    p12, v12 = fuse_wst(p1, p2, fusion), fuse_wst(v1, v2, fusion)
    lam, _ = search_lambda(v12, vm, y_va) if len(y_va) else (0.0, float("nan"))
    merger = MLP(dims, seed=derive_seed(cfg.seed, "init", "merge"))
    logs["merge"] = train(merger, np.hstack([p12, pm]), y_tr, np.hstack([v12, vm]), y_va,
                          _seeded(cfg.mlp, derive_seed(cfg.seed, "shuffle", "merge")),
                          None if callback is None else (lambda rec: callback("merge", rec))).history
    return WhaleNet(branches, fusion, merger, lam, cfg.merge, list(classes), cfg.digest(), logs)


# --------------------------------------------------------------------------
# Bundle directory
# --------------------------------------------------------------------------

BUNDLE_META = "whalenet.ini"


def save_bundle(model: WhaleNet, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, net in model.branches.items():
        save_checkpoint(net, d / f"{name}.swnn")
    save_checkpoint(model.fusion, d / "fusion12.swnn")
    save_checkpoint(model.merger, d / "merge_mlp.swnn")
    meta = configparser.ConfigParser(interpolation=None)
    blocks = next(iter(model.branches.values())).spec.blocks_per_stage
    meta["whalenet"] = {
        "merge": model.merge,
        "lambda": repr(model.lam),
        "n_classes": str(model.n_classes),
        "blocks_per_stage": str(blocks),
        "config_hash": model.config_hash,
        "lambda_split": "validation",
    }
    meta["classes"] = {str(i): c for i, c in enumerate(model.classes)}
    with open(d / BUNDLE_META, "w") as fh:
        meta.write(fh)
    return d


def load_bundle(directory) -> WhaleNet:
    d = Path(directory)
    meta = configparser.ConfigParser(interpolation=None)
    if not meta.read(d / BUNDLE_META):
        raise InputError(f"no {BUNDLE_META} in {d}")
    w = meta["whalenet"]
    n = int(w["n_classes"])
    classes = [meta["classes"][str(i)] for i in range(n)]
    spec = ResNetSpec(n, blocks_per_stage=int(w["blocks_per_stage"]))
    branches = {b: load_checkpoint(ResNet(spec), d / f"{b}.swnn") for b in BRANCHES}
    dims = (2 * n, *MLP_HIDDEN, n)
    fusion = load_checkpoint(MLP(dims), d / "fusion12.swnn")
    merger = load_checkpoint(MLP(dims), d / "merge_mlp.swnn")
    return WhaleNet(branches, fusion, merger, float(w["lambda"]), w["merge"], classes, w["config_hash"])
