"""Oracle-imitating routers: CART tree, random forest, and softmax regression.

All three consume the static request feature vector and predict one of the
five oracle classes. Training is deterministic given row order, hyperparameters
and seed.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .classifier import FEATURE_NAMES, FeatureVector, extract_features
from .domain import (
    ORACLE_CLASSES,
    DomainError,
    InferenceMode,
    RequestDescriptor,
    WorkloadFamily,
    parse_family,
    parse_mode,
)
from .policies import ConstraintSet, Policy, Reason, RoutingDecision, route_oracle
from .profiles import ProfileTable

N_CLASSES = len(ORACLE_CLASSES)
N_FEATURES = len(FEATURE_NAMES)
_CLASS_INDEX = {m: i for i, m in enumerate(ORACLE_CLASSES)}


class TrainingError(DomainError):
    pass


# --- dataset ------------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetRow:
    features: FeatureVector
    label: InferenceMode
    family: WorkloadFamily

    def __post_init__(self):
        if self.label not in _CLASS_INDEX:
            raise DomainError(f"label {self.label.value} is not one of the oracle classes")

    def to_dict(self) -> dict:
        return {"features": self.features.to_dict(), "label": self.label.value, "family": self.family.value}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetRow":
        if set(d) - {"features", "label", "family"} or not {"features", "label"} <= set(d):
            raise DomainError("dataset row needs 'features' and 'label' (and optionally 'family')")
        features = FeatureVector.from_dict(d["features"])
        if "family" in d:
            family = parse_family(d["family"])
        elif features.workload_tag_code >= 0:
            family = list(WorkloadFamily)[features.workload_tag_code]
        else:
            raise DomainError("untagged dataset row needs an explicit 'family'")
        return cls(features, parse_mode(d["label"]), family)


def build_dataset(
    trace: Sequence[RequestDescriptor],
    table: ProfileTable,
    constraints: ConstraintSet = ConstraintSet(),
    labeler: Optional[Policy] = None,
) -> list[DatasetRow]:
    """One row per request, labelled by the oracle over the five classes (or by `labeler`)."""
    rows = []
    for req in trace:
        if req.workload_tag is None:
            raise DomainError(f"request {req.request_id} has no workload tag; datasets need families")
        family = req.workload_tag
        if labeler is None:
            label = route_oracle(req, family, table, constraints, ORACLE_CLASSES).mode
        else:
            label = labeler.decide(req).mode
        rows.append(DatasetRow(extract_features(req), label, family))
    return rows


def write_dataset(rows: Sequence[DatasetRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row.to_dict()) + "\n")


def read_dataset(path) -> list[DatasetRow]:
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if line.strip():
            try:
                rows.append(DatasetRow.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise DomainError(f"{path}:{lineno}: {exc}") from exc
    return rows


def to_arrays(rows: Sequence[DatasetRow]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([r.features.as_tuple() for r in rows], dtype=float).reshape(len(rows), N_FEATURES)
    y = np.array([_CLASS_INDEX[r.label] for r in rows], dtype=np.int64)
    return X, y


def stratified_split(rows: Sequence[DatasetRow], test_fraction: float = 0.2, seed: int = 0):
    """Seeded per-label split; returns (train, test) preserving original row order."""
    rng = np.random.default_rng(seed)
    test_idx = set()
    for cls in ORACLE_CLASSES:
        idx = [i for i, r in enumerate(rows) if r.label is cls]
        if not idx:
            continue
        n_test = int(round(len(idx) * test_fraction))
        test_idx.update(int(i) for i in rng.permutation(idx)[:n_test])
    train = [r for i, r in enumerate(rows) if i not in test_idx]
    test = [r for i, r in enumerate(rows) if i in test_idx]
    return train, test


def _argmax_first(values) -> int:
    """Index of the largest value; ties go to the earliest class in the fixed order."""
    best, best_i = None, 0
    for i, v in enumerate(values):
        if best is None or v > best:
            best, best_i = v, i
    return best_i


# --- CART decision tree ------------------------------------------------------------------------


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.dot(p, p))


@dataclass
class DecisionTreeModel:
    """Flat node arrays; feature == -1 marks a leaf. Left branch takes x <= threshold."""

    feature: list
    threshold: list
    left: list
    right: list
    counts: list
    max_depth: int
    min_samples_split: int

    kind = "tree"

    def __post_init__(self):
        self._leaf_class = [_argmax_first(c) for c in self.counts]

    def depth(self) -> int:
        def walk(node):
            if self.feature[node] < 0:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))

        return walk(0)

    def leaf_for(self, x) -> int:
        node = 0
        feature, threshold = self.feature, self.threshold
        while feature[node] >= 0:
            node = self.left[node] if x[feature[node]] <= threshold[node] else self.right[node]
        return node

    def predict_index(self, x) -> int:
        return self._leaf_class[self.leaf_for(x)]

    def predict(self, features: FeatureVector) -> InferenceMode:
        return ORACLE_CLASSES[self.predict_index(np.asarray(features.as_tuple(), dtype=float))]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "counts": self.counts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTreeModel":
        return cls(
            [int(v) for v in d["feature"]],
            [float(v) for v in d["threshold"]],
            [int(v) for v in d["left"]],
            [int(v) for v in d["right"]],
            [[int(c) for c in row] for row in d["counts"]],
            int(d["max_depth"]),
            int(d["min_samples_split"]),
        )


def _best_split(X, y, idx, feature_ids, rng):
    """Lowest weighted-Gini threshold split over the given features, or None."""
    n = len(idx)
    onehot = np.zeros((n, N_CLASSES))
    onehot[np.arange(n), y[idx]] = 1.0
    total = onehot.sum(axis=0)
    candidates = []
    best = math.inf
    for f in feature_ids:
        values = X[idx, f]
        order = np.argsort(values, kind="stable")
        v = values[order]
        left_counts = np.cumsum(onehot[order], axis=0)[:-1]
        # Only cut between distinct neighbouring values.
        cut = np.nonzero(v[1:] > v[:-1])[0]
        if cut.size == 0:
            continue
        lc = left_counts[cut]
        rc = total - lc
        nl = lc.sum(axis=1)
        nr = rc.sum(axis=1)
        gl = 1.0 - np.einsum("ij,ij->i", lc, lc) / nl**2
        gr = 1.0 - np.einsum("ij,ij->i", rc, rc) / nr**2
        weighted = (nl * gl + nr * gr) / n
        for k in range(cut.size):
            w = float(weighted[k])
            if w < best - 1e-12:
                best = w
                candidates = [(f, cut[k], v)]
            elif abs(w - best) <= 1e-12:
                candidates.append((f, cut[k], v))
    if not candidates:
        return None
    pick = candidates[0] if len(candidates) == 1 else candidates[int(rng.integers(len(candidates)))]
    f, k, v = pick
    threshold = float((v[k] + v[k + 1]) / 2.0)
    return f, threshold, best


def _fit_tree(X, y, max_depth, min_samples_split, rng, features_per_split=None) -> DecisionTreeModel:
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[idx], minlength=N_CLASSES).astype(int).tolist())
        return len(feature) - 1

    def grow(idx, depth):
        node = new_node(idx)
        node_counts = counts[node]
        if depth >= max_depth or len(idx) < min_samples_split or max(node_counts) == len(idx):
            return node
        if features_per_split is None or features_per_split >= N_FEATURES:
            feature_ids = range(N_FEATURES)
        else:
            feature_ids = sorted(rng.choice(N_FEATURES, size=features_per_split, replace=False).tolist())
        split = _best_split(X, y, idx, feature_ids, rng)
        if split is None:
            return node
        f, thr, child_gini = split
        if child_gini > gini(node_counts) + 1e-12:
            return node
        mask = X[idx, f] <= thr
        feature[node] = int(f)
        threshold[node] = thr
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return DecisionTreeModel(feature, threshold, left, right, counts, max_depth, min_samples_split)


def train_tree(
    rows: Sequence[DatasetRow], max_depth: int = 6, min_samples_split: int = 2, seed: int = 0
) -> DecisionTreeModel:
    if not rows:
        raise TrainingError("cannot train on an empty dataset")
    if max_depth < 0 or min_samples_split < 2:
        raise TrainingError("need max_depth >= 0 and min_samples_split >= 2")
    X, y = to_arrays(rows)
    return _fit_tree(X, y, max_depth, min_samples_split, np.random.default_rng(seed))


# --- random forest ------------------------------------------------------------------------------


@dataclass
class RandomForestModel:
    trees: list
    n_trees: int
    features_per_split: int
    seed: int

    kind = "forest"

    def predict_index(self, x) -> int:
        votes = [0] * N_CLASSES
        for tree in self.trees:
            votes[tree.predict_index(x)] += 1
        return _argmax_first(votes)

    def predict(self, features: FeatureVector) -> InferenceMode:
        return ORACLE_CLASSES[self.predict_index(np.asarray(features.as_tuple(), dtype=float))]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_trees": self.n_trees,
            "features_per_split": self.features_per_split,
            "seed": self.seed,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForestModel":
        return cls(
            [DecisionTreeModel.from_dict(t) for t in d["trees"]],
            int(d["n_trees"]),
            int(d["features_per_split"]),
            int(d["seed"]),
        )


def _tree_generators(seed: int, n_trees: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_trees)]


def bootstrap_indices(seed: int, n_trees: int, n_rows: int) -> list[np.ndarray]:
    """The resample each forest tree is fit on (drawn first from that tree's generator)."""
    return [g.integers(0, n_rows, size=n_rows) for g in _tree_generators(seed, n_trees)]


def train_forest(
    rows: Sequence[DatasetRow],
    n_trees: int = 50,
    features_per_split: Optional[int] = None,
    seed: int = 0,
    max_depth: int = 6,
    min_samples_split: int = 2,
) -> RandomForestModel:
    if not rows:
        raise TrainingError("cannot train on an empty dataset")
    if n_trees < 1:
        raise TrainingError("n_trees must be >= 1")
    if features_per_split is None:
        features_per_split = int(math.isqrt(N_FEATURES))
    if not 1 <= features_per_split <= N_FEATURES:
        raise TrainingError(f"features_per_split must be in [1, {N_FEATURES}]")
    X, y = to_arrays(rows)
    n = len(y)
    trees = []
    for gen in _tree_generators(seed, n_trees):
        boot = gen.integers(0, n, size=n)
        trees.append(_fit_tree(X[boot], y[boot], max_depth, min_samples_split, gen, features_per_split))
    return RandomForestModel(trees, n_trees, features_per_split, seed)


# --- multinomial logistic regression --------------------------------------------------------------


@dataclass
class LogisticModel:
    weights: np.ndarray  # (classes, features)
    bias: np.ndarray  # (classes,)
    feature_means: np.ndarray
    feature_stds: np.ndarray
    loss_history: tuple = ()

    kind = "logistic"

    def standardize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.feature_means) / self.feature_stds

    def probabilities(self, X) -> np.ndarray:
        return _softmax(np.atleast_2d(self.standardize(X)) @ self.weights.T + self.bias)

    def predict_index(self, x) -> int:
        scores = self.weights @ ((x - self.feature_means) / self.feature_stds) + self.bias
        return int(np.argmax(scores))  # first maximum wins: fixed class order

    def predict(self, features: FeatureVector) -> InferenceMode:
        return ORACLE_CLASSES[self.predict_index(np.asarray(features.as_tuple(), dtype=float))]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "feature_means": self.feature_means.tolist(),
            "feature_stds": self.feature_stds.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        return cls(
            np.array(d["weights"], dtype=float).reshape(N_CLASSES, N_FEATURES),
            np.array(d["bias"], dtype=float),
            np.array(d["feature_means"], dtype=float),
            np.array(d["feature_stds"], dtype=float),
        )


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def logistic_loss_and_grad(weights, bias, Xs, y, l2):
    """Mean cross-entropy plus (l2/2)*||W||^2 on standardized inputs; bias is unpenalized."""
    n = Xs.shape[0]
    logits = Xs @ weights.T + bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted - log_norm[:, None]
    loss = -log_p[np.arange(n), y].mean() + 0.5 * l2 * float(np.sum(weights**2))
    residual = np.exp(log_p)
    residual[np.arange(n), y] -= 1.0
    grad_w = residual.T @ Xs / n + l2 * weights
    grad_b = residual.mean(axis=0)
    return float(loss), grad_w, grad_b


def standardization(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds = np.where(stds > 0, stds, 1.0)
    return means, stds


def train_logistic(
    rows: Sequence[DatasetRow], learning_rate: float = 0.1, iterations: int = 2000, l2: float = 1e-3
) -> LogisticModel:
    if not rows:
        raise TrainingError("cannot train on an empty dataset")
    X, y = to_arrays(rows)
    if len(set(y.tolist())) < 2:
        raise TrainingError("logistic regression needs at least two classes present")
    means, stds = standardization(X)
    Xs = (X - means) / stds
    W = np.zeros((N_CLASSES, N_FEATURES))
    b = np.zeros(N_CLASSES)
    history = []
    loss, gw, gb = logistic_loss_and_grad(W, b, Xs, y, l2)
    history.append(loss)
    for _ in range(iterations):
        W_next = W - learning_rate * gw
        b_next = b - learning_rate * gb
        new_loss, new_gw, new_gb = logistic_loss_and_grad(W_next, b_next, Xs, y, l2)
        if not math.isfinite(new_loss):
            raise TrainingError("loss became non-finite")
        if new_loss > loss + 1e-12 * max(1.0, abs(loss)):
            raise TrainingError(f"loss rose from {loss:.6g} to {new_loss:.6g}; learning rate too large")
        W, b, loss, gw, gb = W_next, b_next, new_loss, new_gw, new_gb
        history.append(loss)
    return LogisticModel(W, b, means, stds, tuple(history))


# --- shared prediction / evaluation ---------------------------------------------------------------

Model = Union[DecisionTreeModel, RandomForestModel, LogisticModel]
MODEL_KINDS = {"tree": DecisionTreeModel, "forest": RandomForestModel, "logistic": LogisticModel}


def predict(model: Model, features: FeatureVector) -> InferenceMode:
    return model.predict(features)


@dataclass(frozen=True)
class ConfusionResult:
    counts: np.ndarray  # counts[true][predicted], rows/cols in ORACLE_CLASSES order
    accuracy: float


def confusion_from_labels(true: Sequence[InferenceMode], predicted: Sequence[InferenceMode]) -> ConfusionResult:
    if not true:
        raise DomainError("confusion matrix needs a nonempty evaluation set")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for t, p in zip(true, predicted, strict=True):
        counts[_CLASS_INDEX[t], _CLASS_INDEX[p]] += 1
    return ConfusionResult(counts, float(np.trace(counts) / counts.sum()))


def confusion_matrix(model: Model, rows: Sequence[DatasetRow]) -> ConfusionResult:
    return confusion_from_labels([r.label for r in rows], [model.predict(r.features) for r in rows])


def accuracy(model: Model, rows: Sequence[DatasetRow]) -> float:
    return confusion_matrix(model, rows).accuracy


def write_confusion_csv(result: ConfusionResult, path) -> None:
    lines = ["true\\predicted," + ",".join(m.value for m in ORACLE_CLASSES)]
    for cls, row in zip(ORACLE_CLASSES, result.counts):
        lines.append(cls.value + "," + ",".join(str(int(c)) for c in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_confusion_csv(path) -> ConfusionResult:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")[1:]
    if header != [m.value for m in ORACLE_CLASSES]:
        raise DomainError(f"{path}: unexpected confusion header")
    counts = np.array([[int(c) for c in line.split(",")[1:]] for line in lines[1:]], dtype=np.int64)
    return ConfusionResult(counts, float(np.trace(counts) / counts.sum()) if counts.sum() else float("nan"))


def save_model(model: Model, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_model(path, expected_kind: Optional[str] = None) -> Model:
    path = Path(path)
    if not path.is_file():
        raise DomainError(f"model file not found: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    kind = data.get("kind")
    if kind not in MODEL_KINDS:
        raise DomainError(f"{path}: unknown model kind {kind!r}")
    if expected_kind is not None and kind != expected_kind:
        raise DomainError(f"{path}: expected a {expected_kind} model, found {kind}")
    return MODEL_KINDS[kind].from_dict(data)


class LearnedPolicy(Policy):
    """Routes with a trained model; feature extraction plus prediction is charged as overhead."""

    def __init__(self, model: Model, name: Optional[str] = None):
        self.model = model
        self.name = name or model.kind

    def decide(self, request: RequestDescriptor) -> RoutingDecision:
        start = time.perf_counter_ns()
        mode = self.model.predict(extract_features(request))
        return RoutingDecision(mode, Reason.LEARNED_VOTE, (time.perf_counter_ns() - start) / 1e6)
