"""Regression from the five stream parameters to subjective scores.

Three self-contained model families (closed-form ridge regression,
k-nearest-neighbours, a bagged regression-tree ensemble), the
category-held-out split, rank-based evaluation metrics, and the
drop-one-feature ablation protocol.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError
from .model import (CATEGORIES, FEATURE_NAMES, FeatureVector, PipelineParams,
                    RatingRecord, to_feature_vector)
from .pipeline import (filter_inconsistent_raters, filter_outlier_raters,
                       run_pipeline, zscore_normalize)
from .stats import DegenerateInputError, kendall, pearson, rmse, spearman

FULL_MASK = (True,) * len(FEATURE_NAMES)

FAMILIES = ("linear-ridge", "knn", "tree-ensemble")

DEFAULT_HYPER = {
    "linear-ridge": {"ridge": 1e-6},
    "knn": {"k": 5},
    "tree-ensemble": {"n_trees": 100, "max_depth": 8, "min_samples_split": 2,
                      "max_features": None},
}


class EmptyTrainError(DomainError):
    code = "empty-train"


class SingularSystemError(DomainError):
    code = "singular-system"


class MaskMismatchError(DomainError):
    code = "mask-mismatch"


class DegenerateTestError(DomainError):
    code = "degenerate-test"


class CategoryTooSmallError(DomainError):
    code = "category-too-small"


# ---------------------------------------------------------------------------
# dataset


@dataclass(frozen=True)
class DatasetRow:
    features: FeatureVector
    target: float
    question_id: str
    category: str
    dimension: str


@dataclass
class Dataset:
    """Feature/target rows plus the active feature mask.

    Masked features stay on the rows for bookkeeping; they are simply
    excluded from the model's input matrix.
    """

    rows: list[DatasetRow]
    feature_mask: tuple[bool, ...] = FULL_MASK
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.feature_mask) != len(FEATURE_NAMES):
            raise DomainError("feature_mask must cover all five features", code="bad-mask")
        for row in self.rows:
            if row.category not in CATEGORIES:
                raise DomainError(f"unknown category {row.category!r}", code="unknown-category")

    def matrix(self) -> np.ndarray:
        cols = [i for i, keep in enumerate(self.feature_mask) if keep]
        return np.array([[row.features.values[i] for i in cols] for row in self.rows],
                        dtype=float).reshape(len(self.rows), len(cols))

    def targets(self) -> np.ndarray:
        return np.array([row.target for row in self.rows], dtype=float)

    def with_mask(self, mask: Sequence[bool]) -> "Dataset":
        return Dataset(rows=self.rows, feature_mask=tuple(bool(m) for m in mask),
                       meta=dict(self.meta))

    def question_ids(self) -> set[str]:
        return {row.question_id for row in self.rows}


def build_dataset(records: Sequence[RatingRecord],
                  dimension: str = "overall",
                  target: str = "z",
                  params: PipelineParams | None = None) -> Dataset:
    """Assemble a training table from a ratings store.

    target='z' keeps one row per surviving rating with its standardized
    score; target='mos' aggregates to one row per condition with the
    cleaned, rescaled MOS. Both run the full cleaning chain first.
    """
    if target not in ("z", "mos"):
        raise DomainError(f"target must be 'z' or 'mos', got {target!r}", code="bad-target")
    params = params or PipelineParams()
    category_of = {r.question_id: r.category for r in records}
    rows: list[DatasetRow] = []
    if target == "z":
        normalized = zscore_normalize(records)
        valid, _ = filter_outlier_raters(normalized, params.z_outlier_threshold)
        final, _, _ = filter_inconsistent_raters(normalized, valid, params.srcc_threshold)
        for item in sorted(normalized,
                           key=lambda n: (n.rater_id, n.condition, n.dimension)):
            if item.dimension != dimension or item.rater_id not in final:
                continue
            cond = item.condition
            rows.append(DatasetRow(
                features=to_feature_vector(cond.content, cond.qos),
                target=item.z,
                question_id=cond.question_id,
                category=category_of[cond.question_id],
                dimension=dimension,
            ))
    else:
        table, _report = run_pipeline(records, params)
        for (cond, dim) in sorted(table.entries):
            if dim != dimension:
                continue
            rows.append(DatasetRow(
                features=to_feature_vector(cond.content, cond.qos),
                target=table.entries[(cond, dim)].mos_scaled,
                question_id=cond.question_id,
                category=category_of[cond.question_id],
                dimension=dimension,
            ))
    return Dataset(rows=rows, meta={"dimension": dimension, "target": target})


def split_by_category(dataset: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Hold out one seeded question per category; all its rows form the test set."""
    questions: dict[str, list[str]] = {}
    for row in dataset.rows:
        questions.setdefault(row.category, [])
        if row.question_id not in questions[row.category]:
            questions[row.category].append(row.question_id)
    for category in sorted(questions):
        if len(questions[category]) < 2:
            raise CategoryTooSmallError(
                f"category {category!r} has {len(questions[category])} question(s); need >= 2")
    rng = np.random.default_rng(seed)
    held_out: set[str] = set()
    for category in sorted(questions):
        qids = sorted(questions[category])
        held_out.add(qids[int(rng.integers(0, len(qids)))])
    train_rows = [r for r in dataset.rows if r.question_id not in held_out]
    test_rows = [r for r in dataset.rows if r.question_id in held_out]
    train = Dataset(train_rows, dataset.feature_mask, dict(dataset.meta))
    test = Dataset(test_rows, dataset.feature_mask, dict(dataset.meta))
    overlap = train.question_ids() & test.question_ids()
    assert not overlap, f"split hygiene violated: {overlap}"
    return train, test


# ---------------------------------------------------------------------------
# model families


class RidgeLinear:
    """Closed-form least squares with an L2 penalty on the weights."""

    family = "linear-ridge"

    def __init__(self, ridge: float = 1e-6):
        self.ridge = float(ridge)
        self.coef: np.ndarray | None = None

    def fit(self, x: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> None:
        n, d = x.shape
        design = np.hstack([np.ones((n, 1)), x])
        gram = design.T @ design
        penalty = np.eye(d + 1) * self.ridge
        penalty[0, 0] = 0.0  # intercept is not shrunk
        try:
            self.coef = np.linalg.solve(gram + penalty, design.T @ y)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(f"degenerate design with ridge={self.ridge}") from exc

    def predict(self, x: np.ndarray) -> np.ndarray:
        design = np.hstack([np.ones((x.shape[0], 1)), x])
        return design @ self.coef

    def to_dict(self) -> dict:
        return {"ridge": self.ridge, "coef": self.coef.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RidgeLinear":
        obj = cls(ridge=d["ridge"])
        obj.coef = np.array(d["coef"], dtype=float)
        return obj


class KnnRegressor:
    """Mean of the k nearest training targets (Euclidean, standardized features)."""

    family = "knn"

    def __init__(self, k: int = 5):
        self.k = int(k)
        self.x: np.ndarray | None = None
        self.y: np.ndarray | None = None
        self.mean: np.ndarray | None = None
        self.scale: np.ndarray | None = None

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale

    def fit(self, x: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> None:
        self.mean = x.mean(axis=0)
        scale = x.std(axis=0)
        self.scale = np.where(scale == 0.0, 1.0, scale)
        self.x = self._standardize(x)
        self.y = np.asarray(y, dtype=float)

    def predict(self, x: np.ndarray) -> np.ndarray:
        xs = self._standardize(x)
        k = min(self.k, len(self.y))
        out = np.empty(xs.shape[0])
        for i, row in enumerate(xs):
            d2 = np.sum((self.x - row) ** 2, axis=1)
            nearest = np.argsort(d2, kind="stable")[:k]  # index order breaks ties
            out[i] = float(self.y[nearest].mean())
        return out

    def to_dict(self) -> dict:
        return {"k": self.k, "x": self.x.tolist(), "y": self.y.tolist(),
                "mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "KnnRegressor":
        obj = cls(k=d["k"])
        obj.x = np.array(d["x"], dtype=float)
        obj.y = np.array(d["y"], dtype=float)
        obj.mean = np.array(d["mean"], dtype=float)
        obj.scale = np.array(d["scale"], dtype=float)
        return obj


def _best_split(x: np.ndarray, y: np.ndarray, feature_ids: np.ndarray):
    """Pick the (feature, threshold) minimizing the children's summed SSE."""
    n = len(y)
    best = None  # (sse, feature, threshold)
    for f in feature_ids:
        order = np.argsort(x[:, f], kind="stable")
        v = x[order, f]
        t = y[order]
        csum = np.cumsum(t)
        csq = np.cumsum(t * t)
        left_n = np.arange(1, n)
        valid = v[1:] > v[:-1]
        if not np.any(valid):
            continue
        sum_l = csum[:-1]
        sq_l = csq[:-1]
        sse_l = sq_l - sum_l ** 2 / left_n
        sum_r = csum[-1] - sum_l
        sq_r = csq[-1] - sq_l
        sse_r = sq_r - sum_r ** 2 / (n - left_n)
        total = np.where(valid, sse_l + sse_r, np.inf)
        i = int(np.argmin(total))
        if best is None or total[i] < best[0]:
            best = (float(total[i]), int(f), float((v[i] + v[i + 1]) / 2.0))
    if best is None:
        return None
    return best[1], best[2]


def _grow_tree(x: np.ndarray, y: np.ndarray, rng: np.random.Generator,
               depth: int, max_depth: int, min_samples_split: int,
               max_features: int) -> dict:
    if depth >= max_depth or len(y) < min_samples_split or np.all(y == y[0]):
        return {"value": float(y.mean())}
    d = x.shape[1]
    if max_features < d:
        feature_ids = np.sort(rng.choice(d, size=max_features, replace=False))
    else:
        feature_ids = np.arange(d)
    split = _best_split(x, y, feature_ids)
    if split is None:
        return {"value": float(y.mean())}
    f, threshold = split
    mask = x[:, f] <= threshold
    return {
        "feature": f,
        "threshold": threshold,
        "left": _grow_tree(x[mask], y[mask], rng, depth + 1, max_depth,
                           min_samples_split, max_features),
        "right": _grow_tree(x[~mask], y[~mask], rng, depth + 1, max_depth,
                            min_samples_split, max_features),
    }


def _tree_apply(node: dict, x: np.ndarray, out: np.ndarray, idx: np.ndarray) -> None:
    if "value" in node:
        out[idx] = node["value"]
        return
    mask = x[idx, node["feature"]] <= node["threshold"]
    _tree_apply(node["left"], x, out, idx[mask])
    _tree_apply(node["right"], x, out, idx[~mask])


class ForestRegressor:
    """Bagged regression trees with variance-reduction splits.

    Each tree sees a bootstrap sample of the rows and a random feature
    subset per split; predictions average over trees.
    """

    family = "tree-ensemble"

    def __init__(self, n_trees: int = 100, max_depth: int = 8,
                 min_samples_split: int = 2, max_features: int | None = None):
        self.n_trees = int(n_trees)
        self.max_depth = int(max_depth)
        self.min_samples_split = int(min_samples_split)
        self.max_features = max_features
        self.trees: list[dict] = []

    def fit(self, x: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> None:
        n, d = x.shape
        max_features = self.max_features
        if max_features is None:
            max_features = max(1, int(np.ceil(2 * d / 3)))
        max_features = min(max_features, d)
        self.trees = []
        for _ in range(self.n_trees):
            idx = rng.integers(0, n, size=n)
            self.trees.append(_grow_tree(x[idx], y[idx], rng, 0, self.max_depth,
                                         self.min_samples_split, max_features))

    def predict(self, x: np.ndarray) -> np.ndarray:
        acc = np.zeros(x.shape[0])
        idx = np.arange(x.shape[0])
        buf = np.empty(x.shape[0])
        for tree in self.trees:
            _tree_apply(tree, x, buf, idx)
            acc += buf
        return acc / len(self.trees)

    def to_dict(self) -> dict:
        return {"n_trees": self.n_trees, "max_depth": self.max_depth,
                "min_samples_split": self.min_samples_split,
                "max_features": self.max_features, "trees": self.trees}

    @classmethod
    def from_dict(cls, d: dict) -> "ForestRegressor":
        obj = cls(n_trees=d["n_trees"], max_depth=d["max_depth"],
                  min_samples_split=d["min_samples_split"],
                  max_features=d["max_features"])
        obj.trees = d["trees"]
        return obj


_REGRESSORS = {
    "linear-ridge": RidgeLinear,
    "knn": KnnRegressor,
    "tree-ensemble": ForestRegressor,
}


# ---------------------------------------------------------------------------
# training, prediction, evaluation


@dataclass
class PredictorModel:
    family: str
    feature_mask: tuple[bool, ...]
    regressor: object
    fingerprint: dict

    def predict_matrix(self, x: np.ndarray) -> np.ndarray:
        return self.regressor.predict(x)


def train(family: str, dataset: Dataset,
          hyper: Mapping | None = None, seed: int = 0) -> PredictorModel:
    """Fit one model family on the dataset's unmasked features."""
    if family not in FAMILIES:
        raise DomainError(f"family must be one of {FAMILIES}, got {family!r}",
                          code="unknown-family")
    if not dataset.rows:
        raise EmptyTrainError("training set is empty")
    settings = dict(DEFAULT_HYPER[family])
    settings.update(hyper or {})
    regressor = _REGRESSORS[family](**settings)
    rng = np.random.default_rng(seed)
    regressor.fit(dataset.matrix(), dataset.targets(), rng)
    fingerprint = {
        "seed": seed,
        "n_rows": len(dataset.rows),
        "dimension": dataset.meta.get("dimension"),
        "target": dataset.meta.get("target"),
    }
    return PredictorModel(family=family, feature_mask=dataset.feature_mask,
                          regressor=regressor, fingerprint=fingerprint)


def _feature_row(model: PredictorModel, features) -> np.ndarray:
    unmasked = [name for name, keep in zip(FEATURE_NAMES, model.feature_mask) if keep]
    if isinstance(features, FeatureVector):
        if model.feature_mask != FULL_MASK:
            raise MaskMismatchError(
                f"model uses features {unmasked}; pass a mapping with exactly those keys")
        return np.array([features.values], dtype=float)
    got = sorted(features)
    if got != sorted(unmasked):
        raise MaskMismatchError(f"model expects features {sorted(unmasked)}, got {got}")
    return np.array([[float(features[name]) for name in unmasked]], dtype=float)


def predict(model: PredictorModel, features) -> tuple[float, float]:
    """Predict one configuration; returns (raw, clamped-to-[0, 5])."""
    raw = float(model.predict_matrix(_feature_row(model, features))[0])
    return raw, min(5.0, max(0.0, raw))


def evaluate(model: PredictorModel, dataset: Dataset) -> "MetricsBundle":
    """Rank and error metrics between predictions and targets."""
    if not dataset.rows:
        raise DegenerateTestError("test set is empty")
    if dataset.feature_mask != model.feature_mask:
        raise MaskMismatchError("test set mask differs from the model's mask")
    predictions = model.predict_matrix(dataset.matrix())
    targets = dataset.targets()
    pred_const = bool(np.all(predictions == predictions[0]))
    targ_const = bool(np.all(targets == targets[0]))
    if pred_const and targ_const:
        raise DegenerateTestError("predictions and targets are both constant")

    def guarded(fn) -> float:
        try:
            return fn(predictions, targets)
        except DegenerateInputError:
            return 0.0  # one constant side carries no rank/linear signal

    return MetricsBundle(
        srcc=guarded(spearman),
        plcc=guarded(pearson),
        krcc=guarded(kendall),
        rmse=rmse(predictions, targets),
    )


@dataclass(frozen=True)
class MetricsBundle:
    srcc: float
    plcc: float
    krcc: float
    rmse: float

    def __post_init__(self):
        for name in ("srcc", "plcc", "krcc", "rmse"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"{name} is not finite", code="bad-metrics")
        if self.rmse < 0:
            raise DomainError("rmse must be >= 0", code="bad-metrics")

    def to_dict(self) -> dict:
        return {"srcc": self.srcc, "plcc": self.plcc, "krcc": self.krcc, "rmse": self.rmse}


def ablate(dataset: Dataset, family: str, seed: int,
           hyper: Mapping | None = None) -> dict[str, MetricsBundle]:
    """Retrain with each single feature removed, on one shared split.

    Returns metrics keyed by the dropped feature name plus 'none' for
    the full feature set.
    """
    train_set, test_set = split_by_category(dataset, seed)
    results: dict[str, MetricsBundle] = {}
    masks = [("none", FULL_MASK)]
    for i, name in enumerate(FEATURE_NAMES):
        mask = tuple(j != i for j in range(len(FEATURE_NAMES)))
        masks.append((name, mask))
    for label, mask in masks:
        model = train(family, train_set.with_mask(mask), hyper, seed)
        results[label] = evaluate(model, test_set.with_mask(mask))
    return results


def verify_held_out(model: PredictorModel, records: Sequence[RatingRecord],
                    params: PipelineParams | None = None) -> MetricsBundle:
    """Evaluate a fitted model on a fresh store without retraining."""
    if not records:
        raise DegenerateTestError("no held-out records")
    dataset = build_dataset(records,
                            dimension=model.fingerprint.get("dimension") or "overall",
                            target=model.fingerprint.get("target") or "z",
                            params=params)
    return evaluate(model, dataset.with_mask(model.feature_mask))


# ---------------------------------------------------------------------------
# persistence


def save_model(model: PredictorModel, path: str | Path) -> None:
    payload = {
        "family": model.family,
        "feature_mask": list(model.feature_mask),
        "fingerprint": model.fingerprint,
        "state": model.regressor.to_dict(),
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_model(path: str | Path) -> PredictorModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    regressor = _REGRESSORS[payload["family"]].from_dict(payload["state"])
    return PredictorModel(
        family=payload["family"],
        feature_mask=tuple(bool(m) for m in payload["feature_mask"]),
        regressor=regressor,
        fingerprint=payload["fingerprint"],
    )
