"""Descriptive analytics over cleaned scores: factor structure and summaries.

PCA runs on standardized features (the five parameters have
incommensurate units, so raw covariance would be dominated by the pause
duration's scale). The symmetric eigenproblem is solved with cyclic
Jacobi rotations; at 5x5 this is exact to machine precision and fully
deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError
from .model import (DIMENSIONS, FEATURE_NAMES, FeatureVector, Grid, MosTable,
                    RaterProfile, RatingRecord, to_feature_vector)
from .stats import pearson  # noqa: F401  (part of this module's surface)


class TooFewSamplesError(DomainError):
    code = "too-few-samples"


class UnknownDimensionError(DomainError):
    code = "unknown-dimension"


class UnknownRaterError(DomainError):
    code = "unknown-rater"


MBTI_AXES = {"E/I": 0, "S/N": 1, "T/F": 2, "J/P": 3}


def _sample_matrix(samples: Sequence) -> np.ndarray:
    rows = []
    for s in samples:
        rows.append(s.values if isinstance(s, FeatureVector) else tuple(s))
    return np.asarray(rows, dtype=float)


def covariance(samples: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Population covariance (divide by n) and mean of the samples."""
    x = _sample_matrix(samples)
    if x.shape[0] < 2:
        raise TooFewSamplesError(f"need >= 2 samples, got {x.shape[0]}")
    mean = x.mean(axis=0)
    centered = x - mean
    sigma = centered.T @ centered / x.shape[0]
    return sigma, mean


def jacobi_eigh(matrix: np.ndarray,
                tol: float = 1e-12,
                max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps run until the off-diagonal Frobenius norm falls below
    ``tol`` (relative to the matrix scale). Returns eigenvalues in
    descending order and the matching eigenvectors as rows, each signed
    so its largest-magnitude entry is non-negative.
    """
    a = np.array(matrix, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, atol=1e-10):
        raise DomainError("matrix must be square and symmetric", code="bad-matrix")
    a = (a + a.T) / 2.0
    v = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(a)))

    def offdiag(m):
        off = m - np.diag(np.diag(m))
        return float(np.linalg.norm(off))

    for _ in range(max_sweeps):
        if offdiag(a) < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                # hypot keeps theta^2 from overflowing for tiny apq
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p, rot_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * rot_p - s * rot_q
                a[:, q] = s * rot_p + c * rot_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq

    eigenvalues = np.diag(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    vectors = v[:, order].T.copy()
    for i in range(n):
        lead = int(np.argmax(np.abs(vectors[i])))
        if vectors[i, lead] < 0:
            vectors[i] = -vectors[i]
    return eigenvalues, vectors


@dataclass
class PcaResult:
    """Factor decomposition of standardized samples.

    ``components[i]`` is the i-th loading vector over the features in
    their fixed order; ``scores[:, i]`` are the matching projections
    (X_std - mean(X_std)) @ components[i].
    """

    mean: np.ndarray                      # original feature means
    scale: np.ndarray                     # original population stds (0 -> constant feature)
    covariance: np.ndarray                # covariance of the standardized features
    eigenvalues: np.ndarray               # descending
    components: np.ndarray                # rows are loading vectors
    explained_variance_ratio: np.ndarray
    scores: np.ndarray                    # per-sample projections

    def to_dict(self) -> dict:
        return {
            "feature_names": list(FEATURE_NAMES) if len(self.mean) == len(FEATURE_NAMES) else None,
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "covariance": self.covariance.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "components": self.components.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
            "n_samples": int(self.scores.shape[0]),
        }


def standardize(samples: Sequence) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center and scale columns to unit population variance.

    Constant columns (zero variance) are mapped to all-zero columns.
    """
    x = _sample_matrix(samples)
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    safe = np.where(scale == 0.0, 1.0, scale)
    return (x - mean) / safe, mean, scale


def pca(samples: Sequence) -> PcaResult:
    """Principal components of the standardized samples."""
    x = _sample_matrix(samples)
    if x.shape[0] < 2:
        raise TooFewSamplesError(f"need >= 2 samples, got {x.shape[0]}")
    standardized, mean, scale = standardize(samples)
    sigma, _ = covariance(standardized)
    eigenvalues, components = jacobi_eigh(sigma)
    total = float(eigenvalues.sum())
    if total <= 0:
        raise DomainError("all features are constant; nothing to decompose",
                          code="degenerate-input")
    ratio = eigenvalues / total
    centered = standardized - standardized.mean(axis=0)
    scores = centered @ components.T
    return PcaResult(mean=mean, scale=scale, covariance=sigma,
                     eigenvalues=eigenvalues, components=components,
                     explained_variance_ratio=ratio, scores=scores)


def records_to_samples(records: Iterable[RatingRecord]) -> list[FeatureVector]:
    """Per-rating feature vectors (equal weight per record)."""
    return [to_feature_vector(r.content, r.qos) for r in records]


# ---------------------------------------------------------------------------
# correlation structure of the three rating dimensions


@dataclass
class CorrelationMatrix:
    dims: tuple[str, ...]
    values: np.ndarray

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "values": self.values.tolist()}


def dimension_correlations(mos: MosTable) -> CorrelationMatrix:
    """Pairwise Pearson correlation of per-condition MOS across dimensions."""
    conditions = [c for c in mos.conditions()
                  if all((c, dim) in mos.entries for dim in DIMENSIONS)]
    conditions.sort()
    if len(conditions) < 2:
        raise TooFewSamplesError("need >= 2 conditions scored in all dimensions")
    columns = {dim: [mos.entries[(c, dim)].mos_z for c in conditions] for dim in DIMENSIONS}
    values = np.eye(len(DIMENSIONS))
    for i, di in enumerate(DIMENSIONS):
        for j in range(i + 1, len(DIMENSIONS)):
            r = pearson(columns[di], columns[DIMENSIONS[j]])
            values[i, j] = values[j, i] = r
    return CorrelationMatrix(dims=DIMENSIONS, values=values)


# ---------------------------------------------------------------------------
# MBTI grouping


def group_by_mbti(records: Sequence[RatingRecord], axis: str,
                  profiles: Mapping[str, RaterProfile]) -> dict[str, list[RatingRecord]]:
    """Partition records by the rater's letter on one MBTI axis.

    ``axis`` is one of E/I, S/N, T/F, J/P. Both letters appear as keys
    even when empty; the subsets are disjoint, exhaustive, and preserve
    record order.
    """
    if axis not in MBTI_AXES:
        raise DomainError(f"axis must be one of {sorted(MBTI_AXES)}, got {axis!r}",
                          code="bad-axis")
    position = MBTI_AXES[axis]
    letters = axis.split("/")
    out: dict[str, list[RatingRecord]] = {letter: [] for letter in letters}
    for record in records:
        profile = profiles.get(record.rater_id)
        if profile is None:
            raise UnknownRaterError(f"no profile for rater {record.rater_id!r}")
        out[profile.mbti[position]].append(record)
    return out


# ---------------------------------------------------------------------------
# topic tiers


TIER_HIGH, TIER_MID, TIER_LOW = "high", "mid", "low"


def assign_tier(mos_value: float) -> str:
    # boundaries 2.0 and 4.0 belong to the mid tier
    if mos_value > 4.0:
        return TIER_HIGH
    if mos_value < 2.0:
        return TIER_LOW
    return TIER_MID


def topic_tiers(samples: Iterable[tuple[str, float]]) -> dict[str, dict[str, dict]]:
    """Split (category, mos) samples into quality tiers, mean per category.

    Tiers: high (mos > 4.0), mid (2.0 <= mos <= 4.0), low (mos < 2.0).
    Empty tiers are absent from the result.
    """
    buckets: dict[str, dict[str, list[float]]] = {}
    for category, value in samples:
        buckets.setdefault(assign_tier(value), {}).setdefault(category, []).append(value)
    return {
        tier: {cat: {"mean_mos": float(np.mean(vals)), "n": len(vals)}
               for cat, vals in sorted(cats.items())}
        for tier, cats in buckets.items()
    }


# ---------------------------------------------------------------------------
# per-parameter distributions


def param_id(key: str, value: float) -> str:
    """Short level labels: D0/D1, A0/A1, S0.05, P0.25, T3."""
    if key == "density":
        return f"D{int(value)}"
    if key == "accuracy":
        return f"A{int(value)}"
    if key == "speed":
        return f"S{value:g}"
    if key == "pause_pos":
        return f"P{value:.1f}" if value == int(value) else f"P{value:g}"
    if key == "pause_dur":
        return f"T{value:g}"
    raise UnknownDimensionError(f"unknown grouping key {key!r}")


def five_number_summary(values: Sequence[float]) -> dict[str, float]:
    """Min, nearest-rank quartiles, and max."""
    s = sorted(values)
    n = len(s)

    def at(p: float) -> float:
        return s[max(1, math.ceil(p * n)) - 1]

    return {"min": s[0], "q1": at(0.25), "median": at(0.5), "q3": at(0.75), "max": s[-1]}


def distribution_export(mos: MosTable, key: str, dimension: str = "overall",
                        grid: Grid | None = None) -> dict:
    """Per-level MOS samples and five-number summaries for one parameter.

    Levels are labelled with their short param IDs. When a grid is
    supplied, levels the grid declares but the data never reaches are
    reported as warnings.
    """
    if key not in FEATURE_NAMES:
        raise UnknownDimensionError(f"grouping key must be one of {FEATURE_NAMES}, got {key!r}")
    if dimension not in DIMENSIONS:
        raise UnknownDimensionError(f"dimension must be one of {DIMENSIONS}, got {dimension!r}")

    def level_of(cond) -> float:
        fv = to_feature_vector(cond.content, cond.qos)
        return fv.values[FEATURE_NAMES.index(key)]

    groups: dict[float, list[float]] = {}
    for (cond, dim), entry in mos.entries.items():
        if dim != dimension:
            continue
        groups.setdefault(level_of(cond), []).append(entry.mos_scaled)

    warnings: list[str] = []
    if grid is not None:
        expected = {
            "density": {float(c.density) for c in grid.content_configs},
            "accuracy": {float(c.accuracy) for c in grid.content_configs},
            "speed": set(grid.speeds),
            "pause_pos": set(grid.pause_positions),
            "pause_dur": set(grid.pause_durations),
        }[key]
        for missing in sorted(expected - set(groups)):
            warnings.append(f"level {param_id(key, missing)} has no samples")

    levels = {}
    for value in sorted(groups):
        samples = sorted(groups[value])
        levels[param_id(key, value)] = {
            "samples": samples,
            "summary": five_number_summary(samples),
        }
    return {"key": key, "dimension": dimension, "levels": levels, "warnings": warnings}
