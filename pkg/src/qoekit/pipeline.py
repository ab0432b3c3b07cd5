"""Rating-cleaning chain: per-rater standardization, two screening stages, MOS.

Stage order is fixed: z-score normalization, rejection of raters with
any extreme standardized score, rejection of raters whose ranking
disagrees with the group, then per-condition Mean Opinion Scores with a
[0, 5] rescale. A report accounts for every input record.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError
from .model import (ConditionId, DIMENSIONS, MosEntry, MosTable,
                    PipelineParams, RatingRecord)
from .stats import DegenerateInputError, spearman

# SRCC against fewer than this many shared conditions is meaningless
# (on 2 points it is forced to +/-1), so such raters are set aside.
MIN_OVERLAP = 3


@dataclass(frozen=True)
class NormalizedRating:
    rater_id: str
    condition: ConditionId
    dimension: str
    z: float


@dataclass
class PipelineReport:
    """Bookkeeping for one cleaning run; accounts for every input record."""

    raters_in: int = 0
    records_in: int = 0
    records_out: int = 0
    rejected_by_z: set[str] = field(default_factory=set)
    rejected_by_srcc: set[str] = field(default_factory=set)
    insufficient_overlap: set[str] = field(default_factory=set)
    srcc_by_rater: dict[str, float] = field(default_factory=dict)
    empty_conditions: list[ConditionId] = field(default_factory=list)

    @property
    def records_removed(self) -> int:
        return self.records_in - self.records_out

    def final_raters(self) -> set[str]:
        return ({r for r in self.srcc_by_rater} - self.rejected_by_srcc)

    def to_dict(self) -> dict:
        return {
            "raters_in": self.raters_in,
            "records_in": self.records_in,
            "records_out": self.records_out,
            "records_removed": self.records_removed,
            "rejected_by_z": sorted(self.rejected_by_z),
            "rejected_by_srcc": sorted(self.rejected_by_srcc),
            "insufficient_overlap": sorted(self.insufficient_overlap),
            "srcc_by_rater": {k: self.srcc_by_rater[k] for k in sorted(self.srcc_by_rater)},
            "empty_conditions": [list(c.as_key()) for c in self.empty_conditions],
        }


def zscore_normalize(records: Sequence[RatingRecord]) -> list[NormalizedRating]:
    """Standardize scores within each (rater, dimension) group.

    z = (x - mean) / population_std over all of that rater's scores in
    the dimension; a zero-variance group maps to all-zero z.
    """
    groups: dict[tuple[str, str], list[int]] = {}
    for idx, record in enumerate(records):
        for dim in DIMENSIONS:
            if dim in record.scores:
                groups.setdefault((record.rater_id, dim), []).append(idx)

    out: list[NormalizedRating] = []
    for (rater_id, dim), indices in groups.items():
        values = np.array([records[i].scores[dim] for i in indices], dtype=float)
        mu = float(values.mean())
        sigma = float(values.std())  # population std (divide by n)
        for i, x in zip(indices, values):
            z = 0.0 if sigma == 0.0 else (float(x) - mu) / sigma
            out.append(NormalizedRating(rater_id, records[i].condition, dim, z))
    return out


def filter_outlier_raters(normalized: Iterable[NormalizedRating],
                          tau: float) -> tuple[set[str], set[str]]:
    """Keep raters whose standardized scores never exceed tau in magnitude.

    The max is taken over all of a rater's (condition, dimension) cells
    jointly; the boundary |z| == tau is retained.
    """
    if not tau > 0:
        raise DomainError(f"tau must be > 0, got {tau!r}", code="bad-params")
    max_abs: dict[str, float] = {}
    for item in normalized:
        current = max_abs.get(item.rater_id, 0.0)
        max_abs[item.rater_id] = max(current, abs(item.z))
    valid = {r for r, m in max_abs.items() if m <= tau}
    rejected = set(max_abs) - valid
    return valid, rejected


def filter_inconsistent_raters(
    normalized: Iterable[NormalizedRating],
    valid_raters: set[str],
    gamma: float,
) -> tuple[set[str], dict[str, float], set[str]]:
    """Screen raters by rank agreement with the group.

    Each surviving rater's standardized scores are compared, cell by
    (condition, dimension) cell, against the leave-one-out mean of the
    other surviving raters; the Spearman rank correlation of the two
    vectors must reach ``gamma``. Raters sharing fewer than MIN_OVERLAP
    distinct conditions with the group are set aside as
    insufficient-overlap. Degenerate comparisons (either vector
    constant) count as zero correlation.

    Returns (final rater set, SRCC per evaluated rater, insufficient set).
    """
    cell_sum: dict[tuple, float] = {}
    cell_count: dict[tuple, int] = {}
    by_rater: dict[str, dict[tuple, float]] = {}
    for item in normalized:
        if item.rater_id not in valid_raters:
            continue
        cell = (item.condition, item.dimension)
        cell_sum[cell] = cell_sum.get(cell, 0.0) + item.z
        cell_count[cell] = cell_count.get(cell, 0) + 1
        by_rater.setdefault(item.rater_id, {})[cell] = item.z

    final: set[str] = set()
    srcc_values: dict[str, float] = {}
    insufficient: set[str] = set()
    for rater_id in sorted(by_rater):
        own: list[float] = []
        group: list[float] = []
        shared_conditions: set = set()
        for cell, z in sorted(by_rater[rater_id].items(),
                              key=lambda kv: (kv[0][0], kv[0][1])):
            n = cell_count[cell]
            if n < 2:
                continue  # nobody else rated this cell
            own.append(z)
            group.append((cell_sum[cell] - z) / (n - 1))
            shared_conditions.add(cell[0])
        if len(shared_conditions) < MIN_OVERLAP:
            insufficient.add(rater_id)
            continue
        try:
            value = spearman(own, group)
        except DegenerateInputError:
            value = 0.0
        srcc_values[rater_id] = value
        if value >= gamma:
            final.add(rater_id)
    return final, srcc_values, insufficient


def compute_mos(
    normalized: Iterable[NormalizedRating],
    final_raters: set[str],
    anchors: Mapping[str, tuple[float, float]] | None = None,
) -> tuple[MosTable, list[ConditionId]]:
    """Average surviving z-scores per (condition, dimension) and rescale.

    mos_scaled maps mos_z linearly onto [0, 5] using per-dimension
    (min, max) anchors; anchors default to the extremes of the data
    being processed and are stored on the table. With frozen anchors the
    scaled value is clamped into [0, 5]. A degenerate anchor range maps
    to the midpoint 2.5. Conditions left with no valid ratings are
    omitted and returned for reporting.
    """
    values: dict[tuple[ConditionId, str], list[float]] = {}
    all_conditions: dict[ConditionId, None] = {}
    for item in normalized:
        all_conditions.setdefault(item.condition)
        if item.rater_id in final_raters:
            values.setdefault((item.condition, item.dimension), []).append(item.z)

    mos_z = {key: float(np.mean(vals)) for key, vals in values.items()}

    used_anchors: dict[str, tuple[float, float]] = {}
    if anchors is None:
        for dim in DIMENSIONS:
            dim_values = [v for (cond, d), v in mos_z.items() if d == dim]
            if dim_values:
                used_anchors[dim] = (min(dim_values), max(dim_values))
    else:
        used_anchors = {dim: (float(lo), float(hi)) for dim, (lo, hi) in anchors.items()}

    table = MosTable(anchors=used_anchors)
    for key in sorted(mos_z, key=lambda ck: (ck[0], ck[1])):
        cond, dim = key
        z = mos_z[key]
        lo, hi = used_anchors[dim]
        if hi == lo:
            scaled = 2.5
        else:
            scaled = 5.0 * (z - lo) / (hi - lo)
            scaled = min(5.0, max(0.0, scaled))
        table.entries[key] = MosEntry(mos_z=z, mos_scaled=scaled, n_valid=len(values[key]))

    covered = {cond for cond, _dim in mos_z}
    omitted = [cond for cond in all_conditions if cond not in covered]
    return table, omitted


def run_pipeline(
    records: Sequence[RatingRecord],
    params: PipelineParams | None = None,
    anchors: Mapping[str, tuple[float, float]] | None = None,
) -> tuple[MosTable, PipelineReport]:
    """Run the full cleaning chain in order and account for every record."""
    params = params or PipelineParams()
    report = PipelineReport(
        raters_in=len({r.rater_id for r in records}),
        records_in=len(records),
    )
    if not records:
        return MosTable(), report

    normalized = zscore_normalize(records)
    valid, rejected_z = filter_outlier_raters(normalized, params.z_outlier_threshold)
    final, srcc_values, insufficient = filter_inconsistent_raters(
        normalized, valid, params.srcc_threshold)

    report.rejected_by_z = rejected_z
    report.rejected_by_srcc = {r for r, v in srcc_values.items() if v < params.srcc_threshold}
    report.insufficient_overlap = insufficient
    report.srcc_by_rater = srcc_values
    report.records_out = sum(1 for r in records if r.rater_id in final)

    table, omitted = compute_mos(normalized, final, anchors)
    report.empty_conditions = omitted
    return table, report
