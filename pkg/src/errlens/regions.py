"""Mining poor-performance regions from per-instance explanations.

Misclassified rows are explained individually; the conditions that recur
across those explanations define candidate regions of feature space.  Each
region is then scored on the full split it came from: how many rows fall in
it (coverage) and what fraction of those the classifier gets wrong
(error rate).  Regions whose error rate clears the split's baseline mark
where the model performs poorly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .data import LabeledTable
from .errors import DataError, EmptyTable, NoExplanations
from .lime import Condition, Discretizer, Explanation, LimeConfig, explain
from .model import Predictor


@dataclass(frozen=True, slots=True)
class MisclassifiedSet:
    """Row ids a predictor got wrong on one split, in table order."""

    split: str  # "train" or "test"
    threshold: float
    row_ids: tuple[str, ...]


def misclassified_mask(predictor: Predictor, table: LabeledTable,
                       threshold: float) -> np.ndarray:
    """Boolean mask of rows where thresholded prediction != label."""
    probs = predictor.predict_table(table)
    return (probs >= threshold) != (table.labels == 1)


def find_misclassified(predictor: Predictor, table: LabeledTable,
                       threshold: float = 0.5,
                       split: str = "test") -> MisclassifiedSet:
    if table.n_rows == 0:
        raise EmptyTable("cannot scan an empty table")
    mask = misclassified_mask(predictor, table, threshold)
    return MisclassifiedSet(
        split=split,
        threshold=threshold,
        row_ids=tuple(rid for rid, bad in zip(table.row_ids, mask) if bad),
    )


def explain_misclassified(
    predictor: Predictor,
    table: LabeledTable,
    misclassified: MisclassifiedSet,
    disc: Discretizer,
    config: LimeConfig = LimeConfig(),
    jobs: int = 1,
) -> tuple[Explanation, ...]:
    """One explanation per misclassified row.

    Rows are independent (each derives its own RNG stream from its row id),
    so they may be explained in parallel; results are returned in
    ``misclassified.row_ids`` order regardless of scheduling.
    """
    index = {rid: i for i, rid in enumerate(table.row_ids)}
    try:
        rows = [index[rid] for rid in misclassified.row_ids]
    except KeyError as exc:
        raise DataError(f"row id {exc.args[0]!r} not present in table") from None

    def one(i: int) -> Explanation:
        return explain(
            predictor, disc,
            row_id=table.row_ids[i],
            instance=table.row_values(i),
            true_label=int(table.labels[i]),
            config=config,
            threshold=misclassified.threshold,
        )

    if jobs <= 1 or len(rows) <= 1:
        return tuple(one(i) for i in rows)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return tuple(pool.map(one, rows))


def mine_conditions(
    explanations: Sequence[Explanation],
    min_support_fraction: float = 0.1,
) -> list[tuple[Condition, int]]:
    """Count canonical conditions across explanations and keep frequent ones.

    A condition counts at most once per explanation.  Kept conditions have
    support/len(explanations) >= min_support_fraction and are ordered by
    descending support, then ascending canonical text.
    """
    if not explanations:
        raise NoExplanations("no explanations to mine")
    if not 0.0 < min_support_fraction <= 1.0:
        raise DataError("min_support_fraction must be within (0, 1]")
    by_text: dict[str, Condition] = {}
    counts: dict[str, int] = {}
    for exp in explanations:
        for text, cond in {c.text: c for c, _ in exp.terms}.items():
            counts[text] = counts.get(text, 0) + 1
            by_text.setdefault(text, cond)
    keep = [t for t, c in counts.items()
            if c / len(explanations) >= min_support_fraction]
    keep.sort(key=lambda t: (-counts[t], t))
    return [(by_text[t], counts[t]) for t in keep]


def _json_bound(x: float | None) -> float | str | None:
    """Interval bounds as JSON values; infinities become strings."""
    if x is None or np.isfinite(x):
        return x
    return repr(x)


def _parse_bound(v: float | str | None) -> float | None:
    return None if v is None else float(v)


@dataclass(frozen=True, slots=True)
class ConditionStats:
    """A mined condition scored as a region of one data split."""

    condition: Condition
    support: int  # explanations containing the condition
    support_fraction: float
    coverage: int  # rows of the split satisfying the condition
    errors_in_region: int
    error_rate: float

    def to_json_obj(self) -> dict:
        return {
            "condition": self.condition.text,
            "feature": self.condition.feature,
            "low": _json_bound(self.condition.low),
            "high": _json_bound(self.condition.high),
            "category": self.condition.category,
            "support": self.support,
            "support_fraction": self.support_fraction,
            "coverage": self.coverage,
            "errors_in_region": self.errors_in_region,
            "error_rate": self.error_rate,
        }


def region_error_rate(
    condition: Condition,
    predictor: Predictor,
    table: LabeledTable,
    threshold: float = 0.5,
) -> ConditionStats:
    """Coverage and error rate of one condition on a table.

    Support fields are zeroed; :func:`build_report` fills them from mining.
    An empty region reports error_rate 0.
    """
    in_region = condition.matches(table.column(condition.feature))
    wrong = misclassified_mask(predictor, table, threshold)
    coverage = int(in_region.sum())
    errors = int((in_region & wrong).sum())
    return ConditionStats(
        condition=condition,
        support=0,
        support_fraction=0.0,
        coverage=coverage,
        errors_in_region=errors,
        error_rate=(errors / coverage if coverage else 0.0),
    )


@dataclass(frozen=True)
class RegionReport:
    """Scored regions of one split, sorted worst-first.

    Ordering: error_rate desc, then coverage desc, then canonical text asc.
    ``baseline_error_rate`` is the split-wide misclassification rate the
    regions should be read against; ``config`` echoes the parameters that
    produced the report.
    """

    split: str
    n_total: int
    n_misclassified: int
    baseline_error_rate: float
    regions: tuple[ConditionStats, ...]
    config: Mapping[str, object]

    def to_json_obj(self) -> dict:
        return {
            "split": self.split,
            "n_total": self.n_total,
            "n_misclassified": self.n_misclassified,
            "baseline_error_rate": self.baseline_error_rate,
            "regions": [r.to_json_obj() for r in self.regions],
            "config": dict(self.config),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "RegionReport":
        try:
            regions = tuple(
                ConditionStats(
                    condition=(
                        Condition(feature=r["feature"], category=r["category"])
                        if r["category"] is not None
                        else Condition(feature=r["feature"],
                                       low=_parse_bound(r["low"]),
                                       high=_parse_bound(r["high"]))
                    ),
                    support=int(r["support"]),
                    support_fraction=float(r["support_fraction"]),
                    coverage=int(r["coverage"]),
                    errors_in_region=int(r["errors_in_region"]),
                    error_rate=float(r["error_rate"]),
                )
                for r in obj["regions"]
            )
            return cls(
                split=str(obj["split"]),
                n_total=int(obj["n_total"]),
                n_misclassified=int(obj["n_misclassified"]),
                baseline_error_rate=float(obj["baseline_error_rate"]),
                regions=regions,
                config=dict(obj["config"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed region report: {exc}") from exc


def report_from_explanations(
    predictor: Predictor,
    table: LabeledTable,
    explanations: Sequence[Explanation],
    misclassified: MisclassifiedSet,
    min_support_fraction: float = 0.1,
    lime_config: LimeConfig = LimeConfig(),
    extra_config: Mapping[str, object] | None = None,
) -> RegionReport:
    """Mine conditions from existing explanations and score them on the table.

    Building block of :func:`build_report` for callers that already hold the
    explanations (e.g. to persist them alongside the report).
    """
    if table.n_rows == 0:
        raise EmptyTable("cannot report on an empty table")
    n_mis = len(misclassified.row_ids)
    if len(explanations) != n_mis:
        raise DataError("one explanation per misclassified row required")
    config: dict[str, object] = {
        "split": misclassified.split,
        "threshold": misclassified.threshold,
        "min_support_fraction": min_support_fraction,
        "top_k": lime_config.top_k,
        "n_samples": lime_config.n_samples,
        "kernel_width": lime_config.kernel_width,
        "ridge_lambda": lime_config.ridge_lambda,
        "seed": lime_config.seed,
    }
    if extra_config:
        config.update(extra_config)

    stats: list[ConditionStats] = []
    if explanations:
        for cond, support in mine_conditions(explanations, min_support_fraction):
            s = region_error_rate(cond, predictor, table, misclassified.threshold)
            if s.coverage == 0:
                continue
            stats.append(replace(s, support=support,
                                 support_fraction=support / n_mis))
    stats.sort(key=lambda s: (-s.error_rate, -s.coverage, s.condition.text))
    return RegionReport(
        split=misclassified.split,
        n_total=table.n_rows,
        n_misclassified=n_mis,
        baseline_error_rate=n_mis / table.n_rows,
        regions=tuple(stats),
        config=config,
    )


def build_report(
    predictor: Predictor,
    disc: Discretizer,
    table: LabeledTable,
    split: str = "test",
    threshold: float = 0.5,
    min_support_fraction: float = 0.1,
    lime_config: LimeConfig = LimeConfig(),
    jobs: int = 1,
    extra_config: Mapping[str, object] | None = None,
) -> RegionReport:
    """End-to-end region report for one split.

    Composes find_misclassified -> explain_misclassified -> mine_conditions
    -> region_error_rate.  With no misclassified rows the report has zero
    regions and baseline 0.
    """
    mis = find_misclassified(predictor, table, threshold=threshold, split=split)
    explanations = explain_misclassified(predictor, table, mis, disc,
                                         config=lime_config, jobs=jobs)
    return report_from_explanations(
        predictor, table, explanations, mis,
        min_support_fraction=min_support_fraction,
        lime_config=lime_config,
        extra_config=extra_config,
    )
