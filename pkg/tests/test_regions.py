"""Misclassification scanning, condition mining, and region reports."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_table, random_table
from errlens import (
    Condition,
    ConditionStats,
    Explanation,
    FunctionPredictor,
    GbdtParams,
    LimeConfig,
    MisclassifiedSet,
    RegionReport,
    build_report,
    evaluate,
    explain_misclassified,
    find_misclassified,
    fit_discretizer,
    mine_conditions,
    region_error_rate,
    report_from_explanations,
    train_gbdt,
)
from errlens.errors import DataError, EmptyTable, NoExplanations
from errlens.serialize import canonical_json


def fixed_predictor(table, probs) -> FunctionPredictor:
    values = np.asarray(probs, dtype=np.float64)
    return FunctionPredictor(table.schema, lambda cols: values[: len(cols[0])])


def explanation(row_id: str, *conds: Condition) -> Explanation:
    return Explanation(
        row_id=row_id, true_label=0, predicted_label=1,
        predicted_probability=0.9,
        terms=tuple((c, 1.0) for c in conds),
        intercept=0.1, surrogate_r2=0.5,
    )


def greater(feature: str) -> Condition:
    return Condition(feature=feature, low=1.0)


# --- finding misclassified rows ----------------------------------------------------


def test_find_misclassified_keeps_table_order_and_threshold_boundary() -> None:
    table = make_table([[0.0] * 4], [1, 0, 1, 0], row_ids=list("wxyz"))
    mis = find_misclassified(fixed_predictor(table, [0.9, 0.5, 0.2, 0.1]), table,
                             threshold=0.5, split="test")
    # row w: correct; row x: 0.5 counts as positive -> wrong; row y: missed
    assert mis.row_ids == ("x", "y")
    assert mis.split == "test" and mis.threshold == 0.5


def test_find_misclassified_rejects_empty_tables() -> None:
    table = make_table([[1.0]], [0]).subset([])
    with pytest.raises(EmptyTable):
        find_misclassified(fixed_predictor(table, []), table)


def test_explanations_follow_the_misclassified_order_even_in_parallel() -> None:
    rng = np.random.default_rng(3)
    table = random_table(rng, 60, 3)
    model = train_gbdt(table.subset(range(40)), GbdtParams(rounds=5))
    mis = find_misclassified(model, table, split="all")
    disc = fit_discretizer(table)
    config = LimeConfig(n_samples=120, seed=2)
    serial = explain_misclassified(model, table, mis, disc, config=config, jobs=1)
    parallel = explain_misclassified(model, table, mis, disc, config=config, jobs=4)
    assert serial == parallel
    assert tuple(e.row_id for e in serial) == mis.row_ids


def test_explaining_an_unknown_row_id_fails_loudly() -> None:
    table = make_table([[1.0, 2.0]], [0, 1], row_ids=["a", "b"])
    ghost = MisclassifiedSet(split="test", threshold=0.5, row_ids=("ghost",))
    with pytest.raises(DataError):
        explain_misclassified(fixed_predictor(table, [0.5, 0.5]), table, ghost,
                              fit_discretizer(table))


# --- mining ---------------------------------------------------------------------


def test_mining_counts_each_condition_once_per_explanation() -> None:
    a, b, c = greater("a"), greater("b"), greater("c")
    explanations = [explanation("0", a, b), explanation("1", a, c),
                    explanation("2", a)]
    assert mine_conditions(explanations, 0.5) == [(a, 3)]
    assert mine_conditions(explanations, 0.3) == [(a, 3), (b, 1), (c, 1)]
    assert mine_conditions(explanations, 1.0) == [(a, 3)]


def test_repeats_inside_one_explanation_do_not_inflate_support() -> None:
    a = greater("a")
    assert mine_conditions([explanation("0", a, a)], 0.1) == [(a, 1)]


def test_mining_rejects_empty_input_and_bad_support_bounds() -> None:
    with pytest.raises(NoExplanations):
        mine_conditions([], 0.5)
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(DataError):
            mine_conditions([explanation("0", greater("a"))], bad)


@given(
    st.lists(
        st.lists(st.sampled_from("abcdef"), min_size=1, max_size=4),
        min_size=1, max_size=20,
    ),
    st.floats(min_value=0.05, max_value=1.0),
)
def test_mined_supports_match_a_brute_force_recount(
    term_sets: list[list[str]], min_support: float
) -> None:
    explanations = [
        explanation(str(i), *(greater(ch) for ch in chars))
        for i, chars in enumerate(term_sets)
    ]
    counts: dict[str, int] = {}
    for chars in term_sets:
        for ch in set(chars):
            counts[ch] = counts.get(ch, 0) + 1
    expected = sorted(
        ((ch, n) for ch, n in counts.items()
         if n / len(term_sets) >= min_support),
        key=lambda item: (-item[1], greater(item[0]).text),
    )
    mined = [(cond.feature, n) for cond, n in mine_conditions(explanations,
                                                              min_support)]
    assert mined == expected


# --- scoring one region ---------------------------------------------------------


def test_region_stats_count_covered_rows_and_their_errors() -> None:
    table = make_table([list(range(10))], [0] * 10)
    probs = [0.1] * 10
    probs[7] = 0.9  # the one mistake, inside the region
    stats = region_error_rate(Condition(feature="f0", low=5.5),
                              fixed_predictor(table, probs), table)
    assert stats.coverage == 4
    assert stats.errors_in_region == 1
    assert stats.error_rate == 0.25
    assert stats.support == 0 and stats.support_fraction == 0.0


def test_an_uncovered_region_has_zero_error_rate() -> None:
    table = make_table([[1.0, 2.0]], [0, 0])
    stats = region_error_rate(Condition(feature="f0", low=100.0),
                              fixed_predictor(table, [0.9, 0.9]), table)
    assert stats.coverage == 0
    assert stats.error_rate == 0.0


# --- assembling reports ------------------------------------------------------------


def test_report_orders_regions_by_rate_then_coverage_then_text() -> None:
    # f0 in [0..5]; labels all 0; mistakes at rows 4 and 5
    table = make_table([[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]], [0] * 6)
    predictor = fixed_predictor(table, [0.1, 0.1, 0.1, 0.1, 0.9, 0.9])
    mis = find_misclassified(predictor, table, split="test")
    half = Condition(feature="f0", low=2.5)        # covers 3, errors 2
    top = Condition(feature="f0", low=3.5)         # covers 2, errors 2
    low = Condition(feature="f0", high=2.5)        # covers 3, errors 0
    explanations = [explanation("4", top, half, low),
                    explanation("5", top, half, low)]
    report = report_from_explanations(predictor, table, explanations, mis)
    ordering = [(r.condition.text, r.coverage, r.error_rate)
                for r in report.regions]
    assert ordering == [
        ("f0 > 3.5", 2, 1.0),
        ("f0 > 2.5", 3, pytest.approx(2 / 3)),
        ("f0 <= 2.5", 3, 0.0),
    ]
    assert report.baseline_error_rate == pytest.approx(1 / 3)
    assert report.n_total == 6 and report.n_misclassified == 2
    assert report.regions[0].support == 2
    assert report.regions[0].support_fraction == 1.0


def test_report_drops_conditions_that_cover_nothing() -> None:
    table = make_table([[1.0, 2.0]], [0, 0])
    predictor = fixed_predictor(table, [0.9, 0.1])
    mis = find_misclassified(predictor, table, split="test")
    nowhere = Condition(feature="f0", low=50.0)
    report = report_from_explanations(
        predictor, table, [explanation("0", nowhere)], mis)
    assert report.regions == ()


def test_report_requires_one_explanation_per_misclassified_row() -> None:
    table = make_table([[1.0, 2.0]], [0, 0])
    predictor = fixed_predictor(table, [0.9, 0.1])
    mis = find_misclassified(predictor, table, split="test")
    with pytest.raises(DataError):
        report_from_explanations(predictor, table, [], mis)


def test_report_config_echoes_every_knob_plus_extras() -> None:
    table = make_table([[1.0, 2.0]], [0, 0])
    predictor = fixed_predictor(table, [0.9, 0.1])
    mis = find_misclassified(predictor, table, threshold=0.4, split="train")
    report = report_from_explanations(
        predictor, table, [explanation("0", greater("f0"))], mis,
        min_support_fraction=0.2,
        lime_config=LimeConfig(n_samples=100, top_k=3, seed=8),
        extra_config={"rows": 2},
    )
    assert report.config == {
        "split": "train", "threshold": 0.4, "min_support_fraction": 0.2,
        "top_k": 3, "n_samples": 100, "kernel_width": None,
        "ridge_lambda": 1.0, "seed": 8, "rows": 2,
    }


def test_build_report_is_consistent_with_the_evaluation_metrics() -> None:
    rng = np.random.default_rng(12)
    table = random_table(rng, 80, 3)
    model = train_gbdt(table.subset(range(50)), GbdtParams(rounds=5))
    report = build_report(model, fit_discretizer(table), table, split="all",
                          lime_config=LimeConfig(n_samples=150, seed=1))
    metrics = evaluate(model, table)
    assert report.baseline_error_rate == pytest.approx(metrics.error_rate)
    assert report.n_misclassified == metrics.fp + metrics.fn
    for region in report.regions:
        assert 1 <= region.coverage <= table.n_rows
        assert 0.0 <= region.error_rate <= 1.0
        assert region.errors_in_region <= report.n_misclassified


def test_a_perfect_predictor_yields_an_empty_report() -> None:
    table = make_table([[1.0, 2.0]], [0, 1])
    perfect = fixed_predictor(table, [0.1, 0.9])
    report = build_report(perfect, fit_discretizer(table), table)
    assert report.regions == ()
    assert report.baseline_error_rate == 0.0


def test_region_reports_round_trip_through_json_with_infinite_bounds() -> None:
    stats = ConditionStats(
        condition=Condition(feature="f0", low=float("-inf")),
        support=2, support_fraction=0.5, coverage=4, errors_in_region=1,
        error_rate=0.25,
    )
    report = RegionReport(
        split="test", n_total=8, n_misclassified=4, baseline_error_rate=0.5,
        regions=(stats,), config={"seed": 0},
    )
    text = canonical_json(report.to_json_obj())  # strict JSON: no bare Infinity
    assert '"low": "-inf"' in text
    back = RegionReport.from_json_obj(report.to_json_obj())
    assert back == report
    assert back.regions[0].condition.text == "f0 > -inf"
