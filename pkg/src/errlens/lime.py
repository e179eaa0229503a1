"""Local surrogate explanations for tabular classifiers (LIME-style).

An instance is explained by (1) discretizing continuous features into
training-set quartile bins, (2) sampling perturbed rows feature-by-feature
from the per-bin training distribution, (3) weighting samples by an
exponential kernel on binary-indicator similarity to the instance, and
(4) fitting a weighted ridge regression to the classifier's probabilities.
The surrogate coefficients rank human-readable feature conditions by their
local influence.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .data import FeatureSpec, LabeledTable
from .errors import DataError, EmptyTable, SingularSystem, UnknownFeature
from .model import Columns, Predictor
from .serialize import canonical_json_line

# --- deterministic per-instance seeding ---------------------------------------

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(text: str) -> int:
    """64-bit FNV-1a hash of the UTF-8 bytes of ``text``."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _U64
    return h


def instance_seed(base_seed: int, row_id: str) -> int:
    """Per-instance RNG seed: base seed XOR the id hash (mod 2^64)."""
    return (base_seed & _U64) ^ fnv1a64(row_id)


# --- conditions ----------------------------------------------------------------

_RANGE_RE = re.compile(r"^(\S+) < (\S+) <= (\S+)$")


@dataclass(frozen=True, slots=True)
class Condition:
    """A single-feature predicate with a canonical text form.

    Continuous predicates are one of ``f <= hi``, ``lo < f <= hi``,
    ``f > lo``; categorical ones are ``f = category``.  Unused bounds are
    None.  Bounds render with full (shortest round-trip) precision, so the
    text form is a faithful key for counting and re-parsing.
    """

    feature: str
    low: float | None = None
    high: float | None = None
    category: str | None = None

    def __post_init__(self) -> None:
        # plain Python floats so text form always uses shortest repr
        if self.low is not None:
            object.__setattr__(self, "low", float(self.low))
        if self.high is not None:
            object.__setattr__(self, "high", float(self.high))
        if self.category is not None:
            object.__setattr__(self, "category", str(self.category))
            if self.low is not None or self.high is not None:
                raise DataError("categorical condition cannot carry bounds")
        elif self.low is None and self.high is None:
            raise DataError("continuous condition needs at least one bound")
        elif self.low is not None and self.high is not None and not self.low < self.high:
            raise DataError(f"empty interval ({self.low!r}, {self.high!r}]")

    @property
    def text(self) -> str:
        if self.category is not None:
            return f"{self.feature} = {self.category}"
        if self.low is None:
            return f"{self.feature} <= {self.high!r}"
        if self.high is None:
            return f"{self.feature} > {self.low!r}"
        return f"{self.low!r} < {self.feature} <= {self.high!r}"

    def matches(self, values: np.ndarray) -> np.ndarray:
        """Vectorized membership test over a feature column."""
        if self.category is not None:
            return np.asarray(values) == self.category
        values = np.asarray(values, dtype=np.float64)
        if self.low is None:
            return values <= self.high
        if self.high is None:
            return values > self.low
        return (values > self.low) & (values <= self.high)

    def matches_value(self, value: float | str) -> bool:
        return bool(self.matches(np.asarray([value]))[0])

    @classmethod
    def from_text(cls, text: str) -> "Condition":
        m = _RANGE_RE.match(text)
        if m:
            try:
                return cls(feature=m.group(2), low=float(m.group(1)),
                           high=float(m.group(3)))
            except ValueError:
                pass
        for token, key in ((" <= ", "high"), (" > ", "low"), (" = ", "category")):
            if token not in text:
                continue
            feature, _, rest = text.partition(token)
            if " " in feature:
                continue  # feature names never contain whitespace
            if key == "category":
                return cls(feature=feature, category=rest)
            try:
                return cls(feature=feature, **{key: float(rest)})
            except ValueError:
                continue
        raise DataError(f"unparseable condition {text!r}")


# --- discretizer ----------------------------------------------------------------


def _percentile(sorted_values: np.ndarray, q: float) -> float:
    """Linear-interpolation percentile at rank (n-1)*q of pre-sorted values."""
    n = sorted_values.size
    rank = (n - 1) * q
    lo = int(math.floor(rank))
    if lo + 1 >= n:
        return float(sorted_values[-1])
    frac = rank - lo
    return float(sorted_values[lo] + frac * (sorted_values[lo + 1] - sorted_values[lo]))


@dataclass(frozen=True, slots=True)
class ContinuousBins:
    """Quartile bins of one continuous feature.

    ``edges`` are the deduplicated 25/50/75-percentile cut points (edges that
    would leave the top bin empty are dropped); bin ``i`` is
    ``(edges[i-1], edges[i]]`` with open ends at the extremes.  Per-bin
    training statistics drive perturbation sampling; an interior bin that
    captured no training mass has frequency 0 and is never sampled.
    """

    edges: tuple[float, ...]
    frequencies: tuple[float, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]
    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    @property
    def n_bins(self) -> int:
        return len(self.edges) + 1

    def bin_of(self, value: float) -> int:
        return int(np.searchsorted(self.edges, value, side="left"))


@dataclass(frozen=True, slots=True)
class CategoricalBins:
    """Training categories of one categorical feature with frequencies."""

    categories: tuple[str, ...]
    frequencies: tuple[float, ...]


@dataclass(frozen=True)
class Discretizer:
    schema: tuple[FeatureSpec, ...]
    per_feature: tuple[ContinuousBins | CategoricalBins, ...]

    def index_of(self, feature: str) -> int:
        for i, spec in enumerate(self.schema):
            if spec.name == feature:
                return i
        raise UnknownFeature(feature)


def fit_discretizer(train: LabeledTable) -> Discretizer:
    """Learn per-feature bins and sampling statistics from training data."""
    if train.n_rows == 0:
        raise EmptyTable("cannot fit a discretizer on an empty table")
    per_feature: list[ContinuousBins | CategoricalBins] = []
    n = train.n_rows
    for spec, col in zip(train.schema, train.columns):
        if spec.kind == "categorical":
            cats, counts = np.unique(col, return_counts=True)
            per_feature.append(CategoricalBins(
                categories=tuple(str(c) for c in cats),
                frequencies=tuple(counts / n),
            ))
            continue
        sorted_col = np.sort(col)
        edges: list[float] = []
        for q in (0.25, 0.5, 0.75):
            e = _percentile(sorted_col, q)
            # dedupe, and drop edges at/above the maximum (they would
            # create an empty top bin)
            if (not edges or e > edges[-1]) and e < sorted_col[-1]:
                edges.append(e)
        idx = np.searchsorted(edges, col, side="left")
        freqs, means, stds, mins, maxs = [], [], [], [], []
        for b in range(len(edges) + 1):
            members = col[idx == b]
            if members.size == 0:
                # unreachable via sampling; park neutral stats at the midpoint
                mid = (edges[b - 1] + edges[b]) / 2.0
                freqs.append(0.0)
                means.append(mid)
                stds.append(0.0)
                mins.append(mid)
                maxs.append(mid)
            else:
                freqs.append(members.size / n)
                means.append(float(members.mean()))
                stds.append(float(members.std()))
                mins.append(float(members.min()))
                maxs.append(float(members.max()))
        per_feature.append(ContinuousBins(
            edges=tuple(edges), frequencies=tuple(freqs), means=tuple(means),
            stds=tuple(stds), mins=tuple(mins), maxs=tuple(maxs),
        ))
    return Discretizer(schema=train.schema, per_feature=tuple(per_feature))


def condition_for(disc: Discretizer, feature: str, value: float | str) -> Condition:
    """The canonical condition describing ``value``'s bin of ``feature``."""
    j = disc.index_of(feature)
    bins = disc.per_feature[j]
    if isinstance(bins, CategoricalBins):
        return Condition(feature=feature, category=str(value))
    if not bins.edges:
        # single-bin feature: the whole real line
        return Condition(feature=feature, low=float("-inf"))
    b = bins.bin_of(float(value))
    if b == 0:
        return Condition(feature=feature, high=bins.edges[0])
    if b == len(bins.edges):
        return Condition(feature=feature, low=bins.edges[-1])
    return Condition(feature=feature, low=bins.edges[b - 1], high=bins.edges[b])


# --- perturbation sampling -------------------------------------------------------


def sample_perturbations(
    disc: Discretizer,
    instance: Sequence[float | str],
    n_samples: int,
    seed: int,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Draw the binary similarity matrix Z and raw perturbed columns X.

    Row 0 is the unperturbed instance (Z all ones).  For rows 1..n-1, each
    continuous feature draws a bin by training frequency, then a value from
    that bin's normal(mean, std) clamped to the bin's observed range;
    categorical features draw a category by frequency.  ``Z[s, j]`` is 1 iff
    the draw landed in the instance's bin / category.  The RNG is consumed
    feature by feature, so results do not depend on scheduling.
    """
    if n_samples < 1:
        raise DataError("n_samples must be at least 1")
    if len(instance) != len(disc.schema):
        raise DataError("instance does not match the discretizer schema")
    rng = np.random.default_rng(seed % (_U64 + 1))
    d = len(disc.schema)
    z = np.ones((n_samples, d))
    columns: list[np.ndarray] = []
    m = n_samples - 1
    for j, bins in enumerate(disc.per_feature):
        if isinstance(bins, CategoricalBins):
            inst_cat = str(instance[j])
            cats = np.asarray(bins.categories, dtype=str)
            drawn = rng.choice(len(cats), size=m, p=np.asarray(bins.frequencies))
            z[1:, j] = cats[drawn] == inst_cat
            col = np.concatenate([[inst_cat], cats[drawn]])
            columns.append(np.asarray(col, dtype=str))
        else:
            inst_value = float(instance[j])
            inst_bin = bins.bin_of(inst_value)
            drawn = rng.choice(bins.n_bins, size=m, p=np.asarray(bins.frequencies))
            raw = rng.normal(loc=np.asarray(bins.means)[drawn],
                             scale=np.asarray(bins.stds)[drawn])
            raw = np.clip(raw, np.asarray(bins.mins)[drawn],
                          np.asarray(bins.maxs)[drawn])
            z[1:, j] = drawn == inst_bin
            columns.append(np.concatenate([[inst_value], raw]))
    return z, columns


def kernel_weights(z: np.ndarray, kernel_width: float) -> np.ndarray:
    """Exponential kernel exp(-d^2 / width^2), d^2 = count of 0s per row."""
    if not kernel_width > 0:
        raise DataError("kernel_width must be positive")
    d2 = z.shape[1] - z.sum(axis=1)
    return np.exp(-d2 / (kernel_width * kernel_width))


def default_kernel_width(n_features: int) -> float:
    return 0.75 * math.sqrt(n_features)


# --- weighted ridge surrogate ----------------------------------------------------


def fit_local_model(
    z: np.ndarray, y: np.ndarray, weights: np.ndarray, ridge_lambda: float
) -> tuple[np.ndarray, float, float]:
    """Weighted ridge fit of y on z with an unpenalized intercept.

    Solves the (d+1)-dimensional normal equations with ``ridge_lambda`` added
    to the non-intercept diagonal, via a symmetric positive-definite
    (Cholesky) solve.  Returns (coefficients, intercept, weighted R^2).
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if z.ndim != 2 or y.shape != (z.shape[0],) or w.shape != (z.shape[0],):
        raise DataError("z, y, and weights must agree on the sample count")
    if (w < 0).any() or not w.sum() > 0:
        raise DataError("weights must be non-negative with positive sum")
    if ridge_lambda < 0:
        raise DataError("ridge_lambda must be non-negative")

    x = np.hstack([np.ones((z.shape[0], 1)), z])
    xtw = x.T * w
    a = xtw @ x
    a[1:, 1:] += ridge_lambda * np.eye(z.shape[1])
    b = xtw @ y
    try:
        beta = cho_solve(cho_factor(a), b)
    except LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc

    fitted = x @ beta
    if np.ptp(y) == 0.0:
        r2 = 1.0
    else:
        y_bar = float(np.sum(w * y) / np.sum(w))
        ss_res = float(np.sum(w * (y - fitted) ** 2))
        ss_tot = float(np.sum(w * (y - y_bar) ** 2))
        r2 = 1.0 - ss_res / ss_tot
    return beta[1:], float(beta[0]), float(r2)


# --- explanation ------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class LimeConfig:
    """Knobs of the explanation procedure.

    ``kernel_width=None`` resolves to 0.75*sqrt(n_features) at explain time.
    ``seed`` is the base seed; each instance derives its own stream from it
    and its row id, so explanations are order- and schedule-independent.
    """

    n_samples: int = 5000
    kernel_width: float | None = None
    ridge_lambda: float = 1.0
    top_k: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_samples < 2:
            raise DataError("n_samples must be at least 2")
        if self.kernel_width is not None and not self.kernel_width > 0:
            raise DataError("kernel_width must be positive")
        if self.ridge_lambda < 0:
            raise DataError("ridge_lambda must be non-negative")
        if self.top_k < 1:
            raise DataError("top_k must be at least 1")


@dataclass(frozen=True, slots=True)
class Explanation:
    """Ranked local explanation of one prediction.

    ``terms`` pairs each retained condition with its surrogate weight,
    ordered by descending absolute weight (ties: schema order).  The
    instance satisfies every condition by construction.
    """

    row_id: str
    true_label: int
    predicted_label: int
    predicted_probability: float
    terms: tuple[tuple[Condition, float], ...]
    intercept: float
    surrogate_r2: float

    def to_json_obj(self) -> dict:
        return {
            "row_id": self.row_id,
            "true_label": self.true_label,
            "predicted_label": self.predicted_label,
            "predicted_probability": self.predicted_probability,
            "terms": [[cond.text, weight] for cond, weight in self.terms],
            "intercept": self.intercept,
            "surrogate_r2": self.surrogate_r2,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Explanation":
        try:
            return cls(
                row_id=str(obj["row_id"]),
                true_label=int(obj["true_label"]),
                predicted_label=int(obj["predicted_label"]),
                predicted_probability=float(obj["predicted_probability"]),
                terms=tuple((Condition.from_text(t), float(wt))
                            for t, wt in obj["terms"]),
                intercept=float(obj["intercept"]),
                surrogate_r2=float(obj["surrogate_r2"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed explanation object: {exc}") from exc


def write_explanations_jsonl(explanations: Sequence[Explanation], path: str) -> None:
    """One canonical JSON object per line, in the given order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for exp in explanations:
            fh.write(canonical_json_line(exp.to_json_obj()))


def load_explanations_jsonl(path: str) -> tuple[Explanation, ...]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                out.append(Explanation.from_json_obj(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no + 1}: not valid JSON: {exc}") from exc
    return tuple(out)


def explain(
    predictor: Predictor,
    disc: Discretizer,
    row_id: str,
    instance: Sequence[float | str],
    true_label: int,
    config: LimeConfig = LimeConfig(),
    threshold: float = 0.5,
) -> Explanation:
    """Explain one prediction with a locally weighted ridge surrogate."""
    seed = instance_seed(config.seed, row_id)
    z, columns = sample_perturbations(disc, instance, config.n_samples, seed)
    probs = predictor.predict_rows(disc.schema, columns)
    width = config.kernel_width
    if width is None:
        width = default_kernel_width(len(disc.schema))
    weights = kernel_weights(z, width)
    coef, intercept, r2 = fit_local_model(z, probs, weights, config.ridge_lambda)

    order = sorted(range(len(coef)), key=lambda j: (-abs(coef[j]), j))
    terms = tuple(
        (condition_for(disc, disc.schema[j].name, instance[j]), float(coef[j]))
        for j in order[: config.top_k]
    )
    prob = float(probs[0])
    return Explanation(
        row_id=row_id,
        true_label=int(true_label),
        predicted_label=int(prob >= threshold),
        predicted_probability=prob,
        terms=terms,
        intercept=intercept,
        surrogate_r2=r2,
    )
