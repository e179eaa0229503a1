"""Black-box binary classifiers: a gradient-boosted tree learner and adapters.

The built-in learner is second-order (Newton) gradient boosting on logistic
loss with depth-limited regression trees, exact greedy splits, and L2 leaf
regularization.  Everything downstream (explanations, region mining) only
needs the :class:`Predictor` protocol, so externally produced probabilities
or arbitrary callables plug in the same way.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from scipy.special import expit

from .data import FeatureSpec, LabeledTable
from .errors import (
    DataError,
    DuplicateRowId,
    EmptyTable,
    MissingColumn,
    MissingRowId,
    ProbabilityOutOfRange,
    SchemaMismatch,
)

Columns = Sequence[np.ndarray]

# Probabilities are clipped into the open unit interval so that downstream
# log-loss and thresholding never see an exact 0 or 1.
_P_EPS = 1e-12


@runtime_checkable
class Predictor(Protocol):
    """Anything that yields P(label=1) for feature rows."""

    def predict_table(self, table: LabeledTable) -> np.ndarray:
        """Probabilities for the rows of a labeled table."""
        ...

    def predict_rows(self, schema: tuple[FeatureSpec, ...], columns: Columns) -> np.ndarray:
        """Probabilities for bare columnar rows under the given schema."""
        ...


# --- trees -------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Split:
    """Internal node.  Continuous: go left iff x <= threshold; categorical:
    go left iff x == category."""

    feature: int
    left: int
    right: int
    threshold: float | None = None
    category: str | None = None


@dataclass(frozen=True, slots=True)
class Leaf:
    value: float


class Tree:
    """Regression tree stored as an explicit node array (node 0 is the root)."""

    def __init__(self, nodes: Sequence[Split | Leaf]):
        self.nodes: tuple[Split | Leaf, ...] = tuple(nodes)
        n = len(self.nodes)
        self._feature = np.full(n, -1, dtype=np.intp)
        self._threshold = np.full(n, np.nan)
        self._category = np.full(n, None, dtype=object)
        self._left = np.zeros(n, dtype=np.intp)
        self._right = np.zeros(n, dtype=np.intp)
        self._value = np.zeros(n)
        for i, node in enumerate(self.nodes):
            if isinstance(node, Leaf):
                self._value[i] = node.value
            else:
                self._feature[i] = node.feature
                self._left[i] = node.left
                self._right[i] = node.right
                if node.category is None:
                    self._threshold[i] = node.threshold
                else:
                    self._category[i] = node.category

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Tree) and self.nodes == other.nodes

    def predict(self, columns: Columns) -> np.ndarray:
        """Leaf value per row, routing all rows level by level."""
        n = len(columns[0]) if columns else 0
        at = np.zeros(n, dtype=np.intp)
        while True:
            feats = self._feature[at]
            live = np.flatnonzero(feats >= 0)
            if live.size == 0:
                return self._value[at]
            for j in np.unique(feats[live]):
                rows = live[feats[live] == j]
                nodes = at[rows]
                col = columns[j][rows]
                cats = self._category[nodes]
                if cats[0] is None:
                    go_left = col <= self._threshold[nodes]
                else:
                    go_left = col == cats
                at[rows] = np.where(go_left, self._left[nodes], self._right[nodes])

    def to_json_obj(self) -> list[dict]:
        out: list[dict] = []
        for node in self.nodes:
            if isinstance(node, Leaf):
                out.append({"leaf": node.value})
            elif node.category is not None:
                out.append({"feature": node.feature, "category": node.category,
                            "left": node.left, "right": node.right})
            else:
                out.append({"feature": node.feature, "threshold": node.threshold,
                            "left": node.left, "right": node.right})
        return out

    @classmethod
    def from_json_obj(cls, obj: Sequence[dict]) -> "Tree":
        nodes: list[Split | Leaf] = []
        for rec in obj:
            if "leaf" in rec:
                nodes.append(Leaf(float(rec["leaf"])))
            else:
                nodes.append(Split(
                    feature=int(rec["feature"]),
                    left=int(rec["left"]),
                    right=int(rec["right"]),
                    threshold=(float(rec["threshold"]) if "threshold" in rec else None),
                    category=rec.get("category"),
                ))
        return cls(nodes)


# --- training ----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class GbdtParams:
    """Hyperparameters of the boosted ensemble.

    ``seed`` is recorded with the model for provenance; the exact greedy
    learner itself is deterministic.
    """

    rounds: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    min_leaf_count: int = 5
    l2: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rounds < 0 or self.max_depth < 1 or self.min_leaf_count < 1:
            raise DataError("rounds >= 0, max_depth >= 1, min_leaf_count >= 1 required")
        if not 0.0 < self.learning_rate <= 1.0:
            raise DataError("learning_rate must be within (0, 1]")
        if self.l2 < 0:
            raise DataError("l2 must be non-negative")


class _TreeGrower:
    """Grows one tree on gradient/hessian targets via exact greedy splits."""

    def __init__(self, columns: Columns, kinds: Sequence[str], g: np.ndarray,
                 h: np.ndarray, params: GbdtParams):
        self.columns = columns
        self.kinds = kinds
        self.g = g
        self.h = h
        self.p = params
        self.nodes: list[Split | Leaf] = []
        self.row_value = np.zeros(len(g))

    def grow(self) -> Tree:
        self._node(np.arange(len(self.g), dtype=np.intp), depth=0)
        return Tree(self.nodes)

    def _leaf(self, rows: np.ndarray) -> int:
        value = -self.g[rows].sum() / (self.h[rows].sum() + self.p.l2)
        self.nodes.append(Leaf(value))
        self.row_value[rows] = value
        return len(self.nodes) - 1

    def _node(self, rows: np.ndarray, depth: int) -> int:
        if depth >= self.p.max_depth or rows.size < 2 * self.p.min_leaf_count:
            return self._leaf(rows)
        found = self._best_split(rows)
        if found is None:
            return self._leaf(rows)
        gain, feature, threshold, category, left_mask = found
        slot = len(self.nodes)
        self.nodes.append(Leaf(0.0))  # placeholder until children exist
        left = self._node(rows[left_mask], depth + 1)
        right = self._node(rows[~left_mask], depth + 1)
        self.nodes[slot] = Split(feature=feature, left=left, right=right,
                                 threshold=threshold, category=category)
        return slot

    def _best_split(self, rows: np.ndarray):
        g, h, lam, min_leaf = self.g[rows], self.h[rows], self.p.l2, self.p.min_leaf_count
        G, H = g.sum(), h.sum()
        parent = G * G / (H + lam)
        best = None  # (gain, feature, threshold, category, left_mask)
        for j, kind in enumerate(self.kinds):
            col = self.columns[j][rows]
            if kind == "continuous":
                order = np.argsort(col, kind="stable")
                sv = col[order]
                cg = np.cumsum(g[order])
                ch = np.cumsum(h[order])
                m = rows.size
                k = np.arange(1, m)  # left side takes k smallest rows
                ok = (sv[:-1] != sv[1:]) & (k >= min_leaf) & (m - k >= min_leaf)
                if not ok.any():
                    continue
                gl, hl = cg[:-1], ch[:-1]
                gain = 0.5 * (gl**2 / (hl + lam)
                              + (G - gl)**2 / (H - hl + lam) - parent)
                gain = np.where(ok, gain, -np.inf)
                i = int(np.argmax(gain))
                if best is None or gain[i] > best[0]:
                    thr = (sv[i] + sv[i + 1]) / 2.0
                    best = (float(gain[i]), j, float(thr), None, col <= thr)
            else:
                cats, inverse = np.unique(col, return_inverse=True)
                counts = np.bincount(inverse)
                gl = np.bincount(inverse, weights=g)
                hl = np.bincount(inverse, weights=h)
                ok = (counts >= min_leaf) & (rows.size - counts >= min_leaf)
                if not ok.any():
                    continue
                gain = 0.5 * (gl**2 / (hl + lam)
                              + (G - gl)**2 / (H - hl + lam) - parent)
                gain = np.where(ok, gain, -np.inf)
                i = int(np.argmax(gain))
                if best is None or gain[i] > best[0]:
                    best = (float(gain[i]), j, None, str(cats[i]), inverse == i)
        if best is None or best[0] <= 0.0:
            return None
        return best


def _log_loss(y: np.ndarray, p: np.ndarray) -> float:
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


@dataclass(frozen=True)
class GbdtModel:
    """Trained boosted-tree classifier.

    Raw score of a row is ``base_score + learning_rate * sum(tree values)``;
    the probability is its sigmoid.  ``train_loss`` holds the mean logistic
    loss on the training data after 0..rounds rounds.
    """

    schema: tuple[FeatureSpec, ...]
    base_score: float
    trees: tuple[Tree, ...]
    params: GbdtParams
    train_loss: tuple[float, ...] = field(default=(), repr=False)

    def predict_rows(self, schema: tuple[FeatureSpec, ...], columns: Columns) -> np.ndarray:
        if tuple(schema) != self.schema:
            raise SchemaMismatch(
                f"model expects {[f.name for f in self.schema]}, "
                f"got {[f.name for f in schema]}"
            )
        raw = np.full(len(columns[0]), self.base_score)
        for tree in self.trees:
            raw += self.params.learning_rate * tree.predict(columns)
        return np.clip(expit(raw), _P_EPS, 1.0 - _P_EPS)

    def predict_table(self, table: LabeledTable) -> np.ndarray:
        return self.predict_rows(table.schema, table.columns)

    # --- serialization ---

    def to_json_obj(self) -> dict:
        return {
            "kind": "gbdt",
            "schema": [{"name": f.name, "kind": f.kind} for f in self.schema],
            "base_score": self.base_score,
            "params": {
                "rounds": self.params.rounds,
                "max_depth": self.params.max_depth,
                "learning_rate": self.params.learning_rate,
                "min_leaf_count": self.params.min_leaf_count,
                "l2": self.params.l2,
                "seed": self.params.seed,
            },
            "train_loss": list(self.train_loss),
            "trees": [t.to_json_obj() for t in self.trees],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "GbdtModel":
        try:
            schema = tuple(FeatureSpec(f["name"], f["kind"]) for f in obj["schema"])
            return cls(
                schema=schema,
                base_score=float(obj["base_score"]),
                trees=tuple(Tree.from_json_obj(t) for t in obj["trees"]),
                params=GbdtParams(**obj["params"]),
                train_loss=tuple(float(x) for x in obj["train_loss"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed model object: {exc}") from exc

    def save(self, path: str) -> None:
        from .serialize import dump_json

        dump_json(self.to_json_obj(), path)

    @classmethod
    def load(cls, path: str) -> "GbdtModel":
        with open(path, encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: not valid JSON: {exc}") from exc
        return cls.from_json_obj(obj)


def train_gbdt(table: LabeledTable, params: GbdtParams = GbdtParams()) -> GbdtModel:
    """Fit the boosted ensemble on a labeled table.

    Each round fits one tree to the logistic gradients g = p - y and
    hessians h = p(1 - p) of the current ensemble, maximizing
    0.5*[GL^2/(HL+l2) + GR^2/(HR+l2) - G^2/(H+l2)] per split with leaf
    values -G/(H+l2).  The initial raw score is the log-odds of the
    training base rate.
    """
    if table.n_rows == 0:
        raise EmptyTable("cannot train on an empty table")
    y = table.labels.astype(np.float64)
    base_rate = float(np.clip(y.mean(), 1e-6, 1.0 - 1e-6))
    base_score = math.log(base_rate / (1.0 - base_rate))
    kinds = [f.kind for f in table.schema]

    raw = np.full(table.n_rows, base_score)
    p = np.clip(expit(raw), _P_EPS, 1.0 - _P_EPS)
    losses = [_log_loss(y, p)]
    trees: list[Tree] = []
    for _ in range(params.rounds):
        grower = _TreeGrower(table.columns, kinds, g=p - y, h=p * (1.0 - p),
                             params=params)
        trees.append(grower.grow())
        raw = raw + params.learning_rate * grower.row_value
        p = np.clip(expit(raw), _P_EPS, 1.0 - _P_EPS)
        losses.append(_log_loss(y, p))

    return GbdtModel(schema=table.schema, base_score=base_score,
                     trees=tuple(trees), params=params,
                     train_loss=tuple(losses))


def predict_proba(predictor: Predictor, table: LabeledTable) -> np.ndarray:
    """P(label=1) for every row of a table, in row order."""
    return predictor.predict_table(table)


# --- evaluation --------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Metrics:
    """Confusion counts and derived rates at a fixed threshold."""

    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def recall(self) -> float:
        pos = self.tp + self.fn
        return self.tp / pos if pos else 0.0

    @property
    def precision(self) -> float:
        pred_pos = self.tp + self.fp
        return self.tp / pred_pos if pred_pos else 0.0

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.n

    @property
    def error_rate(self) -> float:
        return (self.fp + self.fn) / self.n

    def to_json_obj(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "n": self.n, "threshold": self.threshold,
            "recall": self.recall, "precision": self.precision,
            "accuracy": self.accuracy, "error_rate": self.error_rate,
        }


def evaluate(predictor: Predictor, table: LabeledTable,
             threshold: float = 0.5) -> Metrics:
    """Confusion metrics of a predictor on a table (p >= threshold is positive)."""
    if table.n_rows == 0:
        raise EmptyTable("cannot evaluate on an empty table")
    probs = predictor.predict_table(table)
    pred = probs >= threshold
    actual = table.labels == 1
    return Metrics(
        tp=int(np.sum(pred & actual)),
        fp=int(np.sum(pred & ~actual)),
        tn=int(np.sum(~pred & ~actual)),
        fn=int(np.sum(~pred & actual)),
        threshold=threshold,
    )


# --- external predictions and callables --------------------------------------


class FunctionPredictor:
    """Wrap a plain ``f(columns) -> probabilities`` callable as a Predictor."""

    def __init__(self, schema: tuple[FeatureSpec, ...], fn):
        self.schema = tuple(schema)
        self._fn = fn

    def predict_rows(self, schema: tuple[FeatureSpec, ...], columns: Columns) -> np.ndarray:
        if tuple(schema) != self.schema:
            raise SchemaMismatch("predictor schema does not match rows")
        return np.asarray(self._fn(columns), dtype=np.float64)

    def predict_table(self, table: LabeledTable) -> np.ndarray:
        return self.predict_rows(table.schema, table.columns)


class ExternalPredictions:
    """Predictor backed by a per-row-id probability file.

    Table rows are answered by exact row-id lookup.  Bare rows (as produced
    by explanation-time perturbation) have no id, so they are answered by the
    stored probability of the nearest reference row: continuous features are
    compared on a per-feature standardized scale, each categorical mismatch
    adds one unit of squared distance, and ties go to the lowest row index.
    """

    def __init__(self, probabilities: dict[str, float], reference: LabeledTable):
        for rid in reference.row_ids:
            if rid not in probabilities:
                raise MissingRowId(rid)
        self.probabilities = dict(probabilities)
        self.reference = reference
        self._ref_probs = np.asarray(
            [probabilities[r] for r in reference.row_ids], dtype=np.float64
        )
        self._scale = []
        for spec, col in zip(reference.schema, reference.columns):
            if spec.kind == "continuous":
                sd = float(col.std())
                self._scale.append(sd if sd > 0 else 1.0)
            else:
                self._scale.append(None)

    def predict_table(self, table: LabeledTable) -> np.ndarray:
        try:
            return np.asarray([self.probabilities[r] for r in table.row_ids])
        except KeyError as exc:
            raise MissingRowId(str(exc.args[0])) from None

    def predict_rows(self, schema: tuple[FeatureSpec, ...], columns: Columns) -> np.ndarray:
        if tuple(schema) != self.reference.schema:
            raise SchemaMismatch("rows do not match the reference table schema")
        n = len(columns[0])
        out = np.empty(n)
        ref_cols = self.reference.columns
        # distance matrix in manageable row blocks
        block = max(1, 2_000_000 // max(1, self.reference.n_rows))
        for start in range(0, n, block):
            stop = min(n, start + block)
            d2 = np.zeros((stop - start, self.reference.n_rows))
            for j, spec in enumerate(schema):
                if spec.kind == "continuous":
                    diff = (columns[j][start:stop, None] - ref_cols[j][None, :])
                    d2 += (diff / self._scale[j]) ** 2
                else:
                    d2 += columns[j][start:stop, None] != ref_cols[j][None, :]
            out[start:stop] = self._ref_probs[np.argmin(d2, axis=1)]
        return out


def load_external_predictions(path: str, table: LabeledTable) -> ExternalPredictions:
    """Read a ``row_id,probability`` CSV covering every row of ``table``."""
    probs: dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn("empty file: header row required") from None
        if header != ["row_id", "probability"]:
            raise MissingColumn(f"expected header row_id,probability, got {header!r}")
        for row_idx, row in enumerate(reader):
            if len(row) != 2:
                raise DataError(f"row {row_idx}: expected 2 cells")
            rid, cell = row
            if rid in probs:
                raise DuplicateRowId(rid)
            try:
                p = float(cell)
            except ValueError:
                raise ProbabilityOutOfRange(f"{rid}: {cell!r}") from None
            if not (0.0 <= p <= 1.0):
                raise ProbabilityOutOfRange(f"{rid}: {p!r}")
            probs[rid] = p
    return ExternalPredictions(probs, table)
