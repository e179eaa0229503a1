"""Shared builders for the test suite."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from hypothesis import settings

from errlens import FeatureSpec, LabeledTable

settings.register_profile("suite", deadline=None)
settings.load_profile("suite")


def make_table(
    columns: Sequence[Sequence[float | str]],
    labels: Sequence[int],
    kinds: Sequence[str] | None = None,
    names: Sequence[str] | None = None,
    row_ids: Sequence[str] | None = None,
) -> LabeledTable:
    """Build a LabeledTable from plain Python lists."""
    d = len(columns)
    kinds = tuple(kinds) if kinds is not None else ("continuous",) * d
    names = tuple(names) if names is not None else tuple(f"f{j}" for j in range(d))
    cols = tuple(
        np.asarray(col, dtype=(str if kind == "categorical" else np.float64))
        for col, kind in zip(columns, kinds)
    )
    ids = (tuple(row_ids) if row_ids is not None
           else tuple(str(i) for i in range(len(labels))))
    return LabeledTable(
        schema=tuple(FeatureSpec(name, kind) for name, kind in zip(names, kinds)),
        columns=cols,
        labels=np.asarray(labels, dtype=np.int64),
        row_ids=ids,
    )


def random_table(rng: np.random.Generator, n: int, d: int) -> LabeledTable:
    """A small all-continuous table with random labels."""
    return make_table(
        [rng.normal(size=n).tolist() for _ in range(d)],
        rng.integers(0, 2, size=n).tolist(),
    )
