"""One-way ANOVA F ranking of features against a binary grouping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SelectionMask:
    indices: tuple[int, ...]  # by descending F, ties to the lower index
    scores: tuple[float, ...]  # F of every feature

    @property
    def n_f(self) -> int:
        return len(self.indices)

    def to_dict(self, names=None) -> dict:
        d = {"indices": list(self.indices), "scores": [_json_float(s) for s in self.scores]}
        if names is not None:
            d["names"] = [names[i] for i in self.indices]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SelectionMask:
        return cls(tuple(int(i) for i in d["indices"]), tuple(float(s) for s in d["scores"]))


def _json_float(x: float):
    return "inf" if np.isinf(x) else float(x)


def anova_f(values, groups) -> float:
    """F statistic of a one-way ANOVA with two groups.

    Returns ``inf`` when the groups differ but have no spread, and 0 when
    neither between- nor within-group variation exists.
    """
    return float(anova_f_matrix(np.asarray(values, dtype=np.float64)[:, None], groups)[0])


def anova_f_matrix(X, groups) -> np.ndarray:
    """F statistic of every column of ``X`` (rows are recordings)."""
    X = np.asarray(X, dtype=np.float64)
    g = np.asarray(groups).astype(bool)
    if g.shape[0] != X.shape[0]:
        raise ValueError("groups and rows differ in length")
    n1, n0 = int(g.sum()), int((~g).sum())
    if n1 == 0 or n0 == 0:
        raise ValueError("both groups must be non-empty")
    n = n0 + n1
    if n < 3:
        raise ValueError("ANOVA needs at least 3 observations")
    # between-group variation below rounding level of the data counts as none
    scale = np.abs(X).max(axis=0) ** 2 * n * 1e-24
    # shifting by a data row keeps means accurate when the spread is tiny next to the offset
    X = X - X[:1]
    a, b = X[g], X[~g]
    ma, mb = a.mean(axis=0), b.mean(axis=0)
    grand = X.mean(axis=0)
    ssb = n1 * (ma - grand) ** 2 + n0 * (mb - grand) ** 2
    ssw = ((a - ma) ** 2).sum(axis=0) + ((b - mb) ** 2).sum(axis=0)
    msb = ssb / 1.0
    msw = ssw / (n - 2)
    msb = np.where(ssb <= scale, 0.0, msb)
    msw = np.where(ssw <= scale, 0.0, msw)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(msw > 0, msb / msw, np.where(msb > 0, np.inf, 0.0))
    return f


def select_top(X, groups, n_f: int) -> SelectionMask:
    """Keep the ``n_f`` features with the largest F; equal scores keep index order."""
    X = np.asarray(X, dtype=np.float64)
    if not 1 <= n_f <= X.shape[1]:
        raise ValueError(f"n_f must be in [1, {X.shape[1]}], got {n_f}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    scores = anova_f_matrix(X, groups)
    order = np.lexsort((np.arange(len(scores)), -scores))
    return SelectionMask(tuple(int(i) for i in order[:n_f]), tuple(float(s) for s in scores))
