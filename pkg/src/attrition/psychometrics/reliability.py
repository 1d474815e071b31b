"""Subscale layout, descriptives and Cronbach's alpha for the OSLQ."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DegenerateError, InsufficientDataError

# 24-item composition of Barnard et al. (2009), items numbered consecutively.
DEFAULT_SUBSCALES = {
    "Goal Setting": (1, 2, 3, 4, 5),
    "Environment Setting": (6, 7, 8, 9),
    "Task Strategies": (10, 11, 12, 13),
    "Time Management": (14, 15, 16),
    "Help Seeking": (17, 18, 19, 20),
    "Self Evaluation": (21, 22, 23, 24),
}


@dataclass(frozen=True)
class SubscaleMap:
    """Named subscales, each a tuple of 1-based item numbers.

    The item lists must partition ``1..n_items`` and every subscale needs at
    least two items.
    """

    subscales: tuple[tuple[str, tuple[int, ...]], ...]
    n_items: int = 24

    def __post_init__(self):
        seen = []
        for name, items in self.subscales:
            if len(items) < 2:
                raise ValueError(f"subscale {name!r} has fewer than 2 items")
            seen.extend(items)
        if sorted(seen) != list(range(1, self.n_items + 1)):
            raise ValueError(
                f"subscale items must partition 1..{self.n_items}; got {sorted(seen)}"
            )

    @classmethod
    def default(cls):
        return cls.from_dict(DEFAULT_SUBSCALES)

    @classmethod
    def from_dict(cls, mapping, n_items=None):
        subscales = tuple((str(k), tuple(int(i) for i in v)) for k, v in mapping.items())
        if n_items is None:
            n_items = sum(len(v) for _, v in subscales)
        return cls(subscales, n_items)

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self):
        return {name: list(items) for name, items in self.subscales}

    @property
    def names(self):
        return [name for name, _ in self.subscales]

    def __len__(self):
        return len(self.subscales)

    def columns(self, name):
        """0-based column indices for subscale ``name``."""
        for n, items in self.subscales:
            if n == name:
                return [i - 1 for i in items]
        raise KeyError(name)

    def pattern(self):
        """``n_items x n_subscales`` boolean loading pattern."""
        pat = np.zeros((self.n_items, len(self.subscales)), dtype=bool)
        for j, (_, items) in enumerate(self.subscales):
            pat[[i - 1 for i in items], j] = True
        return pat


def item_matrix(responses):
    """Stack ParticipantResponse items into an ``n x 24`` float array."""
    return np.array([r.items for r in responses], dtype=float).reshape(len(responses), -1)


def subscale_scores(items, smap):
    """Per-respondent subscale scores (mean of the subscale's items)."""
    items = np.asarray(items, dtype=float)
    return np.column_stack([items[:, smap.columns(name)].mean(axis=1) for name in smap.names])


@dataclass(frozen=True)
class SubscaleStat:
    name: str
    mean: float
    sd: float

    def label(self):
        return f"{self.name} (μ={format_mean(self.mean)})"


def format_mean(value):
    """Up to four decimals, trailing zeros dropped (4.06, 4.1525)."""
    text = f"{value:.4f}".rstrip("0").rstrip(".")
    return text or "0"


def descriptives(responses, smap=None):
    """Mean and sample SD of each subscale score over respondents."""
    smap = smap or SubscaleMap.default()
    if len(responses) < 2:
        raise InsufficientDataError(f"need at least 2 responses, got {len(responses)}")
    scores = subscale_scores(item_matrix(responses), smap)
    means = scores.mean(axis=0)
    sds = scores.std(axis=0, ddof=1)
    return [SubscaleStat(n, float(m), float(s)) for n, m, s in zip(smap.names, means, sds)]


def cronbach_alpha(items):
    """Cronbach's alpha of an ``n x k`` score matrix.

    alpha = k/(k-1) * (1 - sum of item variances / variance of row totals),
    all variances with the n-1 denominator.
    """
    x = np.asarray(items, dtype=float)
    if x.ndim != 2:
        raise ValueError("item matrix must be 2-D")
    n, k = x.shape
    if n < 2 or k < 2:
        raise InsufficientDataError(f"need n >= 2 and k >= 2, got n={n}, k={k}")
    total_var = x.sum(axis=1).var(ddof=1)
    if total_var == 0:
        raise DegenerateError("total-score variance is zero")
    return float(k / (k - 1) * (1.0 - x.var(axis=0, ddof=1).sum() / total_var))


@dataclass(frozen=True)
class AlphaRow:
    name: str
    alpha: float
    k: int
    n: int


def alpha_report(responses, smap=None):
    smap = smap or SubscaleMap.default()
    x = item_matrix(responses)
    rows = []
    for name in smap.names:
        cols = smap.columns(name)
        rows.append(AlphaRow(name, cronbach_alpha(x[:, cols]), len(cols), x.shape[0]))
    return rows
