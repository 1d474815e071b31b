"""Team feature matrices, standardization and SMOTE balancing."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (
    EmptyTeamError,
    InsufficientDataError,
    MissingLabelError,
    SingleClassError,
    TinyMinorityError,
)
from .ingest import COUNTERS, TaskWindow
from .psychometrics.reliability import SubscaleMap, subscale_scores

ACTIVITY_COLUMNS = (
    "max_likes_received",
    "max_likes_given",
    "max_topics_entered",
    "max_posts_read",
)
# position of each activity column inside a COUNTERS-ordered vector
_ACTIVITY_ORDER = [COUNTERS.index(c.removeprefix("max_")) for c in ACTIVITY_COLUMNS]
AGGREGATES = ("mean", "max", "min")
STANDARDIZE_MODES = ("all", "oslq-only")


def oslq_column(name):
    return "oslq_" + name.lower().replace(" ", "_")


def feature_columns(smap):
    return list(ACTIVITY_COLUMNS) + [oslq_column(n) for n in smap.names]


def cumulative_activity(snapshots, participant, target):
    """Sum a participant's counters over every window up to and including ``target``.

    Returns a length-4 integer array in ``COUNTERS`` order
    (topics_entered, posts_read, likes_given, likes_received).
    """
    total = np.zeros(len(COUNTERS), dtype=np.int64)
    for s in snapshots:
        if s.participant_id == participant and s.window <= target:
            total += s.counts
    return total


def team_max(vectors):
    """Element-wise maximum over member count vectors."""
    vectors = [np.asarray(v) for v in vectors]
    if not vectors:
        raise EmptyTeamError("team has no member activity")
    return np.max(np.vstack(vectors), axis=0)


def team_oslq(responses, smap, aggregate="mean"):
    """Aggregate per-member subscale scores to one value per subscale."""
    if not responses:
        raise EmptyTeamError("team has no questionnaire responses")
    if aggregate not in AGGREGATES:
        raise ValueError(f"aggregate must be one of {AGGREGATES}")
    items = np.array([r.items for r in responses], dtype=float)
    scores = subscale_scores(items, smap)
    return getattr(np, aggregate)(scores, axis=0)


@dataclass
class FeatureMatrix:
    team_ids: list
    columns: list
    values: np.ndarray
    target: TaskWindow

    def __post_init__(self):
        if self.values.shape != (len(self.team_ids), len(self.columns)):
            raise ValueError("values shape does not match team_ids x columns")
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate column names")
        if np.isnan(self.values).any():
            raise ValueError("feature matrix contains missing values")

    def __len__(self):
        return len(self.team_ids)

    def write_csv(self, path, labels=None):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["team_id", *self.columns, *(["label"] if labels is not None else [])])
            for i, tid in enumerate(self.team_ids):
                row = [tid, *(repr(float(v)) for v in self.values[i])]
                if labels is not None:
                    row.append(int(labels[i]))
                w.writerow(row)


def assemble(cohort, target, smap=None, aggregate="mean"):
    """Build the team x 10 feature matrix and label vector for ``target``.

    Activity features only use windows up to the target's deadline. Rows are
    sorted by team_id.
    """
    smap = smap or SubscaleMap.default()
    target = TaskWindow(target)
    rows, labels = [], []
    team_ids = cohort.team_ids
    for tid in team_ids:
        team = cohort.teams[tid]
        if target not in team.labels:
            raise MissingLabelError(f"team {tid!r} has no label for {target.name}")
        per_member = defaultdict(lambda: np.zeros(len(COUNTERS), dtype=np.int64))
        for s in team.snapshots:
            if s.window <= target:
                per_member[s.participant_id] += s.counts
            else:
                # later-window-only members still count, with zeros
                per_member[s.participant_id]
        activity = team_max(list(per_member.values()))[_ACTIVITY_ORDER]
        rows.append(np.concatenate([activity.astype(float), team_oslq(team.responses, smap, aggregate)]))
        labels.append(team.labels[target])
    values = np.vstack(rows) if rows else np.zeros((0, 4 + len(smap)))
    fm = FeatureMatrix(list(team_ids), feature_columns(smap), values, target)
    return fm, np.asarray(labels, dtype=np.int64)


@dataclass
class StandardizationStats:
    mean: np.ndarray
    sd: np.ndarray
    scaled: np.ndarray
    constant: np.ndarray

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "sd": self.sd.tolist(),
            "scaled": self.scaled.tolist(),
            "constant": self.constant.tolist(),
        }


def fit_standardizer(X, columns=None):
    """Column means and sample SDs (n-1). Constant columns are flagged, not scaled.

    ``columns`` restricts scaling to the given indices; all columns by default.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise InsufficientDataError("need at least 2 rows to standardize")
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    constant = sd == 0
    wanted = np.zeros(X.shape[1], dtype=bool)
    wanted[list(range(X.shape[1])) if columns is None else list(columns)] = True
    return StandardizationStats(mean, sd, wanted & ~constant, constant)


def apply_standardizer(X, stats):
    X = np.array(X, dtype=float, copy=True)
    s = stats.scaled
    X[:, s] = (X[:, s] - stats.mean[s]) / stats.sd[s]
    return X


def standardize_columns(mode, n_activity=4, n_features=10):
    if mode == "all":
        return None
    if mode == "oslq-only":
        return list(range(n_activity, n_features))
    raise ValueError(f"standardize mode must be one of {STANDARDIZE_MODES}")


@dataclass
class SmoteConfig:
    k: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


def nearest_neighbors(points, k):
    """Indices of the ``k`` nearest other points (Euclidean, ties to lower index)."""
    d2 = cdist(points, points, "sqeuclidean")
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def smote(X, y, cfg=None, rng=None, return_parents=False):
    """Oversample the minority class until both classes have equal counts.

    Each synthetic row is ``x + lam * (x_nn - x)`` for a uniformly chosen
    minority row ``x``, one of its k nearest minority neighbours ``x_nn`` and
    ``lam ~ U[0, 1)``. Originals come first, unchanged; synthetic rows follow.

    With ``return_parents=True`` a third array of shape ``(n_new, 2)`` gives
    the original row indices (base, neighbour) behind each synthetic row.
    """
    cfg = cfg or SmoteConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise SingleClassError("SMOTE needs both classes present")
    minority = classes[np.argmin(counts)]
    min_idx = np.nonzero(y == minority)[0]
    n_min, n_maj = counts.min(), counts.max()
    if n_min < 2:
        raise TinyMinorityError(f"minority class has {n_min} row(s); need >= 2")
    n_new = int(n_maj - n_min)
    if n_new == 0:
        out = (X.copy(), y.copy())
        return (*out, np.zeros((0, 2), dtype=np.int64)) if return_parents else out
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    k = min(cfg.k, n_min - 1)
    nn = nearest_neighbors(X[min_idx], k)
    base = np.asarray(rng.integers(0, n_min, size=n_new))
    pick = np.asarray(rng.integers(0, k, size=n_new))
    lam = np.asarray(rng.random(size=n_new))
    neigh = nn[base, pick]
    xb, xn = X[min_idx[base]], X[min_idx[neigh]]
    synth = xb + lam[:, None] * (xn - xb)
    X_out = np.vstack([X, synth])
    y_out = np.concatenate([y, np.full(n_new, minority, dtype=np.int64)])
    if return_parents:
        return X_out, y_out, np.column_stack([min_idx[base], min_idx[neigh]])
    return X_out, y_out
