"""Synthetic cohorts with planted structure, and independent test oracles.

``gen_factor_cohort`` draws Likert responses from a known CFA model;
``gen_dropout_cohort`` writes the three ingest files with labels drawn from a
known logistic model on the team features. The oracles re-derive alpha, AUC
and the SMOTE segment property by brute force, sharing no code with the
implementations they check.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import NotPositiveDefiniteError, SingleClassError
from .ingest import (
    ActivitySnapshot,
    Cohort,
    ParticipantResponse,
    SubmissionRecord,
    TaskWindow,
    TeamEntry,
    encode_label,
    write_activity,
    write_responses,
    write_submissions,
)
from .pipeline import apply_standardizer, assemble, fit_standardizer
from .psychometrics.reliability import SubscaleMap

# Gaussian cut points for a right-skewed 1..5 scale (mean about 3.84). The
# density at the cuts sums to ~1, so discretizing keeps raw-scale loadings
# close to the latent ones.
DEFAULT_THRESHOLDS = (-1.85, -1.15, -0.45, 0.45)


@dataclass
class FactorPlan:
    loadings: np.ndarray
    factor_cov: np.ndarray
    uniquenesses: np.ndarray
    n: int = 2000
    seed: int = 0
    thresholds: tuple = DEFAULT_THRESHOLDS
    team_size: int = 3

    @classmethod
    def default(cls, n=2000, seed=0, loading=0.75, factor_corr=0.3, smap=None):
        """Equal loadings on the subscale pattern, unit item variances."""
        smap = smap or SubscaleMap.default()
        pattern = smap.pattern()
        L = np.where(pattern, loading, 0.0)
        k = pattern.shape[1]
        Phi = np.full((k, k), factor_corr)
        np.fill_diagonal(Phi, 1.0)
        theta = 1.0 - (L @ Phi * L).sum(axis=1)
        return cls(L, Phi, theta, n, seed)

    def implied_cov(self):
        return self.loadings @ self.factor_cov @ self.loadings.T + np.diag(self.uniquenesses)

    def to_dict(self):
        return {
            "loadings": self.loadings.tolist(),
            "factor_cov": self.factor_cov.tolist(),
            "uniquenesses": self.uniquenesses.tolist(),
            "n": self.n,
            "seed": self.seed,
            "thresholds": list(self.thresholds),
        }


def _sym_root(cov):
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() <= 0:
        raise NotPositiveDefiniteError(
            f"planted covariance not positive definite (min eigenvalue {vals.min():.3g})"
        )
    return (vecs * np.sqrt(vals)) @ vecs.T


def latent_scores(plan, rng, n=None):
    """Gaussian draws with the plan's implied covariance, scaled to unit variance."""
    cov = plan.implied_cov()
    root = _sym_root(cov)
    z = rng.standard_normal((plan.n if n is None else n, cov.shape[0])) @ root
    return z / np.sqrt(np.diag(cov))


def discretize(z, thresholds=DEFAULT_THRESHOLDS):
    return np.searchsorted(np.asarray(thresholds), z, side="right") + 1


def gen_factor_cohort(plan):
    """ParticipantResponse rows drawn from the planted factor model."""
    rng = np.random.default_rng(plan.seed)
    items = discretize(latent_scores(plan, rng), plan.thresholds)
    return [
        ParticipantResponse(f"P{i:06d}", f"T{i // plan.team_size:05d}",
                            tuple(int(v) for v in row))
        for i, row in enumerate(items)
    ]


# -- dropout cohorts -------------------------------------------------------------

# feature order: likes_received, likes_given, topics_entered, posts_read,
# then the six subscale aggregates
DEFAULT_WEIGHTS = (1.2, 0.4, 0.9, 1.1, 0.25, 0.1, 0.3, 0.5, 0.15, 0.3)
DEFAULT_PRIORS = {"task0": 0.95, "task1": 0.75, "task2": 0.55, "stage2_gate": 0.30}
# mean per-window counts: topics_entered, posts_read, likes_given, likes_received
DEFAULT_RATES = (
    (6.0, 25.0, 1.5, 1.0),
    (5.0, 22.0, 1.2, 1.0),
    (4.0, 18.0, 1.0, 0.8),
    (3.0, 12.0, 0.8, 0.6),
)


@dataclass
class DropoutPlan:
    n_teams: int = 1290
    members: tuple = (2, 4)
    weights: tuple = DEFAULT_WEIGHTS
    signal: float = 3.0
    priors: dict = field(default_factory=lambda: dict(DEFAULT_PRIORS))
    intercepts: dict | None = None
    rates: tuple = DEFAULT_RATES
    label_noise: float = 0.0
    orphan_teams: int = 0
    seed: int = 0

    def to_dict(self):
        d = asdict(self)
        d["members"] = list(self.members)
        d["weights"] = list(self.weights)
        d["rates"] = [list(r) for r in self.rates]
        return d


def _solve_intercept(eta, prior):
    """Intercept b with mean(sigmoid(eta + b)) == prior (bisection)."""
    lo, hi = -50.0, 50.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.mean(1.0 / (1.0 + np.exp(-(eta + mid)))) < prior:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class DropoutCohort:
    responses: list
    snapshots: list
    submissions: list
    truth: dict

    def write(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_responses(directory / "responses.csv", self.responses)
        write_activity(directory / "activity.csv", self.snapshots)
        write_submissions(directory / "submissions.csv", self.submissions)
        (directory / "ground_truth.json").write_text(
            json.dumps(self.truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return directory


def gen_dropout_cohort(plan=None, smap=None):
    """Three input tables for a cohort whose labels follow a planted logistic model.

    For each target window the label is Bernoulli(sigmoid(signal * w'x + b))
    where x are the standardized team features the pipeline builds for that
    window, then flipped with probability ``label_noise``. Stage-2 selection is
    a cut on a planted score ``signal * w'x + b + logistic noise``, which is
    the same model written as a latent threshold.
    """
    plan = plan or DropoutPlan()
    smap = smap or SubscaleMap.default()
    rng = np.random.default_rng(plan.seed)
    factor = FactorPlan.default(smap=smap)
    responses, snapshots = [], []
    lo, hi = plan.members
    for t in range(plan.n_teams + plan.orphan_teams):
        tid = f"T{t:05d}"
        size = int(rng.integers(lo, hi + 1))
        engagement = rng.standard_normal()
        team_shift = 0.5 * rng.standard_normal()
        z = (latent_scores(factor, rng, size) + team_shift) / math.sqrt(1.25)
        items = discretize(z)
        for m in range(size):
            pid = f"{tid}-M{m}"
            responses.append(ParticipantResponse(pid, tid, tuple(int(v) for v in items[m])))
            if t >= plan.n_teams:
                continue
            member_level = 0.6 * engagement + 0.4 * rng.standard_normal()
            for w in TaskWindow:
                lam = np.asarray(plan.rates[int(w)]) * math.exp(member_level)
                counts = rng.poisson(lam)
                if counts.any() or (m == 0 and w is TaskWindow.task0):
                    snapshots.append(ActivitySnapshot(pid, tid, w, *(int(c) for c in counts)))

    team_ids = [f"T{t:05d}" for t in range(plan.n_teams)]
    by_team_resp, by_team_snap = {}, {}
    for r in responses:
        by_team_resp.setdefault(r.team_id, []).append(r)
    for s in snapshots:
        by_team_snap.setdefault(s.team_id, []).append(s)
    placeholder = {w: 1 for w in TaskWindow}
    cohort = Cohort({
        tid: TeamEntry(tid, tuple(by_team_resp[tid]), tuple(by_team_snap[tid]), placeholder)
        for tid in team_ids
    })

    weights = np.asarray(plan.weights, dtype=float)
    submissions = []
    truth = {"plan": plan.to_dict(), "intercepts": {}, "labels": {}, "clean_labels": {}}
    for w in TaskWindow:
        fm, _ = assemble(cohort, w, smap)
        x = apply_standardizer(fm.values, fit_standardizer(fm.values))
        eta = plan.signal * (x @ weights)
        if plan.intercepts and w.name in plan.intercepts:
            b = float(plan.intercepts[w.name])
        else:
            b = _solve_intercept(eta, plan.priors[w.name])
        truth["intercepts"][w.name] = b
        if w is TaskWindow.stage2_gate:
            score = eta + b + rng.logistic(size=len(eta))
            clean = (score > 0).astype(int)
        else:
            clean = (rng.random(len(eta)) < 1.0 / (1.0 + np.exp(-(eta + b)))).astype(int)
        flip = rng.random(len(eta)) < plan.label_noise
        labels = np.where(flip, 1 - clean, clean)
        truth["clean_labels"][w.name] = clean.tolist()
        truth["labels"][w.name] = labels.tolist()
        for i, tid in enumerate(fm.team_ids):
            if w is TaskWindow.stage2_gate:
                points = round(max(0.0, 50.0 + 10.0 * float(score[i])), 2)
                rec = SubmissionRecord(tid, w, points, bool(labels[i]))
            else:
                # a few submitted teams score exactly 0; they still count as submitted
                points = None
                if labels[i]:
                    points = 0.0 if rng.random() < 0.02 else float(rng.integers(1, 101))
                rec = SubmissionRecord(tid, w, points, None)
            assert encode_label(rec) == labels[i]
            submissions.append(rec)
    truth["team_ids"] = team_ids
    truth["weights"] = list(plan.weights)
    return DropoutCohort(responses, snapshots, submissions, truth)


# -- oracles ---------------------------------------------------------------------


def oracle_alpha(matrix):
    """Cronbach's alpha by explicit loops over a list-of-rows matrix."""
    rows = [[float(v) for v in row] for row in matrix]
    n = len(rows)
    k = len(rows[0])

    def var(values):
        mu = sum(values) / len(values)
        return sum((v - mu) * (v - mu) for v in values) / (len(values) - 1)

    item_vars = 0.0
    for j in range(k):
        item_vars += var([rows[i][j] for i in range(n)])
    totals = [sum(row) for row in rows]
    return (k / (k - 1)) * (1.0 - item_vars / var(totals))


def oracle_auc(y, s):
    """AUC by enumerating every positive x negative pair; ties count 1/2."""
    pos = [float(si) for yi, si in zip(y, s) if yi == 1]
    neg = [float(si) for yi, si in zip(y, s) if yi == 0]
    if not pos or not neg:
        raise SingleClassError("AUC needs both classes")
    half_wins = 0
    for a in pos:
        for b in neg:
            if a > b:
                half_wins += 2
            elif a == b:
                half_wins += 1
    return float(Fraction(half_wins, 2 * len(pos) * len(neg)))


def oracle_segment_check(x_syn, minority, tol=1e-9):
    """True if ``x_syn`` lies within ``tol`` of a segment joining two minority rows."""
    x = np.asarray(x_syn, dtype=float)
    pts = np.asarray(minority, dtype=float)
    m = len(pts)
    for i in range(m):
        a = pts[i]
        for j in range(i + 1, m):
            b = pts[j]
            ab = b - a
            denom = float(ab @ ab)
            t = 0.0 if denom == 0 else min(max(float((x - a) @ ab) / denom, 0.0), 1.0)
            if np.linalg.norm(a + t * ab - x) < tol:
                return True
    return False
