"""Train/test splitting, classification metrics, experiments and reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import learners
from .errors import (
    AttritionError,
    LeakageError,
    LengthMismatchError,
    SingleClassError,
    TooFewSamplesError,
)
from .ingest import TaskWindow
from .pipeline import (
    SmoteConfig,
    apply_standardizer,
    assemble,
    fit_standardizer,
    smote,
    standardize_columns,
)

log = logging.getLogger(__name__)

SMOTE_MODES = ("leakage-safe", "paper-replication")
MODEL_KINDS = ("logistic", "tree", "forest")
MODEL_TITLES = {
    "logistic": "Logistic Regression",
    "tree": "Decision Tree",
    "forest": "Random Forest",
}
# report label for each target window
TARGETS = {
    "task0": TaskWindow.task0,
    "task1": TaskWindow.task1,
    "task2": TaskWindow.task2,
    "stage2": TaskWindow.stage2_gate,
}


def target_name(window):
    window = TaskWindow(window)
    for name, w in TARGETS.items():
        if w is window:
            return name
    raise KeyError(window)


def parse_target(text):
    if text in TARGETS:
        return TARGETS[text]
    return TaskWindow[text]


# -- splitting ------------------------------------------------------------------


@dataclass(frozen=True)
class SplitPlan:
    train: np.ndarray
    test: np.ndarray
    seed: int
    mode: str = "leakage-safe"


def n_train_for(n):
    return int(math.floor(0.8 * n + 0.5))


def split_80_20(n, seed, mode="leakage-safe", stratify=None):
    """Seeded random 80/20 split; the first round(0.8 n) permuted rows train.

    ``stratify`` (a label vector) keeps class proportions per fold instead.
    """
    if n < 5:
        raise TooFewSamplesError(f"need at least 5 rows to split, got {n}")
    rng = np.random.default_rng(seed)
    n_train = n_train_for(n)
    if stratify is None:
        perm = rng.permutation(n)
        return SplitPlan(np.sort(perm[:n_train]), np.sort(perm[n_train:]), seed, mode)
    labels = np.asarray(stratify)
    if len(labels) != n:
        raise LengthMismatchError("stratify labels must have length n")
    train, test = [], []
    classes = np.unique(labels)
    quotas = {c: n_train_for(int((labels == c).sum())) for c in classes}
    # fix rounding drift on the largest class so |train| == round(0.8 n)
    largest = max(classes, key=lambda c: ((labels == c).sum(), -c))
    quotas[largest] += n_train - sum(quotas.values())
    for c in classes:
        idx = rng.permutation(np.nonzero(labels == c)[0])
        train.append(idx[: quotas[c]])
        test.append(idx[quotas[c]:])
    return SplitPlan(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)), seed, mode)


# -- metrics --------------------------------------------------------------------


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_labels(cls, y_true, y_pred):
        t = np.asarray(y_true)
        p = np.asarray(y_pred)
        return cls(
            tp=int(((t == 1) & (p == 1)).sum()),
            fp=int(((t == 0) & (p == 1)).sum()),
            tn=int(((t == 0) & (p == 0)).sum()),
            fn=int(((t == 1) & (p == 0)).sum()),
        )

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float


@dataclass
class Metrics:
    confusion: ConfusionMatrix
    per_class: dict
    accuracy: float
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {
            "confusion": asdict(self.confusion),
            "per_class": {str(c): asdict(s) for c, s in self.per_class.items()},
            "accuracy": self.accuracy,
            "flags": list(self.flags),
        }


def _ratio(num, den, flag, flags):
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def metrics(y_true, y_pred):
    """Per-class precision/recall/F1 and accuracy from one confusion matrix.

    Zero denominators give 0 and add a flag such as ``"precision[0]=0/0"``.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise LengthMismatchError(f"{len(y_true)} labels vs {len(y_pred)} predictions")
    if not np.isin(y_true, (0, 1)).all() or not np.isin(y_pred, (0, 1)).all():
        raise ValueError("labels and predictions must be 0/1")
    cm = ConfusionMatrix.from_labels(y_true, y_pred)
    flags = []
    per_class = {}
    for c, (hit, pred_c, actual_c) in {
        0: (cm.tn, cm.tn + cm.fn, cm.tn + cm.fp),
        1: (cm.tp, cm.tp + cm.fp, cm.tp + cm.fn),
    }.items():
        p = _ratio(hit, pred_c, f"precision[{c}]=0/0", flags)
        r = _ratio(hit, actual_c, f"recall[{c}]=0/0", flags)
        f1 = _ratio(2 * p * r, p + r, f"f1[{c}]=0/0", flags)
        per_class[c] = ClassScores(p, r, f1)
    accuracy = (cm.tp + cm.tn) / cm.total if cm.total else 0.0
    return Metrics(cm, per_class, accuracy, flags)


def auc_roc(y_true, scores):
    """Mann-Whitney AUC: P(score_pos > score_neg) with ties counted as 1/2."""
    y = np.asarray(y_true)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise LengthMismatchError("labels and scores differ in length")
    n1 = int((y == 1).sum())
    n0 = int((y == 0).sum())
    if n1 == 0 or n0 == 0:
        raise SingleClassError("AUC needs both classes")
    ranks = rankdata(s, method="average")
    # rank sums of midranks are exact multiples of 1/2
    u = float(ranks[y == 1].sum()) - n1 * (n1 + 1) / 2.0
    return u / (n1 * n0)


# -- experiments --------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    seed: int = 0
    smote_mode: str = "leakage-safe"
    standardize: str = "all"
    stratify: bool = False
    smote_k: int = 5
    aggregate: str = "mean"
    logistic: learners.LogisticConfig = field(default_factory=learners.LogisticConfig)
    tree: learners.TreeConfig = field(default_factory=learners.TreeConfig)
    forest: learners.ForestConfig = field(default_factory=learners.ForestConfig)

    def __post_init__(self):
        if self.smote_mode not in SMOTE_MODES:
            raise ValueError(f"smote_mode must be one of {SMOTE_MODES}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        sub = {
            "logistic": learners.LogisticConfig,
            "tree": learners.TreeConfig,
            "forest": learners.ForestConfig,
        }
        for key, klass in sub.items():
            if key in d and isinstance(d[key], dict):
                d[key] = klass(**d[key])
        return cls(**d)


def derive_seeds(master_seed, target, kind, n=3):
    """Independent per-experiment seeds from (master seed, target, model)."""
    ss = np.random.SeedSequence([int(master_seed), int(TaskWindow(target)), MODEL_KINDS.index(kind)])
    return [int(v) for v in ss.generate_state(n)]


def train_model(kind, X, y, cfg, seed):
    if kind == "logistic":
        return learners.train_logistic(X, y, cfg.logistic)
    if kind == "tree":
        return learners.train_tree(X, y, cfg.tree)
    if kind == "forest":
        fc = cfg.forest
        return learners.train_forest(
            X, y,
            learners.ForestConfig(fc.n_trees, fc.m, seed, fc.bootstrap, fc.max_depth,
                                  fc.min_samples_split),
        )
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass
class Provenance:
    """Original-row indices that influenced each fitted stage, plus the test rows.

    Synthetic SMOTE rows are traced to the original rows they interpolate.
    """

    standardizer: set
    smote: set
    training: set
    test: set

    def leaks(self):
        return {
            stage: sorted(getattr(self, stage) & self.test)
            for stage in ("standardizer", "smote", "training")
            if getattr(self, stage) & self.test
        }

    def to_dict(self):
        return {k: sorted(int(i) for i in getattr(self, k))
                for k in ("standardizer", "smote", "training", "test")}


def assert_no_leakage(prov):
    leaks = prov.leaks()
    if leaks:
        summary = ", ".join(f"{k}: {len(v)} test row(s)" for k, v in leaks.items())
        raise LeakageError(f"held-out rows influenced fitted stages ({summary})")


@dataclass
class ExperimentResult:
    target: str
    model: str
    mode: str
    metrics: Metrics
    auc: float
    seeds: dict
    n_train: int
    n_test: int
    train_class_counts: list
    predictions: list
    provenance: Provenance = field(repr=False)
    model_obj: object = field(default=None, repr=False)
    standardizer: object = field(default=None, repr=False)

    @property
    def accuracy(self):
        return self.metrics.accuracy

    def to_dict(self):
        return {
            "target": self.target,
            "model": self.model,
            "mode": self.mode,
            "seeds": self.seeds,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "train_class_counts": self.train_class_counts,
            "auc_roc": self.auc,
            "accuracy": self.accuracy,
            "metrics": self.metrics.to_dict(),
        }


def run_on_matrix(fm, labels, kind, cfg=None):
    """Run one (target, model) experiment on an assembled feature matrix."""
    cfg = cfg or ExperimentConfig()
    target = TaskWindow(fm.target)
    split_seed, smote_seed, model_seed = derive_seeds(cfg.seed, target, kind)
    X = np.asarray(fm.values, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    n = len(y)
    scale_cols = standardize_columns(cfg.standardize, 4, X.shape[1])
    smote_cfg = SmoteConfig(cfg.smote_k, smote_seed)
    row_ids = list(fm.team_ids)

    if cfg.smote_mode == "leakage-safe":
        plan = split_80_20(n, split_seed, cfg.smote_mode, y if cfg.stratify else None)
        stats = fit_standardizer(X[plan.train], scale_cols)
        Xs = apply_standardizer(X, stats)
        X_tr, y_tr, parents = smote(Xs[plan.train], y[plan.train], smote_cfg, return_parents=True)
        origin_tr = plan.train
        # map SMOTE-local parent indices back to original rows
        synth_parents = origin_tr[parents] if len(parents) else np.zeros((0, 2), dtype=np.int64)
        X_te, y_te = Xs[plan.test], y[plan.test]
        test_ids = [row_ids[i] for i in plan.test]
        prov = Provenance(
            standardizer=set(plan.train.tolist()),
            smote=set(plan.train.tolist()),
            training=set(plan.train.tolist()) | set(synth_parents.ravel().tolist()),
            test=set(plan.test.tolist()),
        )
        assert_no_leakage(prov)
    else:
        stats = fit_standardizer(X, scale_cols)
        Xs = apply_standardizer(X, stats)
        X_bal, y_bal, parents = smote(Xs, y, smote_cfg, return_parents=True)
        n_syn = len(X_bal) - n
        # each augmented row's originating rows
        origins = [{i} for i in range(n)] + [set(p.tolist()) for p in parents]
        ids = row_ids + [f"synthetic:{j}" for j in range(n_syn)]
        plan = split_80_20(len(y_bal), split_seed, cfg.smote_mode, y_bal if cfg.stratify else None)
        X_tr, y_tr = X_bal[plan.train], y_bal[plan.train]
        X_te, y_te = X_bal[plan.test], y_bal[plan.test]
        test_ids = [ids[i] for i in plan.test]
        test_orig = set().union(*(origins[i] for i in plan.test)) if len(plan.test) else set()
        train_orig = set().union(*(origins[i] for i in plan.train))
        prov = Provenance(
            standardizer=set(range(n)),
            smote=set(range(n)),
            training=train_orig,
            test=test_orig,
        )

    model = train_model(kind, X_tr, y_tr, cfg, model_seed)
    scores = model.predict_score(X_te)
    y_hat = (scores >= learners.THRESHOLD).astype(np.int64)
    m = metrics(y_te, y_hat)
    auc = auc_roc(y_te, scores)
    preds = [
        {"row_id": rid, "y_true": int(t), "score": float(s), "y_pred": int(p)}
        for rid, t, s, p in zip(test_ids, y_te, scores, y_hat)
    ]
    counts = np.bincount(y_tr, minlength=2)
    return ExperimentResult(
        target=target_name(target),
        model=kind,
        mode=cfg.smote_mode,
        metrics=m,
        auc=float(auc),
        seeds={"split": split_seed, "smote": smote_seed, "model": model_seed},
        n_train=int(len(y_tr)),
        n_test=int(len(y_te)),
        train_class_counts=[int(counts[0]), int(counts[1])],
        predictions=preds,
        provenance=prov,
        model_obj=model,
        standardizer=stats,
    )


def score_saved(model, fm, labels, stats, row_ids):
    """Score a trained model on the named rows of ``fm`` with saved scaling."""
    index = {tid: i for i, tid in enumerate(fm.team_ids)}
    try:
        rows = np.array([index[r] for r in row_ids], dtype=np.int64)
    except KeyError as exc:
        raise LengthMismatchError(f"row {exc.args[0]!r} not in the feature matrix") from None
    X = apply_standardizer(fm.values[rows], stats)
    y = np.asarray(labels)[rows]
    scores = model.predict_score(X)
    y_hat = (scores >= learners.THRESHOLD).astype(np.int64)
    return metrics(y, y_hat), auc_roc(y, scores)


def run_experiment(cohort, target, kind, cfg=None, smap=None):
    """Assemble features for ``target`` and run one model on them."""
    cfg = cfg or ExperimentConfig()
    fm, labels = assemble(cohort, TaskWindow(target), smap, cfg.aggregate)
    return run_on_matrix(fm, labels, kind, cfg)


# -- reports -------------------------------------------------------------------------


@dataclass
class EvalReport:
    config: dict
    results: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def cell(self, model, target):
        for r in self.results:
            if r.model == model and r.target == target:
                return r
        return None

    def to_dict(self):
        return {
            "config": self.config,
            "results": [r.to_dict() for r in self.results],
            "failures": list(self.failures),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def predictions_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "target", "row_id", "y_true", "score", "y_pred"])
        for r in self.results:
            for p in r.predictions:
                w.writerow([r.model, r.target, p["row_id"], p["y_true"], repr(p["score"]), p["y_pred"]])
        return buf.getvalue()

    def to_text(self):
        return render_report(self)


def fmt(value):
    """Two decimals with trailing zeros dropped: 0, 1, 0.5, 0.96."""
    text = f"{value:.2f}".rstrip("0").rstrip(".")
    return "0" if text in ("", "-0") else text


HEADER = ("", "Precision", "Recall", "F1 Score", "AUC-ROC", "Accuracy")


def report_rows(result):
    """Two rows: class 0 (dropout) first with the shared AUC/accuracy, then class 1."""
    c0, c1 = result.metrics.per_class[0], result.metrics.per_class[1]
    return [
        (result.target, fmt(c0.precision), fmt(c0.recall), fmt(c0.f1),
         fmt(result.auc), fmt(result.accuracy)),
        ("", fmt(c1.precision), fmt(c1.recall), fmt(c1.f1), "", ""),
    ]


def _align(rows):
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    out = []
    for r in rows:
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        out.append("  ".join(cells).rstrip())
    return out


def render_model_table(model, results, failures=()):
    targets = [t for t in TARGETS if any(r.target == t for r in results)
               or any(f["target"] == t for f in failures)]
    title = f"{MODEL_TITLES[model]} report for {', '.join(targets)}"
    rows = [HEADER]
    for t in targets:
        r = next((r for r in results if r.target == t), None)
        if r is not None:
            rows.extend(report_rows(r))
        else:
            reason = next(f["error"] for f in failures if f["target"] == t)
            rows.append((t, "failed:", reason, "", "", ""))
    return "\n".join([title, *_align(rows)])


def render_report(report):
    mode = report.config.get("smote_mode", "leakage-safe")
    blocks = [f"SMOTE mode: {mode}"]
    for model in MODEL_KINDS:
        res = [r for r in report.results if r.model == model]
        fails = [f for f in report.failures if f["model"] == model]
        if res or fails:
            blocks.append(render_model_table(model, res, fails))
    return "\n\n".join(blocks) + "\n"


def run_all(cohort, cfg=None, smap=None, targets=None, models=None):
    """Every (target, model) experiment; failures are recorded, not raised."""
    cfg = cfg or ExperimentConfig()
    targets = list(targets or TARGETS.values())
    models = list(models or MODEL_KINDS)
    report = EvalReport(config=cfg.to_dict())
    for target in targets:
        try:
            fm, labels = assemble(cohort, target, smap, cfg.aggregate)
        except AttritionError as exc:
            for kind in models:
                report.failures.append(
                    {"target": target_name(target), "model": kind, "error": str(exc)})
            continue
        for kind in models:
            try:
                report.results.append(run_on_matrix(fm, labels, kind, cfg))
            except AttritionError as exc:
                log.warning("experiment %s/%s failed: %s", target_name(target), kind, exc)
                report.failures.append(
                    {"target": target_name(target), "model": kind, "error": str(exc)})
    return report
