import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attrition.errors import LeakageError, LengthMismatchError, SingleClassError, TooFewSamplesError
from attrition.evaluation import (
    EvalReport,
    ExperimentConfig,
    ExperimentResult,
    Provenance,
    assert_no_leakage,
    auc_roc,
    derive_seeds,
    fmt,
    metrics,
    parse_target,
    render_model_table,
    run_on_matrix,
    split_80_20,
)
from attrition.ingest import TaskWindow
from attrition.learners import ForestConfig, LogisticConfig
from attrition.pipeline import FeatureMatrix, feature_columns
from attrition.psychometrics import SubscaleMap
from attrition.synth import oracle_auc


def fake_result(y_true, y_pred, target="task0", model="forest", auc=0.5):
    return ExperimentResult(
        target=target, model=model, mode="leakage-safe", metrics=metrics(y_true, y_pred),
        auc=auc, seeds={}, n_train=0, n_test=len(y_true), train_class_counts=[0, 0],
        predictions=[], provenance=Provenance(set(), set(), set(), set()),
    )


def test_split_sizes_and_disjoint():
    plan = split_80_20(1290, seed=7)
    assert (len(plan.train), len(plan.test)) == (1032, 258)
    assert not set(plan.train) & set(plan.test)
    assert sorted(np.concatenate([plan.train, plan.test])) == list(range(1290))


def test_split_deterministic():
    a, b = split_80_20(100, 3), split_80_20(100, 3)
    assert np.array_equal(a.train, b.train)
    assert not np.array_equal(a.train, split_80_20(100, 4).train)


def test_split_stratified_keeps_proportions():
    y = np.array([0] * 20 + [1] * 80)
    plan = split_80_20(100, 1, stratify=y)
    assert (y[plan.test] == 0).sum() == 4 and len(plan.train) == 80


def test_split_too_small():
    with pytest.raises(TooFewSamplesError):
        split_80_20(4, 0)


def test_metrics_fixture():
    m = metrics([0, 1, 1, 0], [0, 1, 1, 1])
    c1 = m.per_class[1]
    assert c1.precision == pytest.approx(2 / 3)
    assert (c1.recall, c1.f1, m.accuracy) == (1.0, pytest.approx(0.8), 0.75)
    assert m.flags == []


def test_metrics_zero_denominators_flagged():
    m = metrics([1, 1, 0, 1], [1, 1, 1, 1])
    assert (m.per_class[0].precision, m.per_class[0].recall, m.per_class[0].f1) == (0, 0, 0)
    assert "precision[0]=0/0" in m.flags and "f1[0]=0/0" in m.flags


def test_metrics_length_mismatch():
    with pytest.raises(LengthMismatchError):
        metrics([0, 1], [0])


def test_auc_fixture():
    assert auc_roc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == 0.75


def test_auc_constant_scores_is_half():
    assert auc_roc([0, 1, 0, 1, 1], [0.3] * 5) == 0.5


def test_auc_single_class():
    with pytest.raises(SingleClassError):
        auc_roc([1, 1], [0.2, 0.4])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 6)), min_size=2, max_size=40))
def test_auc_matches_pair_oracle(pairs):
    y = [p[0] for p in pairs]
    s = [p[1] / 6 for p in pairs]
    if len(set(y)) < 2:
        return
    assert auc_roc(y, s) == oracle_auc(y, s)


def test_fmt():
    assert [fmt(v) for v in (0.0, 1.0, 0.5, 0.9649, 0.004)] == ["0", "1", "0.5", "0.96", "0"]


def test_parse_target():
    assert parse_target("stage2") is TaskWindow.stage2_gate
    assert parse_target("task1") is TaskWindow.task1
    with pytest.raises(KeyError):
        parse_target("task7")


def test_derive_seeds_distinct():
    seeds = {tuple(derive_seeds(0, t, k)) for t in TaskWindow for k in ("logistic", "tree", "forest")}
    assert len(seeds) == 12
    assert derive_seeds(5, TaskWindow.task0, "tree") == derive_seeds(5, TaskWindow.task0, "tree")


def test_table_layout_with_zero_minority_row():
    r0 = fake_result([1, 1, 0, 1, 1], [1, 1, 1, 1, 1], auc=0.5)
    r1 = fake_result([0, 1, 0, 1], [0, 1, 0, 1], target="task1", auc=1.0)
    lines = render_model_table("forest", [r0, r1]).splitlines()
    assert lines[0] == "Random Forest report for task0, task1"
    assert lines[1].split() == ["Precision", "Recall", "F1", "Score", "AUC-ROC", "Accuracy"]
    assert lines[2].split() == ["task0", "0", "0", "0", "0.5", "0.8"]
    assert lines[3].split() == ["0.8", "1", "0.89"]
    assert lines[4].split() == ["task1", "1", "1", "1", "1", "1"]
    assert len(lines) == 2 + 2 * 2


def _matrix(seed=0, n=150):
    rng = np.random.default_rng(seed)
    smap = SubscaleMap.default()
    X = rng.normal(size=(n, 10))
    y = (X[:, 0] + 0.5 * rng.normal(size=n) > 0.8).astype(int)
    fm = FeatureMatrix([f"T{i:04d}" for i in range(n)], feature_columns(smap), X, TaskWindow.task1)
    return fm, y


FAST = dict(logistic=LogisticConfig(max_iter=300), forest=ForestConfig(n_trees=10))


def test_leakage_safe_run_is_clean():
    fm, y = _matrix()
    res = run_on_matrix(fm, y, "forest", ExperimentConfig(seed=1, **FAST))
    assert res.provenance.leaks() == {}
    assert res.n_test == 30
    assert res.train_class_counts[0] == res.train_class_counts[1]
    assert not any(p["row_id"].startswith("synthetic") for p in res.predictions)


def test_paper_mode_trips_guard():
    fm, y = _matrix()
    res = run_on_matrix(fm, y, "logistic",
                        ExperimentConfig(seed=1, smote_mode="paper-replication", **FAST))
    assert "standardizer" in res.provenance.leaks()
    with pytest.raises(LeakageError):
        assert_no_leakage(res.provenance)


def test_run_is_deterministic():
    fm, y = _matrix(3)
    cfg = ExperimentConfig(seed=4, **FAST)
    a = run_on_matrix(fm, y, "forest", cfg)
    b = run_on_matrix(fm, y, "forest", cfg)
    assert a.predictions == b.predictions


def test_report_json_sorted_and_text():
    fm, y = _matrix()
    rep = EvalReport(config={"smote_mode": "leakage-safe"},
                     results=[run_on_matrix(fm, y, "tree", ExperimentConfig(**FAST))])
    assert rep.to_json().startswith('{\n  "config"')
    assert rep.to_text().startswith("SMOTE mode: leakage-safe\n\nDecision Tree report for task1")
    assert rep.predictions_csv().splitlines()[0] == "model,target,row_id,y_true,score,y_pred"
