import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from attrition.errors import DegenerateError, InsufficientDataError
from attrition.psychometrics import (
    SubscaleMap,
    alpha_report,
    cronbach_alpha,
    descriptives,
    format_mean,
)
from attrition.synth import oracle_alpha

from .conftest import response


def test_default_map_partitions_24_items():
    smap = SubscaleMap.default()
    assert [len(items) for _, items in smap.subscales] == [5, 4, 4, 3, 4, 4]
    pat = smap.pattern()
    assert pat.shape == (24, 6)
    assert (pat.sum(axis=1) == 1).all()


@pytest.mark.parametrize(
    "mapping",
    [
        {"a": [1, 2], "b": [2, 3]},  # overlap
        {"a": [1, 2], "b": [4, 5]},  # gap
        {"a": [1], "b": [2, 3]},  # too small
    ],
)
def test_map_rejects_non_partitions(mapping):
    with pytest.raises(ValueError):
        SubscaleMap.from_dict(mapping, n_items=len({i for v in mapping.values() for i in v}))


def test_descriptives_constant():
    stats = descriptives([response("a", "T", 4), response("b", "T", 4)])
    assert all(s.mean == 4.0 and s.sd == 0.0 for s in stats)


def test_descriptives_symmetric():
    stats = descriptives([response("a", "T", 1), response("b", "T", 5)])
    assert all(s.mean == pytest.approx(3.0) for s in stats)


def test_descriptives_needs_two():
    with pytest.raises(InsufficientDataError):
        descriptives([response("a", "T", 4)])


def test_mean_label_format():
    smap = SubscaleMap.default()
    stats = descriptives([response("a", "T", 4), response("b", "T", 4)], smap)
    assert format_mean(4.06) == "4.06"
    assert format_mean(4.1525) == "4.1525"
    label = stats[0].__class__("Goal Setting", 4.06, 0.5).label()
    assert label == "Goal Setting (μ=4.06)"


def test_alpha_identical_columns():
    col = np.array([1, 3, 2, 5, 4, 4], dtype=float)
    assert cronbach_alpha(np.column_stack([col] * 4)) == pytest.approx(1.0, abs=1e-12)


def test_alpha_hand_fixture():
    # item variances 2.5, 1.2, 1.3; total variance 12.8 -> 1.5 * (1 - 5/12.8)
    x = [[1, 2, 2], [2, 2, 3], [3, 4, 3], [4, 4, 5], [5, 4, 4]]
    assert cronbach_alpha(x) == pytest.approx(0.9140625, abs=1e-12)


def test_alpha_uncorrelated_items_near_zero():
    x = np.random.default_rng(2024).normal(size=(200_000, 6))
    assert abs(cronbach_alpha(x)) < 0.05


def test_alpha_degenerate():
    with pytest.raises(DegenerateError):
        cronbach_alpha(np.ones((5, 3)))
    with pytest.raises(InsufficientDataError):
        cronbach_alpha(np.ones((1, 3)))


matrices = arrays(
    np.float64,
    st.tuples(st.integers(3, 12), st.integers(2, 6)),
    elements=st.integers(1, 5).map(float),
)


@settings(max_examples=60, deadline=None)
@given(matrices, st.data())
def test_alpha_invariances(x, data):
    if x.sum(axis=1).var() == 0:
        return
    a = cronbach_alpha(x)
    assert a <= 1.0 + 1e-12
    perm = data.draw(st.permutations(range(x.shape[1])))
    assert cronbach_alpha(x[:, perm]) == pytest.approx(a, abs=1e-10)
    j = data.draw(st.integers(0, x.shape[1] - 1))
    c = data.draw(st.floats(-10, 10))
    shifted = x.copy()
    shifted[:, j] += c
    assert cronbach_alpha(shifted) == pytest.approx(a, abs=1e-9)
    assert cronbach_alpha(x) == pytest.approx(oracle_alpha(x.tolist()), abs=1e-10)


def test_alpha_report_rows():
    rng = np.random.default_rng(0)
    rs = [response(f"p{i}", "T", items=rng.integers(1, 6, 24).tolist()) for i in range(30)]
    rows = alpha_report(rs)
    assert [r.k for r in rows] == [5, 4, 4, 3, 4, 4]
    assert all(r.n == 30 for r in rows)
