import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import pearsonr

from scr.errors import ContractError, UndefinedCorrelationError
from scr.metrics import evaluate, mse, pearson_r


def test_examples():
    assert pearson_r([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-15)
    assert pearson_r([1, 2, 3], [6, 4, 2]) == pytest.approx(-1.0, abs=1e-15)
    assert pearson_r([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)
    assert mse([0, 0], [1, 3]) == 5.0


def test_zero_variance_is_an_error():
    with pytest.raises(UndefinedCorrelationError):
        pearson_r([1, 1, 1], [1, 2, 3])
    with pytest.raises(ContractError):
        pearson_r([1], [1])
    with pytest.raises(ContractError):
        mse([1, 2], [1])


def test_result_line_format():
    line = evaluate([1, 2, 3, 4], [1, 3, 2, 4]).line()
    assert line.startswith("pearson_r=0.8") and line.endswith(", n=4")
    assert "mse=0.5," in line


vectors = st.integers(3, 50).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-1e3, 1e3), min_size=n, max_size=n),
        st.lists(st.floats(-1e3, 1e3), min_size=n, max_size=n),
    )
)


def spread(v):
    v = np.asarray(v)
    return np.ptp(v) > 1e-3 * max(1.0, np.abs(v).max())


@settings(max_examples=200, deadline=None)
@given(vectors, st.floats(0.01, 100), st.floats(-100, 100))
def test_bounds_and_affine_invariance(xy, a, b):
    x, y = xy
    if not (spread(x) and spread(y)):
        return
    r = pearson_r(x, y)
    assert -1.0 <= r <= 1.0
    assert abs(pearson_r(a * np.asarray(x) + b, y) - r) < 1e-10
    assert abs(r - pearsonr(x, y)[0]) < 1e-10
