import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from kras.config import benchmark_config
from kras.estimator import DissipativeStateFeedback


@pytest.fixture(scope="module")
def fitted():
    return DissipativeStateFeedback(method="convex").fit(benchmark_config(1, 1))


def test_params_round_trip():
    est = DissipativeStateFeedback(rho1=0.1, max_iters=3)
    params = est.get_params()
    assert params["rho1"] == 0.1 and params["max_iters"] == 3
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    assert est.set_params(eps=1e-4).eps == 1e-4


@pytest.mark.parametrize("kwargs", [dict(method="grid"), dict(rho1=0.0), dict(max_iters=-1),
                                    dict(gain_reg=-1.0), dict(alpha=[np.nan])])
def test_invalid_params(kwargs):
    with pytest.raises(ValueError):
        DissipativeStateFeedback(**kwargs).fit(benchmark_config(1, 1))


def test_not_fitted():
    with pytest.raises(NotFittedError):
        DissipativeStateFeedback().predict(np.zeros((1, 2)))


def test_fit_predict_score(fitted):
    assert fitted.n_features_in_ == 2
    X = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, -1.0]])
    np.testing.assert_allclose(fitted.predict(X), X @ fitted.gains_.K.T)
    assert fitted.score() == pytest.approx(-fitted.gamma_)
    assert fitted.gamma_ < 1.0 and fitted.log_ is None


def test_predict_checks_width(fitted):
    with pytest.raises(ValueError):
        fitted.predict(np.zeros((2, 3)))


def test_iterate_method_keeps_log():
    est = DissipativeStateFeedback(max_iters=1, eps=1e-12).fit(benchmark_config(1, 1))
    assert est.log_.n_iterations == 1 and est.log_.is_monotone()
