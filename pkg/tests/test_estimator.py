import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fracmin.estimator import SPerimeterMinimizer


def test_params_round_trip():
    est = SPerimeterMinimizer(s=0.3, M=2.0, h=0.25)
    assert est.get_params()["s"] == 0.3
    c = clone(est)
    assert c.get_params() == est.get_params()


def test_fit_predict_sticky():
    est = SPerimeterMinimizer(M=0.5, h=0.125).fit()
    assert est.regime_ == "Sticky"
    pts = np.array([[0.0, 0.0], [0.9, 0.3], [2.0, 0.0], [0.0, 3.0]])
    # inside the window the set fills the cylinder; outside it follows the datum
    assert est.predict(pts).tolist() == [1, 1, 0, 1]


def test_fit_predict_disconnected():
    est = SPerimeterMinimizer(M=4.0, h=0.125, trunc_radius=4.0, free_depth=1.0).fit()
    assert est.regime_ == "Disconnected"
    assert est.predict([[0.0, 0.0]])[0] == 0
    assert est.predict([[0.0, 4.5]])[0] == 1


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        SPerimeterMinimizer().predict([[0.0, 0.0]])


def test_predict_dimension_check():
    est = SPerimeterMinimizer(M=0.5, h=0.25).fit()
    with pytest.raises(ValueError):
        est.predict([[0.0, 0.0, 0.0]])
