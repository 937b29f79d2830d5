import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from taylorbie import TaylorStateSolver, beltrami_solver as bs, field_eval as fe
from taylorbie.errors import ConfigError
from taylorbie.geometry import discretize_arclength, make_miller_curve


@pytest.fixture(scope="module")
def curve():
    return make_miller_curve(1.0, 0.5, 1.5, 0.2)


def test_params_round_trip():
    est = TaylorStateSolver(lam=2.0, n=32, upsample=2)
    params = est.get_params()
    assert params["lam"] == 2.0 and params["n"] == 32 and params["flux_pol"] is None
    c = clone(est).set_params(flux_tor=3.0)
    assert c.flux_tor == 3.0 and c.lam == 2.0


def test_predict_requires_fit():
    with pytest.raises(NotFittedError):
        TaylorStateSolver().predict([[1.0, 0.0, 0.0]])


def test_predict_matches_functional_api(curve):
    est = TaylorStateSolver(lam=1.3, n=32, upsample=2).fit(curve)
    X = np.array([[1.0, 0.0, 0.0], [1.1, 0.3, 0.2]])
    sol = bs.solve_genus1(discretize_arclength(curve, 32), 1.3, 1.0, upsample=2)
    assert np.allclose(est.predict(X), fe.eval_B_array(sol, X), rtol=1e-13, atol=0)
    assert est.cond_ == est.solution_.cond
    with pytest.raises(ConfigError):
        est.predict(X[:, :2])
    with pytest.raises(ValueError):
        est.predict([[np.nan, 0.0, 0.0]])


def test_shell_needs_poloidal_flux(curve):
    inner = make_miller_curve(1.0, 0.2, 1.2, 0.1)
    with pytest.raises(ConfigError):
        TaylorStateSolver(lam=1.3, n=24, upsample=1).fit((curve, inner))
    est = TaylorStateSolver(lam=1.3, n=24, upsample=1, flux_pol=0.5).fit((curve, inner))
    assert len(est.grids_) == 2


def test_fit_rejects_other_inputs():
    with pytest.raises(ConfigError):
        TaylorStateSolver().fit(np.zeros((5, 3)))
