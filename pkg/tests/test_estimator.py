import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gdno import GeneralizedDNO
from gdno import spectral as sp


def test_params_and_clone():
    est = GeneralizedDNO(h=2.0, Nw=16, route="expansion")
    p = est.get_params()
    assert p["h"] == 2.0 and p["route"] == "expansion"
    c = clone(est)
    assert c.get_params() == p and c is not est


def test_not_fitted():
    with pytest.raises(NotFittedError):
        GeneralizedDNO().transform(np.zeros((8, 8)))


def test_flat_transform_and_score():
    g = sp.HGrid(16, 16)
    Phi = np.sin(g.X) + np.cos(2 * g.Y)
    est = GeneralizedDNO(Nw=16).fit(np.zeros(g.shape))
    expect = np.tanh(1.0) * np.sin(g.X) + 2 * np.tanh(2.0) * np.cos(2 * g.Y)
    assert np.allclose(est.transform(Phi), expect, atol=1e-12)
    assert est.score(Phi, expect) > -1e-12
    batch = est.transform(np.stack([Phi, 2 * Phi]))
    assert batch.shape == (2,) + g.shape and np.allclose(batch[1], 2 * expect, atol=1e-12)


def test_routes_agree_on_small_surface():
    g = sp.HGrid(16, 16)
    eta = 0.01 * np.cos(g.X)
    Phi = np.sin(g.X + g.Y)
    a = GeneralizedDNO(Nw=16).fit(eta).transform(Phi)
    b = GeneralizedDNO(Nw=16, route="expansion", J=3).fit(eta).transform(Phi)
    assert np.max(np.abs(a - b)) < 1e-7


def test_bad_options():
    with pytest.raises(ValueError):
        GeneralizedDNO(route="magic").fit(np.zeros((8, 8)))
    with pytest.raises(ValueError):
        GeneralizedDNO(diffeo="magic").fit(np.zeros((8, 8)))
    est = GeneralizedDNO(Nw=8).fit(np.zeros((8, 8)))
    with pytest.raises(ValueError):
        est.transform(np.zeros((4, 4)))
