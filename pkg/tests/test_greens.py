import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nhsense import ChainParams, PoleError, build_dynamical_matrix
from nhsense import greens, oracle
from nhsense.core import Perturbation


@given(n=st.integers(-1, 30), x=st.floats(-3.0, 3.0))
def test_chebyshev_closed_matches_recurrence(n, x):
    ref = greens.chebyshev_u(n, x)
    got = greens.chebyshev_u_closed(n, x)
    assert got == pytest.approx(ref, rel=1e-8, abs=1e-8 * max(1.0, abs(ref)))


def test_chebyshev_edges():
    assert greens.chebyshev_u(-1, 0.3) == 0.0
    assert greens.chebyshev_u(0, 0.3) == 1.0
    assert greens.chebyshev_u_closed(4, 1.0) == 5.0
    assert greens.chebyshev_u_closed(3, -1.0) == -4.0
    np.testing.assert_allclose(greens.chebyshev_u(2, np.array([0.0, 0.5])), [-1.0, 0.0])
    with pytest.raises(ValueError):
        greens.chebyshev_u(-2, 0.1)


def test_table_indexing():
    t = greens.chebyshev_table(3, 0.6, 1.0)
    assert len(t) == 5
    assert t[0] == 0.0 and t[1] == 1.0 and t[2] == pytest.approx(0.6)


def test_single_mode_dressed():
    p = ChainParams.from_hopping(1, 1.0, 0.0, kappa=2.0)
    w = 0.37
    assert greens.chi_dressed(1, 1, w, p) == pytest.approx(1j / (w + 1j))


def _chain(N, J=1.3, A=0.25, kappa=1.0):
    return ChainParams.from_hopping(N, J, A, kappa=kappa)


@pytest.mark.parametrize("N", [2, 3, 6, 9])
def test_dressed_against_resolvent(N):
    p = _chain(N)
    for w in (-1.1, 0.0 if N % 2 else 0.2, 0.77):
        ref = oracle.particle_resolvent(N, p.J, w, kappa=p.kappa)
        for n in range(1, N + 1):
            for m in range(1, N + 1):
                assert greens.chi_dressed(n, m, w, p) == pytest.approx(ref[n - 1, m - 1], rel=1e-11, abs=1e-14)


@given(w=st.floats(-2.5, 2.5))
@settings(max_examples=30, deadline=None)
def test_dyson_form_agrees_away_from_poles(w):
    p = _chain(5)
    try:
        direct = greens.chi_dressed_dyson(4, 2, w, p)
    except PoleError:
        return
    assert greens.chi_dressed(4, 2, w, p) == pytest.approx(direct, rel=1e-7, abs=1e-10)


def test_bare_pole_raises():
    p = _chain(3)
    with pytest.raises(PoleError):
        greens.chi0_bare(1, 1, 0.0, p)  # omega = 0 is a lattice mode for odd N


def test_site_bounds():
    with pytest.raises(IndexError):
        greens.chi_dressed(0, 1, 0.1, _chain(3))


def test_quadrature_directional_factor():
    p = _chain(7, A=0.4)
    w = 0.3
    xx = greens.chi_quadrature("x", "x", 7, 1, w, p)
    pp = greens.chi_quadrature("p", "p", 7, 1, w, p)
    assert abs(xx / pp) == pytest.approx(math.exp(2 * 0.4 * 6))
    assert greens.chi_quadrature("x", "p", 2, 3, w, p) == 0
    with pytest.raises(ValueError):
        greens.chi_quadrature("y", "x", 1, 1, w, p)


def test_log_form_survives_overflow():
    p = ChainParams.from_hopping(2001, 1.0, 0.5)
    lg = greens.chi_quadrature_log("x", "x", 2001, 1, 0.0, p)
    assert math.isfinite(lg.log_abs)
    assert lg.log_abs == pytest.approx(math.log(2.0) + 0.5 * 2000, rel=1e-12)
    small = _chain(5)
    assert greens.chi_quadrature_log("x", "x", 5, 2, 0.2, small).value() == pytest.approx(
        greens.chi_quadrature("x", "x", 5, 2, 0.2, small)
    )


@pytest.mark.parametrize("eps0", [0.0, 1e-3, 0.3])
@pytest.mark.parametrize("N", [1, 4, 11])
def test_perturbed_quadrature_against_resolvent(N, eps0):
    p = _chain(N)
    M = build_dynamical_matrix(p, Perturbation.dispersive_last(eps0))
    for w in (-0.9, 0.13, 1.7):
        G = oracle.resolvent_susceptibility(M, w)
        for n in range(1, N + 1):
            for a, row in (("x", n - 1), ("p", N + n - 1)):
                got = greens.chi_perturbed_quadrature(a, n, w, p, eps0)
                assert got == pytest.approx(G[row, 0], rel=1e-10, abs=1e-13 * np.abs(G[:, 0]).max())


def test_perturbed_reduces_to_dressed():
    p = _chain(5)
    for n in range(1, 6):
        assert greens.chi_perturbed(n, 0.4, p, 0.0) == pytest.approx(greens.chi_dressed(n, 1, 0.4, p))
