import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nhsense import ChainParams, EvenChainWarning, Perturbation, PerturbationKind, StabilityError
from nhsense.core import (
    build_dynamical_matrix,
    derive_hopping_params,
    hatano_nelson_block,
    invert_hopping_params,
    perturbation_matrix,
    stability_margin,
    z2_operator,
    z2_symmetry_check,
)


@given(
    w=st.floats(0.01, 100.0),
    ratio=st.floats(0.0, 0.999),
)
def test_hopping_roundtrip(w, ratio):
    J, A = derive_hopping_params(w, ratio * w)
    w2, d2 = invert_hopping_params(J, A)
    assert w2 == pytest.approx(w, rel=1e-12)
    assert d2 == pytest.approx(ratio * w, rel=1e-9, abs=1e-12 * w)


def test_known_hopping_values():
    J, A = derive_hopping_params(5.0, 3.0)
    assert J == pytest.approx(4.0)
    assert A == pytest.approx(0.5 * math.log(4.0))


@pytest.mark.parametrize("w,delta", [(1.0, 2.0), (1.0, 1.0)])
def test_unstable_hopping_rejected(w, delta):
    with pytest.raises(StabilityError):
        derive_hopping_params(w, delta)
    with pytest.raises(StabilityError):
        ChainParams(N=3, w=w, delta=delta)


@pytest.mark.parametrize(
    "kwargs", [dict(N=0), dict(N=2.5), dict(kappa=0.0), dict(n_th=-1.0), dict(beta=-1.0)]
)
def test_invalid_params(kwargs):
    base = dict(N=3, w=2.0, delta=1.0)
    base.update(kwargs)
    with pytest.raises(ValueError):
        ChainParams(**base)


def test_even_chain_warns():
    with warnings.catch_warnings():
        warnings.simplefilter("error", EvenChainWarning)
        with pytest.raises(EvenChainWarning):
            ChainParams.from_hopping(4, 1.0, 0.1)


def test_replace_with_J_A():
    p = ChainParams.from_hopping(5, 2.0, 0.3, kappa=1.5)
    q = p.replace(J=3.0, N=7)
    assert q.J == pytest.approx(3.0)
    assert q.A == pytest.approx(0.3)
    assert (q.N, q.kappa) == (7, 1.5)
    assert p.gain == pytest.approx(math.exp(0.3 * 4))


def test_hatano_nelson_block_structure():
    H = hatano_nelson_block(4, 2.0, 0.5)
    assert H[1, 0] == pytest.approx(2 * math.exp(0.5))
    assert H[0, 1] == pytest.approx(-2 * math.exp(-0.5))
    assert np.count_nonzero(H) == 6


def test_dynamical_matrix_blocks():
    p = ChainParams.from_hopping(5, 1.3, 0.4, kappa=0.7)
    M = build_dynamical_matrix(p)
    N = p.N
    assert np.all(M[:N, N:] == 0) and np.all(M[N:, :N] == 0)
    assert M[0, 0] == pytest.approx(-0.35)
    assert M[N, N] == pytest.approx(-0.35)
    # the p chain amplifies the other way
    assert M[N + 1, N] == pytest.approx(1.3 * math.exp(-0.4))


@given(N=st.integers(1, 15), A=st.floats(0.0, 1.0), J=st.floats(0.1, 10.0))
@settings(max_examples=40, deadline=None)
def test_unperturbed_chain_is_stable(N, A, J):
    p = ChainParams.from_hopping(N, J, A)
    assert stability_margin(build_dynamical_matrix(p)) < 0


def test_perturbation_matrix_dispersive():
    V = perturbation_matrix(3, Perturbation.dispersive_last(1.0))
    assert V[2, 5] == 1.0 and V[5, 2] == -1.0
    assert np.count_nonzero(V) == 2


@given(phase=st.floats(-math.pi, math.pi))
def test_boundary_hop_generator_is_hamiltonian(phase):
    # a Hermitian coupling gives a symplectic generator: V^T J + J V = 0
    N = 4
    V = perturbation_matrix(N, Perturbation.boundary_hop(1.0, phase))
    Jm = np.block([[np.zeros((N, N)), np.eye(N)], [-np.eye(N), np.zeros((N, N))]])
    np.testing.assert_allclose(V.T @ Jm + Jm @ V, 0, atol=1e-15)


def test_perturbation_none():
    assert Perturbation.none().with_epsilon(3.0).kind is PerturbationKind.NONE
    with pytest.raises(ValueError):
        Perturbation(PerturbationKind.NONE, 1.0)


def test_z2_operator_is_orthogonal():
    Q = z2_operator(5)
    np.testing.assert_allclose(Q @ Q.T, np.eye(10))


@pytest.mark.parametrize("N", [1, 3, 6])
def test_z2_symmetry(N):
    p = ChainParams.from_hopping(N, 1.7, 0.35)
    assert z2_symmetry_check(p)
    assert z2_symmetry_check(p, Perturbation.boundary_hop(0.2, 0.9))
    # with a single site there is no inversion left to break
    assert z2_symmetry_check(p, Perturbation.dispersive_last(0.2)) == (N == 1)
