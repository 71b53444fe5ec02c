import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nhsense import ChainParams, Perturbation, build_dynamical_matrix, snr_nhse, snr_qfi_linear
from nhsense import oracle, sensing


def test_z_fraction_limits():
    assert sensing.z_fraction(0.3, 1) == 1.0
    assert sensing.z_fraction(0.0, 9) == pytest.approx(0.2)
    assert sensing.z_fraction(1e-9, 9) == pytest.approx(0.2, rel=1e-6)
    assert sensing.z_fraction(5.0, 21) == pytest.approx(1.0, rel=1e-8)


@given(N=st.integers(0, 12).map(lambda k: 2 * k + 1), A=st.floats(0.0, 1.0))
@settings(max_examples=30, deadline=None)
def test_z_fraction_is_last_site_share(N, A):
    budget = sensing.photon_numbers(ChainParams.from_hopping(N, 1.0, A))
    assert budget.Z == pytest.approx(budget.n_N / budget.n_coherent, rel=1e-12)


@pytest.mark.parametrize("N", [1, 4, 7])
def test_photon_numbers_match_oracle(N):
    p = ChainParams.from_hopping(N, 1.4, 0.25, beta=0.8, n_th=0.4)
    budget = sensing.photon_numbers(p)
    M = build_dynamical_matrix(p)
    coh = oracle.photon_numbers_from_moments(oracle.steady_state_means(M, p))
    full = oracle.photon_numbers_from_moments(
        oracle.steady_state_means(M, p), oracle.steady_state_covariance(M, oracle.NoiseModel(0.4), p)
    )
    np.testing.assert_allclose(budget.per_site, coh, rtol=1e-11, atol=1e-12)
    assert budget.n_tot == pytest.approx(full.sum(), rel=1e-11)


def test_with_photon_number():
    p = sensing.with_photon_number(ChainParams.from_hopping(5, 1.0, 0.2), 1234.5)
    assert sensing.photon_numbers(p).n_coherent == pytest.approx(1234.5)
    with pytest.raises(ValueError):
        sensing.with_photon_number(p, -1.0)


@pytest.mark.parametrize("pert", [Perturbation.dispersive_last(1.0), Perturbation.boundary_hop(1.0, 0.6)])
@pytest.mark.parametrize("N", [1, 3, 6, 9])
def test_first_order_response_finite_difference(N, pert):
    p = ChainParams.from_hopping(N, 1.1, 0.2)
    got = sensing.first_order_response(p, pert)

    def means(e):
        v = oracle.steady_state_means(build_dynamical_matrix(p, pert.with_epsilon(e)), p)
        return np.array([v[0], v[N]])

    ref = oracle.central_difference(means, 0.0, 1e-5)
    np.testing.assert_allclose(got, ref, rtol=1e-7, atol=1e-9 * np.abs(ref).max())


@given(dx=st.floats(-10, 10), dp=st.floats(-10, 10))
@settings(max_examples=50)
def test_optimal_angle_analytic_vs_scan(dx, dp):
    if math.hypot(dx, dp) < 1e-6:
        return
    a = sensing.optimal_homodyne_angle(dx, dp)
    b = sensing.optimal_homodyne_angle_scan(dx, dp)
    val = lambda phi: abs(math.cos(phi) * dx + math.sin(phi) * dp)
    assert 0 <= a < math.pi
    assert val(a) == pytest.approx(math.hypot(dx, dp), rel=1e-12)
    assert val(b) == pytest.approx(val(a), rel=1e-9)


def test_homodyne_noise():
    assert sensing.homodyne_noise(0.0) == pytest.approx(math.sqrt(0.5))
    with pytest.raises(ValueError):
        sensing.homodyne_noise(-1.0)


@pytest.mark.parametrize("N,A,n_th", [(1, 0.0, 0.0), (5, 0.3, 0.0), (11, 0.1, 0.7), (21, 0.5, 2.0)])
def test_snr_matches_closed_form(N, A, n_th):
    p = ChainParams.from_hopping(N, 2.0, A, n_th=n_th)
    res = snr_qfi_linear(p, 1e-4, 50.0, n_tot=1e6)
    closed = sensing.snr_linear_closed_form(p, 1e-4, 50.0, 1e6)
    assert res.phi_opt == pytest.approx(math.pi / 2)
    assert res.snr == pytest.approx(closed, rel=1e-10)
    assert res.qfi == pytest.approx((closed / 1e-4) ** 2, rel=1e-10)
    assert res.n_tot == pytest.approx(1e6)


def test_signal_scales_with_eps_and_tau():
    p = ChainParams.from_hopping(5, 1.0, 0.2, beta=3.0)
    s1 = sensing.homodyne_signal_linear(p, 1e-3, 4.0)
    assert sensing.homodyne_signal_linear(p, 2e-3, 16.0) == pytest.approx(4 * s1)
    with pytest.raises(ValueError):
        sensing.homodyne_signal_linear(p, 1e-3, -1.0)


def test_wrong_angle_loses_signal():
    p = ChainParams.from_hopping(5, 1.0, 0.2)
    best = snr_qfi_linear(p, 1e-3, 1.0, n_tot=100.0)
    worst = snr_qfi_linear(p, 1e-3, 1.0, n_tot=100.0, phi=best.phi_opt + math.pi / 2)
    assert worst.snr < 1e-10 * best.snr
    assert worst.qfi == pytest.approx(best.qfi)


@pytest.mark.parametrize("N,A,hop,phi", [(1, 0.1, 0.7, 0.3), (5, 0.3, 0.4, 1.1), (9, 0.2, 1.3, 0.2)])
def test_nhse_site1_closed_form(N, A, hop, phi):
    p = ChainParams.from_hopping(N, 1.0, A, homodyne_phi=phi)
    res = snr_nhse(p, 1e-3, hop, 10.0, n_tot=100.0)
    n_N = sensing.photon_numbers(sensing.with_photon_number(p, 100.0)).n_N
    expected = math.sqrt(8 * 10.0 * n_N) * 1e-3 * abs(math.sin(hop - phi))
    assert res.signal == pytest.approx(expected, rel=1e-12)


def test_nhse_exact_model_matches_finite_difference():
    p = sensing.with_photon_number(ChainParams.from_hopping(7, 1.0, 0.3), 50.0)
    pert = Perturbation.boundary_hop(1.0, 0.5)
    dx, dp = sensing.first_order_response(p, pert)
    res = snr_nhse(p, 1.0, 0.5, 1.0, model="exact")
    assert res.qfi == pytest.approx((dx**2 + dp**2) / 0.5, rel=1e-12)
    with pytest.raises(ValueError):
        snr_nhse(p, 1.0, 0.5, 1.0, model="bogus")


def test_nhse_qfi_does_not_grow_exponentially():
    q = [
        snr_nhse(ChainParams.from_hopping(N, 1.0, 0.5), 1.0, 0.0, 1.0, n_tot=1.0).qfi_per_photon
        for N in (1, 11, 21)
    ]
    disp = [snr_qfi_linear(ChainParams.from_hopping(N, 1.0, 0.5), 1.0, 1.0, n_tot=1.0).qfi_per_photon for N in (1, 21)]
    assert max(q) / min(q) < 2
    assert disp[1] / disp[0] > 1e7
