"""
Exact steady-state response to a finite dispersive shift eps0 on the last site.

The zero-frequency output quadratures obey

    X_out = R X_in - T e^{-2A(N-1)} P_in
    P_out = T e^{2A(N-1)} X_in + R P_in

with (R, T) a rotation, so quadrature-preserving scattering is never
amplified and the gain of quadrature conversion does not depend on eps0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import oracle, sensing
from .core import ChainParams, Perturbation, build_dynamical_matrix
from .greens import chebyshev_table


@dataclass(frozen=True)
class ScatteringMatrix:
    """Quadrature scattering at one frequency.

    ``s = (a + i b) / (a - i b)`` is the reflection amplitude of the
    particle-conserving frame, ``R = (s[w] + s*[-w]) / 2`` and
    ``T = (s[w] - s*[-w]) / 2i``; both are real at w = 0.
    """

    omega: float
    s: complex
    a: float
    b: float
    R: complex
    T: complex
    log_gain: float

    @property
    def A_factor(self) -> float:
        """Quadrature-conversion gain e^{2A(N-1)}; may overflow for very long chains."""
        return math.exp(self.log_gain)

    def matrix(self) -> NDArray[np.complex128]:
        g = self.A_factor
        return np.array([[self.R, -self.T / g], [self.T * g, self.R]])


def _ab(omega: float, params: ChainParams, eps0: float) -> tuple[float, float]:
    N, J, k = params.N, params.J, params.kappa
    U = chebyshev_table(N, omega, J)

    def u(j):
        return U[j + 1]

    a = J * u(N) - u(N - 1) * eps0
    b = 0.5 * k * ((eps0 / J) * u(N - 2) - u(N - 1))
    return a, b


def reflection_amplitude(omega: float, params: ChainParams, eps0: float) -> complex:
    """``s[omega] = 1 - kappa chi_tilde_{eps0}[1, 1; omega]`` in the (a + ib)/(a - ib) form."""
    a, b = _ab(omega, params, eps0)
    return complex(a, b) / complex(a, -b)


def scattering_matrix(omega: float, params: ChainParams, eps0: float) -> ScatteringMatrix:
    a, b = _ab(omega, params, eps0)
    s = complex(a, b) / complex(a, -b)
    s_neg = reflection_amplitude(-omega, params, eps0).conjugate()
    R = 0.5 * (s + s_neg)
    T = (s - s_neg) / 2j
    if omega == 0:
        R, T = complex(R.real, 0.0), complex(T.real, 0.0)
    return ScatteringMatrix(
        omega=omega, s=s, a=a, b=b, R=R, T=T, log_gain=2 * params.A * (params.N - 1)
    )


def zero_frequency_rt(eps0: float, kappa: float = 1.0) -> tuple[float, float]:
    """Closed forms of R and T at omega = 0 (odd N)."""
    h2 = (0.5 * kappa) ** 2
    d = h2 + eps0**2
    return -(h2 - eps0**2) / d, kappa * eps0 / d


MAX_SERIES_ORDER = 4


@dataclass(frozen=True)
class SeriesTerm:
    """Order-k contribution to the zero-frequency scattering matrix.

    ``coefficient`` multiplies (eps0/kappa)^k; ``term`` is the product.
    """

    order: int
    coefficient: NDArray[np.float64]
    term: NDArray[np.float64]


def output_series_coefficients(params: ChainParams, eps0: float, k_max: int) -> list[SeriesTerm]:
    """Power-series terms of the output quadratures in eps0/kappa up to order ``k_max``.

    With e = eps0/kappa, R = -1 + 8 e^2 - 32 e^4 + ... and T = 4e - 16 e^3 + ...;
    odd orders convert quadratures with gain e^{+-2A(N-1)}, even orders do not.
    """
    if not 0 <= k_max <= MAX_SERIES_ORDER:
        raise ValueError(f"orders up to {MAX_SERIES_ORDER} are supported, got k_max={k_max}")
    g = math.exp(2 * params.A * (params.N - 1))
    e = eps0 / params.kappa
    out = []
    for k in range(k_max + 1):
        j = k // 2
        if k % 2 == 0:
            # R = -(1 - 4e^2) sum_j (-4e^2)^j
            c = -1.0 if k == 0 else 8.0 * (-4.0) ** (j - 1)
            coef = np.array([[c, 0.0], [0.0, c]])
        else:
            c = 4.0 * (-4.0) ** j
            coef = np.array([[0.0, -c / g], [c * g, 0.0]])
        out.append(SeriesTerm(order=k, coefficient=coef, term=coef * e**k))
    return out


def average_photon_number(params: ChainParams, eps0: float, include_vacuum: bool = False) -> float:
    """Mean of the total photon number at eps = 0 and eps = eps0, from the oracle."""
    noise = oracle.NoiseModel(params.n_th)
    totals = []
    for e in (0.0, eps0):
        M = build_dynamical_matrix(params, Perturbation.dispersive_last(e))
        # stable for every eps0 and A: the gauge-frame spectrum is a damped passive chain
        means = oracle.steady_state_means(M, params, check_stability=False)
        cov = oracle.steady_state_covariance(M, noise, params) if include_vacuum else None
        totals.append(float(np.sum(oracle.photon_numbers_from_moments(means, cov))))
    return 0.5 * (totals[0] + totals[1])


def q_factor(params: ChainParams, eps0: float, include_vacuum: bool = False) -> float:
    """``Q = (4 beta^2 e^{2A(N-1)} / kappa) / n_tot``, n_tot averaged over eps = 0 and eps0.

    Without vacuum photons Q does not depend on beta.
    """
    lead = 4 * params.beta**2 * math.exp(2 * params.A * (params.N - 1)) / params.kappa
    return lead / average_photon_number(params, eps0, include_vacuum)


def snr_nonpert(
    params: ChainParams, eps0: float, tau: float, n_tot: float, q: float | None = None
) -> float:
    """Long-window SNR for discriminating eps = 0 from eps0 to all orders in eps0.

    ``SNR = sqrt(2 Q n_tot kappa tau) |T| e^{A(N-1)} / sqrt(1 + R^2 + T^2 e^{4A(N-1)})``,
    evaluated with log-sum-exp in the denominator so large gains cannot overflow.
    """
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    sm = scattering_matrix(0.0, params, eps0)
    R, T = sm.R.real, sm.T.real
    if T == 0:
        return 0.0
    q = q_factor(params.replace(beta=1.0), eps0) if q is None else q
    x = params.A * (params.N - 1)
    # |T| e^{x} / sqrt(1 + R^2 + T^2 e^{4x}) = |T| / sqrt((1 + R^2) e^{-2x} + T^2 e^{2x})
    log_den = 0.5 * np.logaddexp(math.log1p(R * R) - 2 * x, 2 * math.log(abs(T)) + 2 * x)
    return math.sqrt(2 * q * n_tot * params.kappa * tau) * math.exp(math.log(abs(T)) - log_den)


def _noise_doubling_ratio(eps0: float, kappa: float) -> float:
    R, T = zero_frequency_rt(eps0, kappa)
    return (1 + R * R) / (T * T)


def optimal_amplification(eps0: float, kappa: float, N: int, approximate: bool = False) -> float:
    """A* with e^{4 A* (N-1)} = (1 + R^2)/T^2, the gain that doubles the output noise.

    ``approximate`` uses kappa^2 / (8 eps0^2).  Returns ``math.inf`` for N = 1,
    where no finite amplification is optimal.
    """
    if not 0 < eps0 < 0.5 * kappa:
        raise ValueError(f"need 0 < eps0 < kappa/2, got eps0={eps0}, kappa={kappa}")
    if N < 1:
        raise ValueError(f"N must be positive, got {N}")
    if N == 1:
        return math.inf
    ratio = kappa**2 / (8 * eps0**2) if approximate else _noise_doubling_ratio(eps0, kappa)
    return math.log(ratio) / (4 * (N - 1))


def optimal_size(A: float, eps0: float, kappa: float = 1.0, approximate: bool = False) -> float:
    """Continuous N* solving the noise-doubling condition at fixed A."""
    if A <= 0:
        return math.inf
    if not 0 < eps0 < 0.5 * kappa:
        raise ValueError(f"need 0 < eps0 < kappa/2, got eps0={eps0}, kappa={kappa}")
    ratio = kappa**2 / (8 * eps0**2) if approximate else _noise_doubling_ratio(eps0, kappa)
    return 1 + math.log(ratio) / (4 * A)


def optimized_snr(eps0: float, tau: float, n_tot: float, q: float, kappa: float = 1.0) -> float:
    """SNR at the optimal gain for eps0 << kappa: 8^{1/4} sqrt(Q n_tot kappa tau eps0/kappa)."""
    return 8**0.25 * math.sqrt(q * n_tot * kappa * tau) * math.sqrt(eps0 / kappa)


@dataclass(frozen=True)
class Fig4Row:
    N: int
    snr_ratio: float
    snr_linear_prediction: float
    N_star: float


def fig4_point(N: int, A: float, eps0: float, n_tot: float, kappa: float = 1.0, J: float = 1.0) -> Fig4Row:
    """SNR(N)/SNR(1) at fixed photon number (eps0 in units of kappa); tau cancels."""
    e = eps0 * kappa
    p = ChainParams.from_hopping(N, J=J * kappa, A=A, kappa=kappa)
    p1 = ChainParams.from_hopping(1, J=J * kappa, A=A, kappa=kappa)
    ratio = snr_nonpert(p, e, 1.0, n_tot) / snr_nonpert(p1, e, 1.0, n_tot)
    return Fig4Row(
        N=N,
        snr_ratio=ratio,
        snr_linear_prediction=math.sqrt(sensing.z_fraction(A, N)) * math.exp(A * (N - 1)),
        N_star=optimal_size(A, e, kappa),
    )
