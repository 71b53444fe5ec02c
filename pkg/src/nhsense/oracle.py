"""
Brute-force linear-algebra engines used to check every closed form.

Nothing here knows about Chebyshev polynomials or the squeezing gauge: the
routines only see the dynamical matrix, the drive and the input noise.

Conventions
-----------
Quadrature dynamics are ``v' = M v + f + noise`` with the waveguide drive
``f = -sqrt(2 kappa) beta (cos theta, sin theta)`` on (x_1, p_1) and input
noise ``-sqrt(kappa) (X_in, P_in)`` on the same two rows.  The output field
obeys ``B_out = beta + B_in + sqrt(kappa) a_1``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from .core import ChainParams, NumericalError, PoleError, stability_margin

# condition number above which a resolvent is treated as singular
_POLE_COND = 1e14


@dataclass(frozen=True)
class NoiseModel:
    """White input noise entering through the waveguide.

    Both input quadratures have symmetrized spectral density ``n_th + 1/2``
    and no cross-correlation.
    """

    n_th: float = 0.0

    def __post_init__(self):
        if self.n_th < 0:
            raise ValueError(f"n_th must be non-negative, got {self.n_th}")

    @property
    def input_covariance(self) -> NDArray[np.float64]:
        return (self.n_th + 0.5) * np.eye(2)


def _site1_rows(N: int) -> NDArray[np.float64]:
    """2N x 2 matrix selecting (x_1, p_1)."""
    B = np.zeros((2 * N, 2))
    B[0, 0] = 1.0
    B[N, 1] = 1.0
    return B


def _solve(A: NDArray, b: NDArray) -> NDArray:
    try:
        with warnings.catch_warnings():
            # exact singularity is reported as PoleError below
            warnings.simplefilter("ignore", linalg.LinAlgWarning)
            lu = linalg.lu_factor(A, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise PoleError(f"singular matrix: {exc}") from exc
    if np.any(np.diag(lu[0]) == 0):
        raise PoleError("singular matrix")
    # LU-based reciprocal condition estimate (1-norm), much cheaper than an SVD
    gecon = linalg.get_lapack_funcs("gecon", (lu[0],))
    rcond, info = gecon(lu[0], np.linalg.norm(A, 1), norm="1")
    if info != 0 or rcond * _POLE_COND < 1:
        raise PoleError("resolvent evaluated at a pole")
    return linalg.lu_solve(lu, b)


def resolvent_susceptibility(M: NDArray[np.float64], omega: float) -> NDArray[np.complex128]:
    """Frequency-domain response matrix ``G(omega) = (-i omega - M)^{-1}``.

    Block ``G[alpha n, beta m]`` is chi^{alpha beta}[n, m; omega]; for a single
    damped mode this is ``i / (omega + i kappa/2)``.
    """
    dim = M.shape[0]
    return _solve(-1j * omega * np.eye(dim) - M, np.eye(dim, dtype=complex))


def particle_resolvent(
    N: int, J: float, omega: float, kappa: float = 0.0, eps0: float = 0.0
) -> NDArray[np.complex128]:
    """``i (omega - H + i kappa/2 |1><1| - eps0 |N><N|)^{-1}`` for the Hermitian chain ``H = iJ sum |n+1><n| + h.c.``."""
    H = np.zeros((N, N), dtype=complex)
    idx = np.arange(1, N)
    H[idx, idx - 1] = 1j * J
    H[idx - 1, idx] = -1j * J
    H[N - 1, N - 1] += eps0
    H[0, 0] -= 0.5j * kappa
    return 1j * _solve(omega * np.eye(N) - H, np.eye(N, dtype=complex))


def drive_vector(params: ChainParams) -> NDArray[np.float64]:
    """Constant force from the coherent waveguide tone."""
    N = params.N
    f = np.zeros(2 * N)
    amp = -math.sqrt(2 * params.kappa) * params.beta
    f[0] = amp * math.cos(params.theta)
    f[N] = amp * math.sin(params.theta)
    return f


def _require_stable(M: NDArray) -> None:
    margin = stability_margin(M)
    if not margin < 0:
        raise NumericalError(f"dynamical matrix is not stable (margin {margin:.3e})")


def steady_state_means(
    M: NDArray[np.float64],
    params: ChainParams,
    drive: NDArray[np.float64] | None = None,
    check_stability: bool = True,
) -> NDArray[np.float64]:
    """Stationary first moments: the solution of ``M v + f = 0``.

    ``check_stability=False`` skips the eigenvalue check for callers that
    know the generator is stable.
    """
    if check_stability:
        _require_stable(M)
    f = drive_vector(params) if drive is None else drive
    return _solve(M, -f)


def input_output_matrix(M: NDArray[np.float64], kappa: float) -> NDArray[np.float64]:
    """Zero-frequency 2x2 map from input (X, P) to output (X, P) quadratures.

    Solves the 2N-dimensional steady state twice, once with an X drive and
    once with a P drive on site 1, and applies ``out = in + sqrt(kappa) (x_1, p_1)``.
    """
    _require_stable(M)
    N = M.shape[0] // 2
    B = _site1_rows(N)
    v = _solve(M, math.sqrt(kappa) * B)  # M v - sqrt(kappa) B u = 0
    return np.eye(2) + math.sqrt(kappa) * B.T @ v


def _equilibrated_lyapunov(
    M: NDArray[np.float64], D: NDArray[np.float64], max_iter: int = 8
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Solve ``M S + S M^T + D = 0`` after a diagonal similarity that equilibrates S.

    Strongly non-normal generators give covariances whose diagonal spans many
    decades, and a direct Bartels-Stewart solve then smears absolute errors of
    order eps * max|S| over the small entries.  The scaling ``s`` (powers of
    two, so exact) is refined from the diagonal of the previous solve until
    every scaled variance lies within a factor 16 of one.

    Returns ``(s, S_scaled, M_scaled)`` with ``S = diag(s) S_scaled diag(s)``
    and ``M_scaled = diag(s)^-1 M diag(s)``.
    """
    s = np.ones(M.shape[0])
    for _ in range(max_iter):
        Ms = (M * s[None, :]) / s[:, None]
        Ss = linalg.solve_continuous_lyapunov(Ms, -(D / s[:, None] / s[None, :]))
        Ss = 0.5 * (Ss + Ss.T)
        if not np.all(np.isfinite(Ss)):
            raise NumericalError("Lyapunov solve produced non-finite values")
        d = np.abs(np.diag(Ss))
        e = 0.5 * np.log2(np.where(d > 0, d, 1.0))
        off = np.abs(e) > 2
        if not np.any(off):
            break
        s = s * np.exp2(np.where(off, np.round(e), 0.0))
    return s, Ss, Ms


def steady_state_covariance(
    M: NDArray[np.float64], noise: NoiseModel, params: ChainParams
) -> NDArray[np.float64]:
    """Symmetrized fluctuation covariance from ``M S + S M^T + D = 0``."""
    _require_stable(M)
    D = diffusion_matrix(M.shape[0] // 2, noise, params.kappa)
    s, Ss, _ = _equilibrated_lyapunov(M, D)
    return s[:, None] * Ss * s[None, :]


def diffusion_matrix(N: int, noise: NoiseModel, kappa: float) -> NDArray[np.float64]:
    B = _site1_rows(N)
    return kappa * B @ noise.input_covariance @ B.T


def output_noise_zero_frequency(
    M: NDArray[np.float64], noise: NoiseModel, params: ChainParams, phi: float | None = None
) -> float:
    """Zero-frequency spectral density of the output quadrature at angle ``phi``.

    Built from the Lyapunov covariance:
    ``S(0) = d^T Q d + kappa c^T (-M^-1 S - S M^-T) c + 2 kappa c^T M^-1 B Q d``
    where the output is ``sqrt(kappa) c^T v + d^T xi``.  This equals the
    long-window variance of the homodyne temporal mode.
    """
    phi = params.homodyne_phi if phi is None else phi
    _require_stable(M)
    N = M.shape[0] // 2
    B = _site1_rows(N)
    Q = noise.input_covariance
    # everything is evaluated in the equilibrated frame, where S and M are well scaled
    s, Ss, Ms = _equilibrated_lyapunov(M, diffusion_matrix(N, noise, params.kappa))
    d = np.array([math.cos(phi), math.sin(phi)])
    c = s * (B @ d)
    y = np.linalg.solve(Ms.T, c)  # M^-T c in the scaled frame
    k = params.kappa
    term_state = -2.0 * k * y @ Ss @ c
    term_cross = 2.0 * k * y @ ((B @ Q @ d) / s)
    return float(d @ Q @ d + term_state + term_cross)


def output_spectrum(
    M: NDArray[np.float64], noise: NoiseModel, kappa: float, omega: float = 0.0
) -> NDArray[np.complex128]:
    """2x2 output quadrature spectral matrix from the transfer function (cross-check route)."""
    N = M.shape[0] // 2
    B = _site1_rows(N)
    G = resolvent_susceptibility(M, omega)
    T = np.eye(2) - kappa * B.T @ G @ B
    return T @ noise.input_covariance @ T.conj().T


def photon_numbers_from_moments(
    means: NDArray[np.float64], cov: NDArray[np.float64] | None = None
) -> NDArray[np.float64]:
    """Per-site <a^dag a> from quadrature means and (optional) symmetrized covariance."""
    N = means.shape[0] // 2
    coh = 0.5 * (means[:N] ** 2 + means[N:] ** 2)
    if cov is None:
        return coh
    d = np.diag(cov)
    return coh + 0.5 * (d[:N] + d[N:] - 1.0)


def transient_means(M: NDArray[np.float64], params: ChainParams, t: float) -> NDArray[np.float64]:
    """First moments at time ``t`` after switching the drive on at t = 0 from v(0) = 0."""
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    v_ss = steady_state_means(M, params)
    if t == 0:
        return np.zeros_like(v_ss)
    E = linalg.expm(M * t)
    if not np.all(np.isfinite(E)):
        raise NumericalError("matrix exponential overflowed")
    return v_ss - E @ v_ss


def transient_means_ode(
    M: NDArray[np.float64], params: ChainParams, t: float, rtol: float = 1e-11, atol: float = 1e-13
) -> NDArray[np.float64]:
    """Same as :func:`transient_means` by adaptive Runge-Kutta stepping."""
    from scipy.integrate import solve_ivp

    f = drive_vector(params)
    if t == 0:
        return np.zeros(M.shape[0])
    sol = solve_ivp(
        lambda _t, v: M @ v + f, (0.0, t), np.zeros(M.shape[0]), method="DOP853",
        rtol=rtol, atol=atol,
    )
    if not sol.success:
        raise NumericalError(f"ODE integration failed: {sol.message}")
    return sol.y[:, -1]


def window_integrated_response(
    M: NDArray[np.float64], V: NDArray[np.float64], f: NDArray[np.float64], tau: float
) -> NDArray[np.float64]:
    """``int_0^tau d/d eps v(t) dt`` for ``v' = (M + eps V) v + f``, v(0) = 0, at eps = 0.

    The tangent equation ``dv' = M dv + V v0`` is appended to the unperturbed
    one and the window integral is read off a single block matrix exponential.
    """
    n = M.shape[0]
    K = np.zeros((2 * n + 2, 2 * n + 2))
    K[:n, :n] = M
    K[n:2 * n, :n] = V
    K[n:2 * n, n:2 * n] = M
    K[:n, 2 * n] = f
    K[2 * n, 2 * n + 1] = 1.0
    E = linalg.expm(K * tau)
    return E[n:2 * n, 2 * n + 1]


def central_difference(fun, x0: float, h: float, richardson: bool = True):
    """Central difference of ``fun`` at ``x0``; optional one-step Richardson extrapolation."""
    d1 = (np.asarray(fun(x0 + h)) - np.asarray(fun(x0 - h))) / (2 * h)
    if not richardson:
        return d1
    d2 = (np.asarray(fun(x0 + h / 2)) - np.asarray(fun(x0 - h / 2))) / h
    return (4 * d2 - d1) / 3
