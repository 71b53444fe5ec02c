"""
Steady-state homodyne sensing in the linear-response, large-drive regime.

The signal is the first-order change of the site-1 quadrature means, read
out through the waveguide as ``S = sqrt(kappa tau) |cos(phi) dx_1 + sin(phi) dp_1|``.
Noise is the zeroth-order output noise ``sqrt(n_th + 1/2)``.  QFI follows as
the squared signal-to-noise ratio per unit epsilon at the best angle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import optimize

from . import oracle
from .core import (
    ChainParams,
    EvenChainWarning,
    Perturbation,
    PerturbationKind,
    build_dynamical_matrix,
    perturbation_matrix,
)
from .greens import chi_quadrature


def z_fraction(A: float, N: int) -> float:
    """Fraction of the coherent photons sitting on the last site of an odd chain.

    ``Z = (1 - e^{-4A}) / (1 - e^{-2A(N+1)})``, with the A -> 0 limit 2/(N+1).
    """
    if N == 1:
        return 1.0
    if A == 0:
        return 2.0 / (N + 1)
    return math.expm1(-4 * A) / math.expm1(-2 * A * (N + 1))


def vacuum_photons_per_site(params: ChainParams) -> NDArray[np.float64]:
    """Photons per site from amplified input fluctuations at epsilon = 0.

    In the site-1 squeezing frame the chain is passive, so the fluctuations
    are just those of the input stretched by e^{+-A(n-1)}:
    ``(n_th + 1/2) cosh(2A(n-1)) - 1/2``.  For vacuum this is sinh^2(A(n-1)).
    """
    j = np.arange(params.N)
    return (params.n_th + 0.5) * np.cosh(2 * params.A * j) - 0.5


@dataclass(frozen=True)
class PhotonBudget:
    """Coherent and fluctuation photon numbers of the driven chain at epsilon = 0."""

    per_site: NDArray[np.float64]
    n_vac: float
    Z: float

    @property
    def n_coherent(self) -> float:
        return float(np.sum(self.per_site))

    @property
    def n_tot(self) -> float:
        return self.n_coherent + self.n_vac

    @property
    def n_N(self) -> float:
        return float(self.per_site[-1])


def photon_numbers(params: ChainParams) -> PhotonBudget:
    """Photon budget of the unperturbed chain.

    Odd N uses the closed forms: coherent photons ``(4 beta^2/kappa) e^{2A(n-1)}``
    on odd sites and none on even ones.  Even N has no zero-frequency
    resonance and goes through the linear-solve oracle instead.
    """
    N, A = params.N, params.A
    vac = vacuum_photons_per_site(params)
    if N % 2 == 1:
        n = np.arange(1, N + 1)
        per_site = np.where(n % 2 == 1, 4 * params.beta**2 / params.kappa * np.exp(2 * A * (n - 1)), 0.0)
        Z = z_fraction(A, N)
    else:
        M = build_dynamical_matrix(params)
        per_site = oracle.photon_numbers_from_moments(oracle.steady_state_means(M, params))
        total = float(np.sum(per_site))
        Z = float(per_site[-1] / total) if total > 0 else float("nan")
    return PhotonBudget(per_site=per_site, n_vac=float(np.sum(vac)), Z=Z)


def with_photon_number(params: ChainParams, n_tot: float) -> ChainParams:
    """Copy of ``params`` with beta chosen so the coherent photon number equals ``n_tot``."""
    if n_tot < 0:
        raise ValueError(f"n_tot must be non-negative, got {n_tot}")
    unit = photon_numbers(params.replace(beta=1.0)).n_coherent
    return params.replace(beta=math.sqrt(n_tot / unit))


def _static_chi(alpha: str, n: int, m: int, params: ChainParams) -> float:
    # the zero-frequency response of a real generator is real
    return chi_quadrature(alpha, alpha, n, m, 0.0, params).real


def _site_index(N: int, alpha: str, n: int) -> int:
    return (n - 1) + (N if alpha == "p" else 0)


def first_order_response(params: ChainParams, pert: Perturbation) -> tuple[float, float]:
    """d<x_1>/d eps and d<p_1>/d eps at eps = 0 from the closed-form susceptibilities.

    Uses ``dv = G(0) V v_0`` restricted to sites 1 and N, where all
    perturbations considered here act.
    """
    N = params.N
    if pert.kind is PerturbationKind.NONE:
        return 0.0, 0.0
    f = oracle.drive_vector(params)
    fx, fp = f[0], f[N]
    ends = sorted({1, N})
    labels = [(a, n) for a in ("x", "p") for n in ends]
    idx = [_site_index(N, a, n) for a, n in labels]
    v0 = np.array([_static_chi(a, n, 1, params) * (fx if a == "x" else fp) for a, n in labels])
    V = perturbation_matrix(N, pert)[np.ix_(idx, idx)]
    source = V @ v0
    out = []
    for a in ("x", "p"):
        g = np.array([_static_chi(a, 1, m, params) if b == a else 0.0 for b, m in labels])
        out.append(float(g @ source))
    return out[0], out[1]


def homodyne_noise(n_th: float) -> float:
    """Zeroth-order homodyne noise of the flat temporal mode, sqrt(n_th + 1/2)."""
    if n_th < 0:
        raise ValueError(f"n_th must be non-negative, got {n_th}")
    return math.sqrt(n_th + 0.5)


def _signal(dx: float, dp: float, phi: float, kappa: float, tau: float) -> float:
    return math.sqrt(kappa * tau) * abs(math.cos(phi) * dx + math.sin(phi) * dp)


def optimal_homodyne_angle(dx: float, dp: float) -> float:
    """Angle in [0, pi) maximizing ``|cos(phi) dx + sin(phi) dp|``."""
    phi = math.atan2(dp, dx) % math.pi
    # a tiny negative angle rounds up to pi under the modulo
    return 0.0 if phi >= math.pi else phi


def optimal_homodyne_angle_scan(dx: float, dp: float, n_grid: int = 64) -> float:
    """Numerical cross-check of :func:`optimal_homodyne_angle` by golden-section search."""
    grid = np.linspace(0.0, math.pi, n_grid, endpoint=False)
    vals = np.abs(np.cos(grid) * dx + np.sin(grid) * dp)
    i = int(np.argmax(vals))
    h = math.pi / n_grid
    res = optimize.minimize_scalar(
        lambda phi: -abs(math.cos(phi) * dx + math.sin(phi) * dp),
        bracket=(grid[i] - h, grid[i], grid[i] + h),
        method="golden",
        tol=1e-10,
    )
    return float(res.x) % math.pi


@dataclass(frozen=True)
class SensingResult:
    """Outcome of one steady-state sensing configuration.

    ``qfi`` is the large-drive Fisher information, (snr / eps)^2 at the
    optimal angle; ``n_tot`` is the coherent photon number used to normalize it.
    """

    signal: float
    noise: float
    snr: float
    qfi: float
    tau: float
    phi_opt: float
    n_tot: float

    @property
    def qfi_per_photon(self) -> float:
        return self.qfi / self.n_tot


def _result(params, dx, dp, eps, tau, phi, n_tot) -> SensingResult:
    noise = homodyne_noise(params.n_th)
    phi_opt = optimal_homodyne_angle(dx, dp)
    signal = _signal(dx * eps, dp * eps, phi, params.kappa, tau)
    # QFI: per-unit-eps SNR at the best angle, squared
    best = _signal(dx, dp, phi_opt, params.kappa, tau) / noise
    return SensingResult(
        signal=signal, noise=noise, snr=signal / noise, qfi=best**2, tau=tau, phi_opt=phi_opt, n_tot=n_tot
    )


def _prepare(params: ChainParams, n_tot: float | None) -> tuple[ChainParams, float]:
    if n_tot is not None:
        params = with_photon_number(params, n_tot)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EvenChainWarning)
        return params, photon_numbers(params).n_coherent


def homodyne_signal_linear(params: ChainParams, eps: float, tau: float, phi: float | None = None) -> float:
    """First-order homodyne signal for a dispersive shift ``eps`` on the last site."""
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    dx, dp = first_order_response(params, Perturbation.dispersive_last(1.0))
    phi = params.homodyne_phi if phi is None else phi
    return _signal(dx * eps, dp * eps, phi, params.kappa, tau)


def snr_qfi_linear(
    params: ChainParams, eps: float, tau: float, n_tot: float | None = None, phi: float | None = None
) -> SensingResult:
    """SNR and QFI for the dispersive last-site perturbation.

    If ``n_tot`` is given the drive is rescaled so the coherent photon number
    matches it.  For odd N and real drive this reproduces
    ``SNR = 4 sqrt(Z n_tot kappa tau / (2 n_th + 1)) |eps/kappa| e^{A(N-1)}``.
    """
    params, n_coh = _prepare(params, n_tot)
    dx, dp = first_order_response(params, Perturbation.dispersive_last(1.0))
    phi = params.homodyne_phi if phi is None else phi
    return _result(params, dx, dp, eps, tau, phi, n_coh)


def snr_linear_closed_form(params: ChainParams, eps: float, tau: float, n_tot: float) -> float:
    """Closed-form steady-state SNR for odd N at the optimal angle."""
    Z = z_fraction(params.A, params.N)
    return (
        4 * math.sqrt(Z * n_tot * params.kappa * tau / (2 * params.n_th + 1))
        * abs(eps / params.kappa) * params.gain
    )


def snr_nhse(
    params: ChainParams,
    eps: float,
    hop_phase: float,
    tau: float,
    n_tot: float | None = None,
    phi: float | None = None,
    model: str = "site1",
) -> SensingResult:
    """SNR and QFI for the boundary hopping ``e^{i phase} a_1^dag a_N + h.c.``.

    ``model="site1"`` keeps only the coupling acting on the site-1 equations,
    giving ``S = sqrt(8 tau kappa n_N) |eps/kappa| |sin(hop_phase - phi)|``
    for odd N.  ``model="exact"`` adds the return path through the site-N
    equations and is the complete first-order response.
    """
    params, n_coh = _prepare(params, n_tot)
    if model == "exact":
        dx, dp = first_order_response(params, Perturbation.boundary_hop(1.0, hop_phase))
    elif model == "site1":
        N = params.N
        f = oracle.drive_vector(params)
        xN = _static_chi("x", N, 1, params) * f[0]
        pN = _static_chi("p", N, 1, params) * f[N]
        s, c = math.sin(hop_phase), math.cos(hop_phase)
        dx = _static_chi("x", 1, 1, params) * (s * xN + c * pN)
        dp = _static_chi("p", 1, 1, params) * (-c * xN + s * pN)
    else:
        raise ValueError(f"model must be 'site1' or 'exact', got {model!r}")
    phi = params.homodyne_phi if phi is None else phi
    return _result(params, dx, dp, eps, tau, phi, n_coh)
