"""
Finite-time SNR and measurement times for discriminating eps = 0 from eps = eps0.

Two routes are provided.  The analytic one keeps only the zero-frequency
lattice resonance (width 1/t_esc) and adds a hard round-trip cutoff.  The
numeric one integrates the linearized dynamics exactly over the flat
measurement window [0, tau].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from . import oracle, sensing
from .core import ChainParams, NumericalError, Perturbation, build_dynamical_matrix, perturbation_matrix


@dataclass(frozen=True)
class Timescales:
    """Round-trip, escape and long-window measurement times (same units as 1/kappa)."""

    t_rt: float
    t_esc: float
    tau_star: float


def tau_star(params: ChainParams, eps0: float, n_tot: float) -> float:
    """Steady-state measurement time, SNR = 1 at tau* for eps0 -> 0.

    ``tau* = (2 n_th + 1) (kappa/eps0)^2 e^{-2A(N-1)} / (16 Z n_tot kappa)``;
    the usual vacuum-input expression is n_th = 0.
    """
    if eps0 == 0:
        return math.inf
    k = params.kappa
    Z = sensing.z_fraction(params.A, params.N)
    return (2 * params.n_th + 1) * (k / eps0) ** 2 * math.exp(-2 * params.A * (params.N - 1)) / (16 * Z * n_tot * k)


def timescales(params: ChainParams, eps0: float, n_tot: float) -> Timescales:
    return Timescales(
        t_rt=params.N / params.J,
        t_esc=(params.N + 1) / params.kappa,
        tau_star=tau_star(params, eps0, n_tot),
    )


def single_pole_bracket(x: float) -> float:
    """``1 + e^{-x} - (2/x)(1 - e^{-x})`` for x = tau/t_esc, stable at small x.

    Behaves as x^2/6 for x -> 0 and 1 - 2/x for x -> inf.
    """
    if x < 0:
        raise ValueError(f"x must be non-negative, got {x}")
    if x < 0.1:
        # sum_{j>=2} (-1)^j (j-1) x^j / (j+1)!
        total, term = 0.0, x * x / 6.0
        for j in range(2, 16):
            total += (j - 1) * term
            term *= -x / (j + 2)
        return total
    em = -math.expm1(-x)  # 1 - e^{-x}
    return 2.0 - em - 2.0 * em / x


def snr_single_pole(params: ChainParams, eps0: float, tau: float, n_tot: float) -> float:
    """Infinite-hopping SNR: the long-window value sqrt(tau/tau*) times the single-pole bracket."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    ts = timescales(params, eps0, n_tot)
    return math.sqrt(tau / ts.tau_star) * single_pole_bracket(tau / ts.t_esc)


def snr_finite_j(params: ChainParams, eps0: float, tau: float, n_tot: float) -> float:
    """Single-pole SNR with a hard causal cutoff at the round-trip time (Theta(0) = 0)."""
    if tau <= params.N / params.J:
        return 0.0
    return snr_single_pole(params, eps0, tau, n_tot)


def _window_integrated_means(M: np.ndarray, f: np.ndarray, tau: float) -> np.ndarray:
    """``int_0^tau v(t) dt`` for ``v' = M v + f``, v(0) = 0."""
    n = M.shape[0]
    K = np.zeros((n + 2, n + 2))
    K[:n, :n] = M
    K[:n, n] = f
    K[n, n + 1] = 1.0
    return linalg.expm(K * tau)[:n, n + 1]


def _phi2(z: np.ndarray) -> np.ndarray:
    """(e^z - 1 - z) / z^2, the divided difference exp[z, 0, 0]."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 0.5
    zs = z[small]
    acc = np.zeros_like(zs)
    for k in range(18, -1, -1):
        acc = acc * zs + 1.0 / math.factorial(k + 2)
    out[small] = acc
    zl = z[~small]
    out[~small] = (np.expm1(zl) - zl) / zl**2
    return out


def _dphi2(z: np.ndarray) -> np.ndarray:
    """Derivative of :func:`_phi2`, i.e. exp[z, z, 0, 0]."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 0.5
    zs = z[small]
    acc = np.zeros_like(zs)
    for k in range(18, -1, -1):
        acc = acc * zs + (k + 1) / math.factorial(k + 3)
    out[small] = acc
    zl = z[~small]
    em = np.expm1(zl)
    out[~small] = (em / zl - 2 * (em - zl) / zl**2) / zl
    return out


def _double_window_kernel(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Divided difference exp[a, b, 0, 0] over broadcast pairs.

    Coincident or nearly coincident nodes use the derivative at the
    midpoint, which is accurate to O(|a - b|^2).
    """
    a, b = np.broadcast_arrays(np.asarray(a, complex), np.asarray(b, complex))
    d = a - b
    out = np.empty(a.shape, dtype=complex)
    near = np.abs(d) <= 1e-4 * np.maximum(1.0, np.abs(a))
    far = ~near
    out[far] = (_phi2(a[far]) - _phi2(b[far])) / d[far]
    out[near] = _dphi2(0.5 * (a[near] + b[near]))
    return out


@dataclass(frozen=True)
class ModalWindow:
    """Eigen-decomposition of the gauge-frame generator, reused for every window length.

    Rescaling x_n by e^{-A(n-1)} and p_n by e^{A(n-1)} turns both quadrature
    blocks into the same damped A = 0 chain, whose eigenvectors are well
    conditioned; the perturbation picks up the factors e^{+-2A(N-1)}.  The
    first-order window integral of each mode pair is then
    ``tau^3 exp[lam_i tau, lam_j tau, 0, 0]``.
    """

    lam: np.ndarray
    coupling: np.ndarray
    drive: np.ndarray
    readout: np.ndarray

    @classmethod
    def build(cls, params: ChainParams, pert: Perturbation, max_cond: float = 1e8) -> "ModalWindow":
        N, A = params.N, params.A
        H = build_dynamical_matrix(params.replace(A=0.0))[:N, :N]
        lam, W = linalg.eig(H)
        if np.linalg.cond(W) > max_cond:
            raise NumericalError("gauge-frame eigenvectors are ill conditioned")
        Winv = linalg.inv(W)
        g = np.exp(A * np.arange(N))
        s = np.concatenate([g, 1.0 / g])
        Vt = perturbation_matrix(N, pert.with_epsilon(1.0)) * (s[None, :] / s[:, None])
        W2 = linalg.block_diag(W, W)
        W2inv = linalg.block_diag(Winv, Winv)
        # the site-1 force is unchanged by the gauge
        f = oracle.drive_vector(params)
        return cls(
            lam=np.concatenate([lam, lam]), coupling=W2inv @ Vt @ W2, drive=W2inv @ f, readout=W2[[0, N], :]
        )

    def response(self, tau: float) -> np.ndarray:
        """``d/d eps int_0^tau (x_1, p_1) dt`` at eps = 0."""
        z = self.lam * tau
        F = tau**3 * _double_window_kernel(z[:, None], z[None, :])
        return (self.readout @ ((self.coupling * F) @ self.drive)).real


class TransientSNR:
    """Callable tau -> first-order SNR of the flat window, for fixed chain and drive.

    ``method`` is ``"modal"`` (default), ``"tangent"`` (block matrix
    exponential of the variational system) or ``"difference"`` (central
    difference of two finite-eps0 runs with step ``fd_step``, default 1e-6 kappa).
    The exponential-based methods lose accuracy once tau times the largest
    mode frequency is large; they are kept as cross-checks.
    """

    def __init__(
        self,
        params: ChainParams,
        eps0: float,
        n_tot: float,
        *,
        pert: Perturbation | None = None,
        method: str = "modal",
        fd_step: float | None = None,
    ):
        if method not in ("modal", "tangent", "difference"):
            raise ValueError(f"method must be 'modal', 'tangent' or 'difference', got {method!r}")
        self.params = sensing.with_photon_number(params, n_tot)
        self.eps0 = eps0
        self.pert = Perturbation.dispersive_last(1.0) if pert is None else pert.with_epsilon(1.0)
        self.method = method
        self.fd_step = 1e-6 * params.kappa if fd_step is None else fd_step
        self._modal = ModalWindow.build(self.params, self.pert) if method == "modal" else None

    def window_response(self, tau: float) -> tuple[float, float]:
        p, N = self.params, self.params.N
        if self._modal is not None:
            dx, dp = self._modal.response(tau)
            return float(dx), float(dp)
        f = oracle.drive_vector(p)
        if self.method == "tangent":
            dv = oracle.window_integrated_response(build_dynamical_matrix(p), perturbation_matrix(N, self.pert), f, tau)
        else:
            def window(e):
                return _window_integrated_means(build_dynamical_matrix(p, self.pert.with_epsilon(e)), f, tau)

            dv = oracle.central_difference(window, 0.0, self.fd_step)
        return float(dv[0]), float(dv[N])

    def __call__(self, tau: float) -> float:
        if tau < 0:
            raise ValueError(f"tau must be non-negative, got {tau}")
        if tau == 0:
            return 0.0
        dx, dp = self.window_response(tau)
        if not (math.isfinite(dx) and math.isfinite(dp)):
            raise NumericalError(f"window integral overflowed at tau={tau}")
        phi = self.params.homodyne_phi
        k = self.params.kappa
        signal = math.sqrt(k / tau) * abs(math.cos(phi) * dx + math.sin(phi) * dp) * abs(self.eps0)
        return signal / sensing.homodyne_noise(self.params.n_th)


def snr_transient_numeric(
    params: ChainParams,
    eps0: float,
    tau: float,
    n_tot: float,
    *,
    pert: Perturbation | None = None,
    method: str = "modal",
    fd_step: float | None = None,
) -> float:
    """SNR of the flat-window homodyne mode after switching the drive on at t = 0.

    The signal is ``sqrt(kappa/tau) |int_0^tau (cos phi dx_1 + sin phi dp_1) dt|``
    to first order in eps0 and the noise is the zeroth-order value.  See
    :class:`TransientSNR` for the available methods.
    """
    return TransientSNR(params, eps0, n_tot, pert=pert, method=method, fd_step=fd_step)(tau)


def _solve_log(fun, lo: float, hi: float, rtol: float) -> float:
    try:
        root = optimize.brentq(lambda s: fun(math.exp(s)) - 1.0, math.log(lo), math.log(hi), xtol=rtol, rtol=4 * np.finfo(float).eps)
    except ValueError as exc:
        raise NumericalError(f"root bracket [{lo:.3e}, {hi:.3e}] failed: {exc}") from exc
    return math.exp(root)


def _first_crossing(fun, start: float, hi: float, rtol: float, factor: float = 2.0) -> float:
    """Smallest tau with fun(tau) = 1 found by geometric stepping from ``start`` and a log-bracket solve."""
    lo = start
    guard = 0
    while fun(lo) >= 1.0:
        lo /= factor
        guard += 1
        if guard > 200:
            raise NumericalError("SNR exceeds 1 at arbitrarily short times")
    up = lo * factor
    while fun(up) < 1.0:
        lo, up = up, up * factor
        if lo > hi:
            raise NumericalError(f"SNR stays below 1 up to tau={hi:.3e}")
    return _solve_log(fun, lo, up, rtol)


def measurement_time_single_pole(params: ChainParams, eps0: float, n_tot: float, rtol: float = 1e-9) -> float:
    """tau_M in the infinite-hopping limit: the root of snr_single_pole = 1."""
    ts = timescales(params, eps0, n_tot)
    hi = 1e3 * max(ts.tau_star, ts.t_esc)
    start = min(ts.tau_star, ts.t_esc)
    return _first_crossing(lambda t: snr_single_pole(params, eps0, t, n_tot), start, hi, rtol)


def strong_measurement_asymptote(ts: Timescales) -> float:
    """Leading small-tau* behaviour ``sqrt(6) t_esc (tau* / (sqrt(6) t_esc))^{1/5}``."""
    s6 = math.sqrt(6.0) * ts.t_esc
    return s6 * (ts.tau_star / s6) ** 0.2


def measurement_time(
    params: ChainParams, eps0: float, n_tot: float, mode: str = "analytic", rtol: float = 1e-6
) -> float:
    """Minimum window length giving SNR = 1.

    ``analytic`` returns ``max(tau_M^{J=inf}, t_rt)``; ``numeric`` solves
    :func:`snr_transient_numeric` = 1 at its first crossing.
    """
    ts = timescales(params, eps0, n_tot)
    if mode == "analytic":
        return max(measurement_time_single_pole(params, eps0, n_tot), ts.t_rt)
    if mode == "numeric":
        guess = max(measurement_time_single_pole(params, eps0, n_tot, rtol=1e-3), ts.t_rt)
        hi = 1e3 * max(ts.tau_star, ts.t_esc, ts.t_rt)
        return _first_crossing(TransientSNR(params, eps0, n_tot), guess / 4, hi, rtol)
    raise ValueError(f"mode must be 'analytic' or 'numeric', got {mode!r}")


def single_pole_chi_xx(params: ChainParams, omega: float) -> complex:
    """Zero-mode approximation of chi^{xx}[N, 1; omega] for odd N and J >> kappa."""
    N = params.N
    return 2 * (1j) ** N / (N + 1) * params.gain / (omega + 1j * params.kappa / (N + 1))


@dataclass(frozen=True)
class Fig3Row:
    N: int
    J_over_kappa: float
    kappa_tau_M_numeric: float
    kappa_tau_M_analytic: float
    kappa_t_rt: float
    kappa_tau_star: float


def fig3_point(N: int, J_over_kappa: float, A: float, eps0: float, n_tot: float, kappa: float = 1.0) -> Fig3Row:
    """One grid point of the measurement-time versus size comparison (eps0 in units of kappa)."""
    p = ChainParams.from_hopping(N, J=J_over_kappa * kappa, A=A, kappa=kappa)
    e = eps0 * kappa
    ts = timescales(p, e, n_tot)
    return Fig3Row(
        N=N,
        J_over_kappa=J_over_kappa,
        kappa_tau_M_numeric=kappa * measurement_time(p, e, n_tot, "numeric"),
        kappa_tau_M_analytic=kappa * measurement_time(p, e, n_tot, "analytic"),
        kappa_t_rt=kappa * ts.t_rt,
        kappa_tau_star=kappa * ts.tau_star,
    )
