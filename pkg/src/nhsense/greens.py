"""
Closed-form frequency-domain susceptibilities of the open chain.

``chi_tilde`` denotes the response of the particle-conserving (A = 0) chain
with hopping iJ, written with Chebyshev polynomials of the second kind at
``omega / 2J``.  Quadrature susceptibilities of the amplifying chain follow
by the directional factors e^{+-A(n-m)}.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .core import ChainParams, PoleError

# denominators smaller than this raise instead of returning inf
POLE_THRESHOLD = 1e-300


def chebyshev_u(n: int, x):
    """U_n(x) by the three-term recurrence, with U_{-1} = 0 and U_0 = 1.

    ``x`` may be a scalar or array (real or complex).
    """
    if n < -1:
        raise ValueError(f"order must be >= -1, got {n}")
    x = np.asarray(x)
    prev = np.zeros_like(x, dtype=np.result_type(x, float))
    cur = np.ones_like(prev)
    if n == -1:
        return prev[()] if prev.ndim == 0 else prev
    for _ in range(n):
        prev, cur = cur, 2 * x * cur - prev
    return cur[()] if cur.ndim == 0 else cur


def chebyshev_u_closed(n: int, x: float) -> float:
    """U_n(x) from sin((n+1)t)/sin t on |x| <= 1 and sinh/cosh forms outside.

    At |x| = 1 the limit (n+1) x^n is used.
    """
    if n == -1:
        return 0.0
    if abs(x) == 1.0:
        return (n + 1) * x**n
    if abs(x) < 1:
        t = math.acos(x)
        return math.sin((n + 1) * t) / math.sin(t)
    t = math.acosh(abs(x))
    sign = 1.0 if x > 0 else (-1.0) ** n
    return sign * math.sinh((n + 1) * t) / math.sinh(t)


def _ipow(k: int) -> complex:
    return (1, 1j, -1, -1j)[k % 4]


def _check(denom: complex) -> None:
    if not abs(denom) > POLE_THRESHOLD:
        raise PoleError(f"susceptibility denominator {denom!r} vanishes (resonance of the undamped chain)")


def chebyshev_table(N: int, omega: float, J: float) -> list[float]:
    """[U_{-1}, U_0, ..., U_N] at omega/2J; index with k + 1."""
    x = omega / (2 * J)
    table = [0.0, 1.0]
    for _ in range(N):
        table.append(2 * x * table[-1] - table[-2])
    return table


def _check_sites(N: int, *sites: int) -> None:
    for s in sites:
        if not 1 <= s <= N:
            raise IndexError(f"site {s} outside 1..{N}")


def chi0_bare(n: int, m: int, omega: float, params: ChainParams) -> complex:
    """Undamped chain response i <n| (omega - H)^{-1} |m>."""
    N, J = params.N, params.J
    _check_sites(N, n, m)
    U = chebyshev_table(N, omega, J)
    denom = J * U[N + 1]
    _check(denom)
    lo, hi = min(n, m), max(n, m)
    return _ipow(1 + n - m) * U[lo] * U[N - hi + 1] / denom


def dressed_denominator(omega: float, params: ChainParams) -> complex:
    N, J = params.N, params.J
    U = chebyshev_table(N, omega, J)
    return J * U[N + 1] + 0.5j * params.kappa * U[N]


def chi_dressed(n: int, m: int, omega: float, params: ChainParams) -> complex:
    """Response of the chain with the waveguide damping kappa/2 on site 1.

    Columns and rows touching site 1 use the explicit forms; the general
    element is the Dyson-dressed product, simplified so that it stays finite
    at the bare-chain poles.
    """
    N, J, k = params.N, params.J, params.kappa
    _check_sites(N, n, m)
    U = chebyshev_table(N, omega, J)
    D = J * U[N + 1] + 0.5j * k * U[N]
    _check(D)
    if m == 1:
        return _ipow(n) * U[N - n + 1] / D
    if n == 1:
        return -_ipow(-m) * U[N - m + 1] / D
    lo, hi = min(n, m), max(n, m)
    left = J * U[lo] + 0.5j * k * U[lo - 1]
    return _ipow(1 + n - m) * left * U[N - hi + 1] / (J * D)


def chi_dressed_dyson(n: int, m: int, omega: float, params: ChainParams) -> complex:
    """Unsimplified Dyson composition of bare susceptibilities (fails on bare poles)."""
    k = params.kappa
    c11 = chi0_bare(1, 1, omega, params)
    denom = 1 + 0.5 * k * c11
    _check(denom)
    return chi0_bare(n, m, omega, params) - 0.5 * k * chi0_bare(n, 1, omega, params) * chi0_bare(1, m, omega, params) / denom


_QUAD = ("x", "p")


def chi_quadrature(alpha: str, beta: str, n: int, m: int, omega: float, params: ChainParams) -> complex:
    """Unperturbed quadrature susceptibility chi^{alpha beta}[n, m; omega]."""
    if alpha not in _QUAD or beta not in _QUAD:
        raise ValueError(f"quadrature labels must be 'x' or 'p', got {alpha!r}, {beta!r}")
    if alpha != beta:
        _check_sites(params.N, n, m)
        return 0j
    sign = 1 if alpha == "x" else -1
    return math.exp(sign * params.A * (n - m)) * chi_dressed(n, m, omega, params)


@dataclass(frozen=True)
class LogSusceptibility:
    """chi = exp(log_abs) * exp(1j * phase); for gains that overflow a double."""

    log_abs: float
    phase: float

    def value(self) -> complex:
        return cmath.rect(math.exp(self.log_abs), self.phase)


def chi_quadrature_log(alpha: str, beta: str, n: int, m: int, omega: float, params: ChainParams) -> LogSusceptibility:
    """Log-magnitude form of :func:`chi_quadrature` for the diagonal blocks."""
    if alpha != beta:
        raise ValueError("off-diagonal quadrature response vanishes; no logarithm")
    c = chi_dressed(n, m, omega, params)
    if c == 0:
        return LogSusceptibility(-math.inf, 0.0)
    sign = 1 if alpha == "x" else -1
    return LogSusceptibility(math.log(abs(c)) + sign * params.A * (n - m), cmath.phase(c))


def chi_perturbed(n: int, omega: float, params: ChainParams, eps0: float) -> complex:
    """Particle-mode response chi_tilde_{eps0}[n, 1; omega] with the shift eps0 on site N."""
    N, J, k = params.N, params.J, params.kappa
    _check_sites(N, n)
    U = chebyshev_table(N, omega, J)

    def u(j):
        return U[j + 1]

    num = u(N - n) - (eps0 / J) * u(N - 1 - n)
    den = J * u(N) + (0.5j * k - eps0) * u(N - 1) - 1j * (eps0 / J) * 0.5 * k * u(N - 2)
    _check(den)
    return _ipow(n) * num / den


def chi_perturbed_quadrature(alpha: str, n: int, omega: float, params: ChainParams, eps0: float) -> complex:
    """Quadrature response chi^{alpha x}_{eps0}[n, 1; omega] to an x force on site 1.

    In the squeezing frame pinned to site N the x response is e^{A(n-1)} times
    the transform of Re chi_tilde and the p response is e^{A(2N-n-1)} times
    that of Im chi_tilde.  Because conj(chi_tilde(-omega; eps0)) equals
    chi_tilde(omega; -eps0), these are the even and odd parts in eps0, which
    are expanded here so that nothing cancels:

        even = i^n (a d0 - eps0^2 b d1) / (D(+eps0) D(-eps0))
        odd  = i^n eps0 (U_{n-1} + i kappa/2J U_{n-2}) / (D(+eps0) D(-eps0))

    with a = U_{N-n}, b = U_{N-1-n}/J, d0 = J U_N + i kappa/2 U_{N-1},
    d1 = U_{N-1} + i kappa/2J U_{N-2}.
    """
    N, J, k, A = params.N, params.J, params.kappa, params.A
    _check_sites(N, n)
    U = chebyshev_table(N, omega, J)

    def u(j):
        return U[j + 1]

    d0 = J * u(N) + 0.5j * k * u(N - 1)
    d1 = u(N - 1) + 0.5j * (k / J) * u(N - 2)
    dprod = (d0 - eps0 * d1) * (d0 + eps0 * d1)
    _check(dprod)
    if alpha == "x":
        a, b = u(N - n), u(N - 1 - n) / J
        return math.exp(A * (n - 1)) * _ipow(n) * (a * d0 - eps0**2 * b * d1) / dprod
    if alpha == "p":
        odd = _ipow(n - 1) * eps0 * (u(n - 1) + 0.5j * (k / J) * u(n - 2)) / dprod
        return math.exp(A * (2 * N - n - 1)) * odd
    raise ValueError(f"quadrature label must be 'x' or 'p', got {alpha!r}")
