"""
Command-line sweeps: INI configuration, parallel evaluation, CSV output.

Usage::

    nhsense <task> --config run.ini [--out data.csv] [--threads k]

Tasks are ``snr-linear``, ``qfi-scan``, ``nhse-compare``, ``meas-time``,
``nonpert-scan``, ``fig3``, ``fig4`` and ``verify``.  The configuration is
an INI file with a ``[run]`` section, one section named after the task that
holds the parameter grid, and an optional ``[tolerances]`` section::

    [run]
    task = fig3
    output = fig3.csv

    [fig3]
    N = 1:51:2
    J_over_kappa = 10, 100, 1000

Grid values are comma-separated lists; integer keys also accept an
inclusive ``start:stop[:step]`` range.  All rates are in units of kappa.
Exit codes: 0 success, 2 configuration or I/O error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import itertools
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import greens, nonmarkov, nonpert, oracle, sensing
from .core import (
    ChainParams,
    EvenChainWarning,
    NumericalError,
    Perturbation,
    PoleError,
    StabilityError,
    build_dynamical_matrix,
    derive_hopping_params,
)

THREADS_ENV = "NHSENSE_THREADS"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending ``section.key``."""


# ---------------------------------------------------------------- schema

_INT_KEYS = {"N", "n_omega", "seed"}
_SCALAR_KEYS = {"n_omega", "seed"}

_TASK_DEFAULTS: dict[str, dict[str, tuple]] = {
    "snr-linear": {
        "N": tuple(range(1, 22, 2)), "A": (0.3,), "J_over_kappa": (1.0,),
        "eps_over_kappa": (1e-3,), "n_tot": (1e6,), "n_th": (0.0,), "kappa_tau": (1e3,),
        "theta": (0.0,), "phi": (math.pi / 2,),
    },
    "qfi-scan": {
        "N": tuple(range(1, 22, 2)), "A": (0.1, 0.3), "J_over_kappa": (1.0,),
        "n_tot": (1.0,), "n_th": (0.0,), "kappa_tau": (1.0,),
    },
    "nhse-compare": {
        "N": tuple(range(1, 22, 2)), "A": (0.3,), "J_over_kappa": (1.0,),
        "hop_phase": (0.0,), "n_tot": (1.0,), "n_th": (0.0,), "kappa_tau": (1.0,),
    },
    "meas-time": {
        "N": tuple(range(1, 22, 2)), "A": (0.2,), "J_over_kappa": (100.0,),
        "eps_over_kappa": (1e-8,), "n_tot": (5e9,),
    },
    "nonpert-scan": {
        "N": tuple(range(1, 22, 2)), "A": (0.05,), "J_over_kappa": (1.0,),
        "eps_over_kappa": (1e-3, 1e-2, 0.1), "n_tot": (5e9,), "kappa_tau": (1.0,),
    },
    "fig3": {
        "N": tuple(range(1, 52, 2)), "J_over_kappa": (10.0, 100.0, 1000.0), "A": (0.2,),
        "eps_over_kappa": (1e-8,), "n_tot": (5e9,),
    },
    "fig4": {
        "N": tuple(range(1, 302, 2)), "A": (0.05,), "J_over_kappa": (1.0,),
        "eps_over_kappa": (1e-7,), "n_tot": (5e9,),
    },
    "verify": {
        "N": tuple(range(1, 22, 2)), "A": (0.3,), "J_over_kappa": (1.0,),
        "eps_over_kappa": (0.0, 1e-3, 0.1), "n_omega": (20,), "seed": (12345,),
    },
}

# keys that may replace (A, J_over_kappa) in any task taking a chain
_HOPPING_ALT = ("w", "delta")

TASKS = tuple(_TASK_DEFAULTS)

_DEFAULT_TOLERANCES = {"verify_rtol": 1e-8}


@dataclass(frozen=True)
class RunConfig:
    """Validated sweep description.

    ``grid`` maps parameter names to tuples of values; the Cartesian product
    is evaluated in the key order of the task schema.
    """

    task: str
    grid: dict[str, tuple]
    kappa: float = 1.0
    output: str | None = None
    odd_only: bool = True
    tolerances: dict[str, float] = field(default_factory=lambda: dict(_DEFAULT_TOLERANCES))

    def resolved(self) -> dict[str, Any]:
        """JSON-friendly dump with every default filled in."""
        return {
            "task": self.task,
            "kappa": self.kappa,
            "output": self.output,
            "odd_only": self.odd_only,
            "grid": {k: list(v) for k, v in self.grid.items()},
            "tolerances": dict(self.tolerances),
        }

    def points(self) -> list[dict[str, Any]]:
        keys = list(self.grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.grid[k] for k in keys))]


def _parse_number(text: str, key: str, integer: bool):
    try:
        if integer:
            value = float(text)
            if value != int(value):
                raise ValueError
            return int(value)
        return float(text)
    except ValueError:
        kind = "integer" if integer else "number"
        raise ConfigError(f"{key}: expected a {kind}, got {text!r}") from None


def _parse_values(raw: str, key: str, integer: bool) -> tuple:
    raw = raw.strip()
    if not raw:
        raise ConfigError(f"{key}: empty value")
    if ":" in raw:
        if not integer:
            raise ConfigError(f"{key}: ranges are only allowed for integer keys")
        parts = [_parse_number(p.strip(), key, True) for p in raw.split(":")]
        if len(parts) not in (2, 3):
            raise ConfigError(f"{key}: range must be start:stop or start:stop:step")
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) == 3 else 1
        if step <= 0:
            raise ConfigError(f"{key}: range step must be positive")
        values = tuple(range(start, stop + 1, step))
    else:
        values = tuple(_parse_number(p.strip(), key, integer) for p in raw.split(",") if p.strip())
    if not values:
        raise ConfigError(f"{key}: grid is empty")
    return values


def _parse_bool(raw: str, key: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _validate_grid(task: str, grid: dict[str, tuple], odd_only: bool) -> None:
    sec = task

    def check(key, pred, what):
        for v in grid.get(key, ()):
            if not pred(v):
                raise ConfigError(f"{sec}.{key}: {what}, got {v!r}")

    check("N", lambda v: v >= 1, "must be a positive integer")
    if odd_only:
        check("N", lambda v: v % 2 == 1, "even N requested but run.odd_only is true")
    check("A", lambda v: v >= 0 and math.isfinite(v), "must be non-negative")
    check("J_over_kappa", lambda v: v > 0 and math.isfinite(v), "must be positive")
    check("n_tot", lambda v: v > 0, "must be positive")
    check("n_th", lambda v: v >= 0, "rate must be non-negative")
    check("kappa_tau", lambda v: v >= 0, "must be non-negative")
    check("w", lambda v: v >= 0, "rate must be non-negative")
    check("delta", lambda v: v >= 0, "rate must be non-negative")
    check("n_omega", lambda v: v >= 1, "must be at least 1")
    if task in ("fig4", "meas-time", "fig3"):
        check("eps_over_kappa", lambda v: v > 0, "must be positive")
    if task == "fig4":
        check("eps_over_kappa", lambda v: v < 0.5, "must be below 1/2")
    for w, d in itertools.product(grid.get("w", ()), grid.get("delta", ())):
        try:
            derive_hopping_params(w, d)
        except StabilityError as exc:
            raise ConfigError(f"{sec}.w/{sec}.delta: unstable chain: {exc}") from None


def parse_config(text: str, task: str | None = None) -> RunConfig:
    """Parse and validate an INI configuration.

    ``task`` (from the command line) must agree with ``run.task`` when both
    are present.  Unknown sections or keys, unstable (w, delta) pairs and
    negative rates raise :class:`ConfigError`.
    """
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str  # keep N and A case-sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None

    run = cp["run"] if cp.has_section("run") else {}
    unknown = set(run) - {"task", "output", "kappa", "odd_only"}
    if unknown:
        raise ConfigError(f"run.{sorted(unknown)[0]}: unknown key")
    file_task = run.get("task")
    if file_task is not None:
        file_task = file_task.strip()
    if task is not None and file_task is not None and task != file_task:
        raise ConfigError(f"run.task: config says {file_task!r} but {task!r} was requested")
    task = task or file_task
    if task is None:
        raise ConfigError("run.task: no task given")
    if task not in _TASK_DEFAULTS:
        raise ConfigError(f"run.task: unknown task {task!r}; choose from {', '.join(TASKS)}")

    kappa = _parse_number(run.get("kappa", "1.0"), "run.kappa", False)
    if not kappa > 0:
        raise ConfigError(f"run.kappa: rate must be positive, got {kappa}")
    odd_only = _parse_bool(run.get("odd_only", "true"), "run.odd_only")
    output = run.get("output")

    for sec in cp.sections():
        if sec not in ("run", "tolerances", task):
            raise ConfigError(f"{sec}: unknown section for task {task!r}")

    defaults = _TASK_DEFAULTS[task]
    allowed = set(defaults) | ({*_HOPPING_ALT} if "A" in defaults and task != "verify" else set())
    given: dict[str, tuple] = {}
    if cp.has_section(task):
        for key, raw in cp[task].items():
            if key not in allowed:
                raise ConfigError(f"{task}.{key}: unknown key")
            values = _parse_values(raw, f"{task}.{key}", key in _INT_KEYS)
            if key in _SCALAR_KEYS and len(values) != 1:
                raise ConfigError(f"{task}.{key}: expected a single value")
            given[key] = values

    uses_wd = "w" in given or "delta" in given
    if uses_wd:
        if not ("w" in given and "delta" in given):
            raise ConfigError(f"{task}.w/{task}.delta: both must be given together")
        if "A" in given or "J_over_kappa" in given:
            raise ConfigError(f"{task}.w: (w, delta) replaces (A, J_over_kappa); give one pair only")

    grid: dict[str, tuple] = {}
    for key, default in defaults.items():
        if uses_wd and key in ("A", "J_over_kappa"):
            if key == "A":
                grid["w"], grid["delta"] = given["w"], given["delta"]
            continue
        grid[key] = given.get(key, default)

    tolerances = dict(_DEFAULT_TOLERANCES)
    if cp.has_section("tolerances"):
        for key, raw in cp["tolerances"].items():
            if key not in _DEFAULT_TOLERANCES:
                raise ConfigError(f"tolerances.{key}: unknown key")
            value = _parse_number(raw, f"tolerances.{key}", False)
            if not value > 0:
                raise ConfigError(f"tolerances.{key}: must be positive")
            tolerances[key] = value

    _validate_grid(task, grid, odd_only)
    return RunConfig(
        task=task, grid=grid, kappa=kappa, output=output, odd_only=odd_only, tolerances=tolerances
    )


# ---------------------------------------------------------------- tasks

def _chain(pt: dict, kappa: float, **extra) -> ChainParams:
    kw = dict(kappa=kappa, **extra)
    for key, name in (("n_th", "n_th"), ("theta", "theta"), ("phi", "homodyne_phi")):
        if key in pt:
            kw[name] = pt[key]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EvenChainWarning)
        if "w" in pt:
            return ChainParams(N=pt["N"], w=pt["w"] * kappa, delta=pt["delta"] * kappa, **kw)
        return ChainParams.from_hopping(pt["N"], J=pt["J_over_kappa"] * kappa, A=pt["A"], **kw)


def _task_snr_linear(pt, kappa):
    p = _chain(pt, kappa)
    eps, tau = pt["eps_over_kappa"] * kappa, pt["kappa_tau"] / kappa
    res = sensing.snr_qfi_linear(p, eps, tau, n_tot=pt["n_tot"])
    closed = sensing.snr_linear_closed_form(p, eps, tau, pt["n_tot"]) if p.N % 2 else math.nan
    return {
        "signal": res.signal, "noise": res.noise, "snr": res.snr, "snr_closed_form": closed,
        "qfi_per_photon": res.qfi_per_photon, "phi_opt": res.phi_opt,
    }


def _task_qfi_scan(pt, kappa):
    p = _chain(pt, kappa)
    res = sensing.snr_qfi_linear(p, 1.0, pt["kappa_tau"] / kappa, n_tot=pt["n_tot"])
    q = res.qfi_per_photon
    return {"qfi_per_photon": q, "ln_qfi_per_photon": math.log(q) if q > 0 else -math.inf,
            "phi_opt": res.phi_opt}


def _task_nhse_compare(pt, kappa):
    p = _chain(pt, kappa)
    tau, n = pt["kappa_tau"] / kappa, pt["n_tot"]
    disp = sensing.snr_qfi_linear(p, 1.0, tau, n_tot=n)
    site1 = sensing.snr_nhse(p, 1.0, pt["hop_phase"], tau, n_tot=n, model="site1")
    exact = sensing.snr_nhse(p, 1.0, pt["hop_phase"], tau, n_tot=n, model="exact")
    return {
        "qfi_per_photon_dispersive": disp.qfi_per_photon,
        "qfi_per_photon_hop_site1": site1.qfi_per_photon,
        "qfi_per_photon_hop_exact": exact.qfi_per_photon,
    }


def _task_meas_time(pt, kappa):
    p = _chain(pt, kappa)
    eps, n = pt["eps_over_kappa"] * kappa, pt["n_tot"]
    ts = nonmarkov.timescales(p, eps, n)
    return {
        "kappa_tau_M_numeric": kappa * nonmarkov.measurement_time(p, eps, n, "numeric"),
        "kappa_tau_M_analytic": kappa * nonmarkov.measurement_time(p, eps, n, "analytic"),
        "kappa_tau_M_single_pole": kappa * nonmarkov.measurement_time_single_pole(p, eps, n),
        "kappa_tau_M_asymptote": kappa * nonmarkov.strong_measurement_asymptote(ts),
        "kappa_t_rt": kappa * ts.t_rt, "kappa_t_esc": kappa * ts.t_esc,
        "kappa_tau_star": kappa * ts.tau_star,
    }


def _task_nonpert_scan(pt, kappa):
    p = _chain(pt, kappa)
    eps, tau, n = pt["eps_over_kappa"] * kappa, pt["kappa_tau"] / kappa, pt["n_tot"]
    sm = nonpert.scattering_matrix(0.0, p, eps)
    q = nonpert.q_factor(p.replace(beta=1.0), eps)
    snr_np = nonpert.snr_nonpert(p, eps, tau, n, q=q)
    snr_lin = sensing.snr_qfi_linear(p, eps, tau, n_tot=n).snr
    return {
        "R": sm.R.real, "T": sm.T.real, "Q": q, "snr_nonpert": snr_np, "snr_linear": snr_lin,
        "ratio": snr_np / snr_lin if snr_lin > 0 else math.nan,
    }


def _task_fig3(pt, kappa):
    row = nonmarkov.fig3_point(pt["N"], pt["J_over_kappa"], pt["A"], pt["eps_over_kappa"], pt["n_tot"], kappa)
    return {f.name: getattr(row, f.name) for f in fields(row) if f.name not in ("N", "J_over_kappa")}


def _task_fig4(pt, kappa):
    row = nonpert.fig4_point(pt["N"], pt["A"], pt["eps_over_kappa"], pt["n_tot"], kappa, pt["J_over_kappa"])
    return {f.name: getattr(row, f.name) for f in fields(row) if f.name != "N"}


_OUTPUTS: dict[str, tuple[str, ...]] = {
    "snr-linear": ("signal", "noise", "snr", "snr_closed_form", "qfi_per_photon", "phi_opt"),
    "qfi-scan": ("qfi_per_photon", "ln_qfi_per_photon", "phi_opt"),
    "nhse-compare": ("qfi_per_photon_dispersive", "qfi_per_photon_hop_site1", "qfi_per_photon_hop_exact"),
    "meas-time": ("kappa_tau_M_numeric", "kappa_tau_M_analytic", "kappa_tau_M_single_pole",
                  "kappa_tau_M_asymptote", "kappa_t_rt", "kappa_t_esc", "kappa_tau_star"),
    "nonpert-scan": ("R", "T", "Q", "snr_nonpert", "snr_linear", "ratio"),
    "fig3": tuple(f.name for f in fields(nonmarkov.Fig3Row))[2:],
    "fig4": tuple(f.name for f in fields(nonpert.Fig4Row))[1:],
}

_RUNNERS: dict[str, Callable[[dict, float], dict]] = {
    "snr-linear": _task_snr_linear,
    "qfi-scan": _task_qfi_scan,
    "nhse-compare": _task_nhse_compare,
    "meas-time": _task_meas_time,
    "nonpert-scan": _task_nonpert_scan,
    "fig3": _task_fig3,
    "fig4": _task_fig4,
}

# fig3/fig4 columns lead with the grid keys the figure is plotted against
_LEADING = {"fig3": ("N", "J_over_kappa"), "fig4": ("N",)}

_RECOVERABLE = (PoleError, NumericalError, ArithmeticError, ValueError, np.linalg.LinAlgError)


# ---------------------------------------------------------------- oracle suite

def _rel_errors(approx: np.ndarray, exact: np.ndarray) -> np.ndarray:
    """Elementwise relative error; entries that vanish are measured against the matrix scale."""
    approx, exact = np.asarray(approx), np.asarray(exact)
    scale = np.max(np.abs(exact)) if exact.size else 0.0
    floor = 1e-13 * scale
    denom = np.where(np.abs(exact) > floor, np.abs(exact), scale if scale > 0 else 1.0)
    return np.abs(approx - exact) / denom


@dataclass(frozen=True)
class OracleSuite:
    """Parameter sets for the closed-form versus brute-force comparisons.

    Every check loops over the product of ``Ns``, ``J`` and ``A``; the random
    frequencies are drawn from a generator seeded by ``(seed, check, N)``
    so that results do not depend on execution order.
    """

    Ns: tuple
    J: tuple
    A: tuple
    eps: tuple
    n_omega: int
    seed: int

    def chains(self):
        for N, J, A in itertools.product(self.Ns, self.J, self.A):
            yield ChainParams.from_hopping(N, J=J, A=A)

    def omegas(self, tag: int, p: ChainParams) -> np.ndarray:
        rng = np.random.default_rng([self.seed, tag, p.N])
        return rng.uniform(-2.5 * p.J, 2.5 * p.J, self.n_omega)


def _check_bare(s: OracleSuite) -> tuple[int, float]:
    worst, count = 0.0, 0
    for p in s.chains():
        N = p.N
        for w in s.omegas(0, p):
            ref = oracle.particle_resolvent(N, p.J, w)
            got = np.array([[greens.chi0_bare(n, m, w, p) for m in range(1, N + 1)] for n in range(1, N + 1)])
            worst, count = max(worst, _rel_errors(got, ref).max()), count + ref.size
    return count, worst


def _check_dressed(s: OracleSuite) -> tuple[int, float]:
    worst, count = 0.0, 0
    for p in s.chains():
        N = p.N
        for w in s.omegas(1, p):
            ref = oracle.particle_resolvent(N, p.J, w, kappa=p.kappa)
            got = np.array([[greens.chi_dressed(n, m, w, p) for m in range(1, N + 1)] for n in range(1, N + 1)])
            worst, count = max(worst, _rel_errors(got, ref).max()), count + ref.size
    return count, worst


def _check_quadrature(s: OracleSuite) -> tuple[int, float]:
    worst, count = 0.0, 0
    for p in s.chains():
        N = p.N
        M = build_dynamical_matrix(p)
        sites = range(1, N + 1)
        for w in s.omegas(2, p):
            ref = oracle.resolvent_susceptibility(M, w)
            got = np.array([
                [greens.chi_quadrature(a, b, n, m, w, p) for b in "xp" for m in sites]
                for a in "xp" for n in sites
            ])
            worst, count = max(worst, _rel_errors(got, ref).max()), count + ref.size
    return count, worst


def _check_perturbed(s: OracleSuite) -> tuple[int, float]:
    worst, count = 0.0, 0
    for p in s.chains():
        N = p.N
        for e in s.eps:
            for w in s.omegas(3, p):
                ref = oracle.particle_resolvent(N, p.J, w, kappa=p.kappa, eps0=e)[:, 0]
                got = np.array([greens.chi_perturbed(n, w, p, e) for n in range(1, N + 1)])
                worst, count = max(worst, _rel_errors(got, ref).max()), count + ref.size
    return count, worst


def _check_perturbed_quadrature(s: OracleSuite) -> tuple[int, float]:
    worst, count = 0.0, 0
    for p in s.chains():
        N = p.N
        for e in s.eps:
            M = build_dynamical_matrix(p, Perturbation.dispersive_last(e))
            for w in s.omegas(4, p):
                ref = oracle.resolvent_susceptibility(M, w)[:, 0]
                got = np.array([greens.chi_perturbed_quadrature(a, n, w, p, e) for a in "xp" for n in range(1, N + 1)])
                worst, count = max(worst, _rel_errors(got, ref).max()), count + ref.size
    return count, worst


def _check_exact_values(s: OracleSuite) -> tuple[int, float]:
    worst, count = 0.0, 0
    for p in s.chains():
        if p.N % 2 == 0:
            continue
        c11 = greens.chi_dressed(1, 1, 0.0, p)
        cN = abs(greens.chi_quadrature("x", "x", p.N, 1, 0.0, p))
        worst = max(worst, abs(c11 - 2 / p.kappa) * p.kappa / 2, abs(cN / (2 / p.kappa * p.gain) - 1))
        count += 2
    return count, worst


def _check_noise(s: OracleSuite) -> tuple[int, float]:
    worst, count = 0.0, 0
    for p in s.chains():
        for n_th in (0.0, 0.5):
            q = p.replace(n_th=n_th)
            M = build_dynamical_matrix(q)
            for phi in (0.0, math.pi / 4, math.pi / 2):
                got = oracle.output_noise_zero_frequency(M, oracle.NoiseModel(n_th), q, phi)
                worst, count = max(worst, abs(got / (n_th + 0.5) - 1)), count + 1
    return count, worst


def _check_scattering(s: OracleSuite) -> tuple[int, float]:
    worst, count = 0.0, 0
    for p in s.chains():
        for e in sorted(set(s.eps) | {0.5 * p.kappa}):
            sm = nonpert.scattering_matrix(0.0, p, e)
            ref = oracle.input_output_matrix(build_dynamical_matrix(p, Perturbation.dispersive_last(e)), p.kappa)
            worst = max(worst, _rel_errors(sm.matrix().real, ref).max(), abs(sm.R.real**2 + sm.T.real**2 - 1))
            count += 5
    return count, worst


def _check_linear_response(s: OracleSuite) -> tuple[int, float]:
    worst, count = 0.0, 0
    for p in s.chains():
        N = p.N
        for pert in (Perturbation.dispersive_last(1.0), Perturbation.boundary_hop(1.0, 0.7)):
            got = np.array(sensing.first_order_response(p, pert))

            def means(e, pert=pert):
                v = oracle.steady_state_means(build_dynamical_matrix(p, pert.with_epsilon(e)), p)
                return np.array([v[0], v[N]])

            # the response to eps is amplified by e^{2A(N-1)}; keep the step linear
            h = 1e-5 * p.kappa * math.exp(-2 * p.A * (N - 1))
            ref = oracle.central_difference(means, 0.0, h)
            worst, count = max(worst, _rel_errors(got, ref).max()), count + 2
    return count, worst


def _check_photon_numbers(s: OracleSuite) -> tuple[int, float]:
    worst, count = 0.0, 0
    for p in s.chains():
        budget = sensing.photon_numbers(p)
        M = build_dynamical_matrix(p)
        cov = oracle.steady_state_covariance(M, oracle.NoiseModel(p.n_th), p)
        ref = oracle.photon_numbers_from_moments(oracle.steady_state_means(M, p), cov)
        total = budget.per_site + sensing.vacuum_photons_per_site(p)
        worst, count = max(worst, _rel_errors(total, ref).max()), count + p.N
    return count, worst


VERIFY_CHECKS: dict[str, Callable[[OracleSuite], tuple[int, float]]] = {
    "chi0_bare": _check_bare,
    "chi_dressed": _check_dressed,
    "chi_quadrature": _check_quadrature,
    "chi_perturbed": _check_perturbed,
    "chi_perturbed_quadrature": _check_perturbed_quadrature,
    "exact_zero_frequency_values": _check_exact_values,
    "output_noise": _check_noise,
    "scattering_matrix": _check_scattering,
    "linear_response": _check_linear_response,
    "photon_numbers": _check_photon_numbers,
}

_VERIFY_COLUMNS = ("check", "n_samples", "max_rel_error", "tolerance", "passed", "status")

# finite differences carry truncation error; their tolerance is looser
_FD_TOLERANCE = 1e-6


# ---------------------------------------------------------------- sweep + output

@dataclass(frozen=True)
class Dataset:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    @property
    def n_errors(self) -> int:
        if "status" not in self.columns:
            return 0
        return sum(1 for s in self.column("status") if s != "ok")


def resolve_threads(requested: int | None = None) -> int:
    """Worker count: ``requested`` or the CPU count, capped by the environment variable."""
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV}: expected an integer, got {cap!r}") from None
    return max(1, n)


def _evaluate(runner, pt, kappa, out_cols):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EvenChainWarning)
            res = runner(pt, kappa)
        return tuple(res[c] for c in out_cols) + ("ok",)
    except _RECOVERABLE as exc:
        msg = f"error: {type(exc).__name__}: {exc}"
        return (math.nan,) * len(out_cols) + (msg,)


def _verify_row(name: str, suite: OracleSuite, rtol: float) -> tuple:
    tol = max(rtol, _FD_TOLERANCE) if name == "linear_response" else rtol
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EvenChainWarning)
            count, worst = VERIFY_CHECKS[name](suite)
    except _RECOVERABLE as exc:
        return (name, 0, math.nan, tol, False, f"error: {type(exc).__name__}: {exc}")
    return (name, count, float(worst), tol, bool(worst < tol), "ok" if worst < tol else "failed")


def run_sweep(config: RunConfig, threads: int | None = None) -> Dataset:
    """Evaluate every grid point concurrently; rows come back in grid order.

    Numerical failures at a point are recorded in the ``status`` column and
    the sweep continues.
    """
    workers = resolve_threads(threads)
    if config.task == "verify":
        g = config.grid
        suite = OracleSuite(
            Ns=g["N"], J=g["J_over_kappa"], A=g["A"], eps=g["eps_over_kappa"],
            n_omega=g["n_omega"][0], seed=g["seed"][0],
        )
        rtol = config.tolerances["verify_rtol"]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda name: _verify_row(name, suite, rtol), VERIFY_CHECKS))
        return Dataset(columns=_VERIFY_COLUMNS, rows=tuple(rows))

    runner, out_cols = _RUNNERS[config.task], _OUTPUTS[config.task]
    lead = _LEADING.get(config.task, tuple(config.grid))
    points = config.points()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda pt: _evaluate(runner, pt, config.kappa, out_cols), points))
    rows = tuple(tuple(pt[k] for k in lead) + r for pt, r in zip(points, results))
    return Dataset(columns=lead + out_cols + ("status",), rows=rows)


def format_value(v) -> str:
    """Deterministic text for one CSV cell; floats carry 17 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def sidecar_path(path: str | os.PathLike) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".meta.json")


def emit_csv(dataset: Dataset, path: str | os.PathLike, config: RunConfig | None = None) -> None:
    """Write ``dataset`` as UTF-8 CSV; with ``config``, also write a JSON sidecar."""
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(dataset.columns)
            for row in dataset.rows:
                w.writerow([format_value(v) for v in row])
        if config is not None:
            meta = {"columns": list(dataset.columns), "config": config.resolved(), "n_rows": len(dataset.rows)}
            with open(sidecar_path(path), "w", encoding="utf-8") as fh:
                json.dump(meta, fh, indent=2, sort_keys=True)
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_csv(path: str | os.PathLike) -> Dataset:
    """Load a CSV written by :func:`emit_csv`; numeric cells become int or float."""

    def convert(cell: str):
        for cast in (int, float):
            try:
                return cast(cell)
            except ValueError:
                pass
        return cell

    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return Dataset(columns=(), rows=())
    return Dataset(columns=tuple(rows[0]), rows=tuple(tuple(convert(c) for c in r) for r in rows[1:]))


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nhsense", description="Non-Hermitian lattice sensor sweeps.")
    ap.add_argument("task", choices=TASKS)
    ap.add_argument("--config", required=True, help="INI configuration file")
    ap.add_argument("--out", help="CSV output path (overrides run.output)")
    ap.add_argument("--threads", type=int, help=f"worker threads (capped by ${THREADS_ENV})")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"nhsense: cannot read config {args.config}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = parse_config(text, task=args.task)
        if args.threads is not None and args.threads < 1:
            raise ConfigError(f"--threads: must be at least 1, got {args.threads}")
        out = args.out or config.output or f"{config.task}.csv"
        dataset = run_sweep(config, threads=args.threads)
    except ConfigError as exc:
        print(f"nhsense: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        emit_csv(dataset, out, config)
    except OSError as exc:
        print(f"nhsense: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if dataset.n_errors:
        print(f"nhsense: {dataset.n_errors} of {len(dataset.rows)} rows failed", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
