"""Drude-cutoff Ohmic reservoir: spectral density, correlation function, and its
exponential (Matsubara) expansion, plus independent quadrature oracles.

The correlation function C(t) = int_0^inf dw J(w)[coth(bw/2)cos(wt) - i sin(wt)]
expands as sum_l zeta_l exp(-u_l t) with u_0 = omega_c, u_l = 2*pi*l/beta. The
coefficients decay only like 1/l (harmonic tail), so the series and the integral
both diverge logarithmically at t = 0; every convergence statement here is made
on strictly positive times, where the truncated tail dies off exponentially.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import DegenerateMatsubara, QuadratureNoConvergence


class BathRegimeWarning(UserWarning):
    """beta*omega_c exceeded 2*pi: the cot factor in zeta_0 is past its first pole.

    The expansion stays exact away from the poles themselves; this only flags an
    unusual corner of parameter space.
    """


@dataclass(frozen=True)
class BathSpec:
    """Reservoir parameters: coupling strength chi, cutoff omega_c, inverse temperature beta."""

    chi: float
    omega_c: float
    beta: float

    def __post_init__(self):
        if self.chi < 0:
            raise ValueError(f"chi must be >= 0, got {self.chi}")
        if self.omega_c <= 0:
            raise ValueError(f"omega_c must be > 0, got {self.omega_c}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")

    def spectral_density(self, omega):
        """J(w) = (2/pi) chi w omega_c / (w^2 + omega_c^2)."""
        omega = np.asarray(omega, dtype=float)
        return (2 / np.pi) * self.chi * omega * self.omega_c / (omega**2 + self.omega_c**2)


@dataclass(frozen=True)
class ExponentialSeries:
    """Finite expansion C(t) ~ sum_l zeta_l exp(-nu_l t), l = 0..k_max."""

    zeta: np.ndarray  # complex amplitudes; only zeta[0] has an imaginary part
    nu: np.ndarray    # positive, strictly increasing decay rates
    k_max: int

    @property
    def nu_max(self) -> float:
        return float(self.nu[-1])


_DEGENERACY_RTOL = 1e-9


def matsubara_expand(b: BathSpec, k_max: int) -> ExponentialSeries:
    """Exponential expansion of the correlation function with k_max thermal terms.

    zeta_0 = chi*omega_c*(cot(beta*omega_c/2) - i) at nu_0 = omega_c;
    zeta_l = (4*chi*omega_c/beta) * nu_l / (nu_l^2 - omega_c^2) at nu_l = 2*pi*l/beta.

    Raises DegenerateMatsubara when beta*omega_c/(2*pi) sits within 1e-9
    (relative) of a positive integer: that point is simultaneously the cot pole
    and a vanishing coefficient denominator. beta*omega_c > 2*pi itself is
    legitimate and only warns (BathRegimeWarning).
    """
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    x = b.beta * b.omega_c / (2 * math.pi)
    nearest = round(x)
    if nearest >= 1 and abs(x - nearest) < _DEGENERACY_RTOL * max(x, 1.0):
        raise DegenerateMatsubara(
            f"beta*omega_c = {b.beta * b.omega_c:.6g} is within tolerance of 2*pi*{nearest}; "
            "perturb beta or omega_c"
        )
    if x > 1:
        warnings.warn(
            f"beta*omega_c = {b.beta * b.omega_c:.4g} > 2*pi: zeta_0's cot factor has "
            "changed sign at least once",
            BathRegimeWarning,
            stacklevel=2,
        )
    nu = np.empty(k_max + 1)
    zeta = np.empty(k_max + 1, dtype=complex)
    nu[0] = b.omega_c
    zeta[0] = b.chi * b.omega_c * (1 / math.tan(b.beta * b.omega_c / 2) - 1j)
    ell = np.arange(1, k_max + 1)
    nu[1:] = 2 * math.pi * ell / b.beta
    zeta[1:] = (4 * b.chi * b.omega_c / b.beta) * nu[1:] / (nu[1:] ** 2 - b.omega_c**2)
    return ExponentialSeries(zeta=zeta, nu=nu, k_max=k_max)


def correlation_from_series(s: ExponentialSeries, t) -> np.ndarray:
    """sum_l zeta_l exp(-nu_l t), vectorized over t >= 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    return np.exp(-np.multiply.outer(t, s.nu)) @ s.zeta


def auto_k_max(b: BathSpec, rtol: float = 1e-6, t_min: float = 0.05,
               t_max: float = 10.0, cap: int = 512) -> int:
    """Smallest k_max whose doubling changes C(t) by < rtol on [t_min, t_max].

    The change is normalised by |C(t_min)| of the doubled series. t_min must be
    positive: at t = 0 the series diverges logarithmically and the rule would
    never terminate.
    """
    if t_min <= 0:
        raise ValueError("t_min must be > 0 (the series diverges at t = 0)")
    if b.chi == 0:
        return 0
    grid = np.linspace(t_min, t_max, 64)
    k = 4
    while k <= cap:
        c_k = correlation_from_series(matsubara_expand(b, k), grid)
        c_2k = correlation_from_series(matsubara_expand(b, 2 * k), grid)
        ref = abs(correlation_from_series(matsubara_expand(b, 2 * k), t_min))
        if np.max(np.abs(c_k - c_2k)) < rtol * ref:
            return k
        k *= 2
    return cap


_QUAD_KW = dict(limit=400, epsabs=1e-12, epsrel=1e-10)


def correlation_quadrature(b: BathSpec, t: float, rtol: float = 1e-8) -> complex:
    """C(t) by adaptive quadrature of the defining integral; oracle for the series.

    Requires t > 0: the real part's integrand decays only like 1/w, so the
    integral does not exist at t = 0. The oscillatory tails are handled with
    cos/sin-weighted quadrature on the half line.
    """
    if t <= 0:
        raise ValueError("t must be > 0 (Re C diverges at t = 0)")
    if b.chi == 0:
        return 0.0 + 0.0j

    def coth_weighted(w):
        # J(w) coth(beta w / 2), finite limit 4 chi / (pi beta omega_c) at w = 0
        if w == 0.0:
            return 4 * b.chi / (math.pi * b.beta * b.omega_c)
        return b.spectral_density(w) / math.tanh(b.beta * w / 2)

    re, re_err = quad(coth_weighted, 0, np.inf, weight="cos", wvar=t, **_QUAD_KW)
    im, im_err = quad(b.spectral_density, 0, np.inf, weight="sin", wvar=t, **_QUAD_KW)
    scale = abs(complex(re, -im)) + 1e-300
    if max(re_err, im_err) > rtol * scale + 1e-12:
        raise QuadratureNoConvergence(
            f"correlation quadrature error {max(re_err, im_err):.2e} at t={t} "
            f"exceeds rtol={rtol:.1e}"
        )
    return complex(re, -im)


def dephasing_exponent(b: BathSpec, t: float) -> float:
    """Gamma(t) = 4 int dw J(w) coth(bw/2) (1 - cos wt)/w^2 by adaptive quadrature.

    Exact coherence decay exponent when the coupling commutes with the sensor
    Hamiltonian (tunneling 0, pure z-coupling): |rho_eg(t)| = |rho_eg(0)| e^{-Gamma}.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0 or b.chi == 0:
        return 0.0

    def envelope(w):
        # 4 J(w) coth(beta w / 2) / w^2, finite at w = 0
        if w == 0.0:
            return 16 * b.chi / (math.pi * b.beta * b.omega_c)
        return 4 * b.spectral_density(w) / math.tanh(b.beta * w / 2) / (w * w)

    def integrand(w):
        if w == 0.0:
            return 8 * b.chi * t * t / (math.pi * b.beta * b.omega_c)
        return envelope(w) * (1 - math.cos(w * t))

    # 1 - cos(wt) oscillates at period 2 pi / t; resolve it adaptively up to
    # w_split, then integrate the ~1/w^3 tail as (monotone part) minus
    # (cos-weighted part, dedicated oscillatory rule on the half line).
    w_split = max(10 * b.omega_c, 20 * math.pi / t, 10 / b.beta)
    val1, err1 = quad(integrand, 0, w_split, limit=max(200, int(20 * w_split * t)),
                      epsabs=1e-13, epsrel=1e-11)
    val2, err2 = quad(envelope, w_split, np.inf, limit=400,
                      epsabs=1e-14, epsrel=1e-12)
    val3, err3 = quad(envelope, w_split, np.inf, weight="cos", wvar=t,
                      limit=400, epsabs=1e-14, epsrel=1e-12)
    val, err = val1 + val2 - val3, err1 + err2 + err3
    if err > 1e-8 * max(abs(val), 1e-12) + 1e-12:
        raise QuadratureNoConvergence(
            f"dephasing-exponent quadrature error {err:.2e} at t={t}"
        )
    return val
