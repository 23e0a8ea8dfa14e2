"""Convergence factor of the Robin/Ventcell Schwarz iteration for two half-planes, and the choice of alpha.

With ``z = sqrt(K (s i omega + K eta^2))`` (principal root) on each side and
``zeta = s_gamma i omega + Kf_delta eta^2`` for the fracture, one double
iteration multiplies the interface error in Fourier space by

    rho = (alpha - z+)(alpha - z-) / ((alpha + z- + zeta)(alpha + z+ + zeta)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class SymbolParams:
    s_minus: float = 1.0
    K_minus: float = 1.0
    s_plus: float = 1.0
    K_plus: float = 1.0
    s_gamma: float = 1.0
    Kf_delta: float = 1.0
    alpha: float = 1.0

    def with_alpha(self, alpha: float) -> "SymbolParams":
        return replace(self, alpha=float(alpha))


@dataclass(frozen=True)
class FreqBox:
    eta_min: float
    eta_max: float
    omega_min: float
    omega_max: float
    n_eta: int = 64
    n_omega: int = 64

    def __post_init__(self):
        if not (0 < self.eta_min < self.eta_max) or not (0 < self.omega_min < self.omega_max):
            raise ValueError(f"frequency ranges must satisfy 0 < min < max, got {self}")
        if self.n_eta < 2 or self.n_omega < 2:
            raise ValueError("sample counts must be at least 2")

    @classmethod
    def from_discretization(cls, L: float, h: float, T: float, dt: float, n_eta: int = 64,
                            n_omega: int = 64) -> "FreqBox":
        """Box ``|eta| in [pi/L, pi/h]``, ``|omega| in [pi/T, pi/dt]``."""
        return cls(math.pi / L, math.pi / h, math.pi / T, math.pi / dt, n_eta, n_omega)

    def samples(self) -> tuple[np.ndarray, np.ndarray]:
        eta = np.geomspace(self.eta_min, self.eta_max, self.n_eta)
        omega = np.geomspace(self.omega_min, self.omega_max, self.n_omega)
        return eta, omega


def _roots(s, K, eta, omega):
    return np.sqrt(K * (s * 1j * omega + K * eta ** 2) + 0j)


def rho_f(params: SymbolParams, eta, omega, alpha=None):
    """Modulus of the convergence factor; broadcasts over ``eta``, ``omega`` and ``alpha``."""
    a = params.alpha if alpha is None else alpha
    eta = np.asarray(eta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    zm = _roots(params.s_minus, params.K_minus, eta, omega)
    zp = _roots(params.s_plus, params.K_plus, eta, omega)
    zeta = params.s_gamma * 1j * omega + params.Kf_delta * eta ** 2
    return np.abs((a - zp) * (a - zm)) / np.abs((a + zm + zeta) * (a + zp + zeta))


def rho_f_literal(params: SymbolParams, eta: float, omega: float) -> float:
    """The same factor through the characteristic roots ``r = +-sqrt(Delta)/(2K)``, ``Delta = 4K(s i w + K eta^2)``."""
    import cmath

    def r(sign, s, K):
        delta = 4.0 * K * (s * 1j * omega + K * eta * eta)
        return sign * cmath.sqrt(delta) / (2.0 * K)

    a = params.alpha
    zeta = params.s_gamma * 1j * omega + params.Kf_delta * eta * eta
    r_minus_plus = r(-1.0, params.s_plus, params.K_plus)    # decaying root in the right half-plane
    r_plus_minus = r(1.0, params.s_minus, params.K_minus)   # decaying root in the left half-plane
    first = (params.K_plus * r_minus_plus + a) / (params.K_minus * r_plus_minus + a + zeta)
    second = (-params.K_minus * r_plus_minus + a) / (-params.K_plus * r_minus_plus + a + zeta)
    return abs(first * second)


def max_factor(params: SymbolParams, box: FreqBox, alpha=None) -> np.ndarray:
    """Max of ``rho_f`` over the sampled box, for a scalar or an array of alphas."""
    eta, omega = box.samples()
    E, W = np.meshgrid(eta, omega, indexing="ij")
    a = np.atleast_1d(params.alpha if alpha is None else alpha).astype(float)
    vals = rho_f(params, E[None], W[None], a[:, None, None])
    out = vals.reshape(len(a), -1).max(axis=1)
    return out if np.ndim(alpha) else out[0]


def default_alpha_range(params: SymbolParams, box: FreqBox) -> tuple[float, float]:
    lo = 1e-3 * math.sqrt(params.K_minus * box.eta_min * params.K_plus * box.eta_min)
    hi = 1e3 * math.sqrt(params.K_minus * box.eta_max * params.K_plus * box.eta_max)
    return lo, hi


def alpha_scan(params: SymbolParams, box: FreqBox, alpha_lo: float, alpha_hi: float,
               n: int = 64) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < alpha_lo < alpha_hi:
        raise ValueError(f"need 0 < alpha_lo < alpha_hi, got {alpha_lo}, {alpha_hi}")
    alphas = np.geomspace(alpha_lo, alpha_hi, n)
    return alphas, max_factor(params, box, alphas)


def optimize_alpha(params: SymbolParams, box: FreqBox, alpha_lo: Optional[float] = None,
                   alpha_hi: Optional[float] = None, n_scan: int = 64,
                   rtol: float = 1e-6) -> tuple[float, float]:
    """Minimize the box maximum of ``rho_f`` over alpha: log scan, then golden section.

    Returns ``(alpha_star, max_factor_at_alpha_star)``.
    """
    d_lo, d_hi = default_alpha_range(params, box)
    lo = d_lo if alpha_lo is None else alpha_lo
    hi = d_hi if alpha_hi is None else alpha_hi
    alphas, vals = alpha_scan(params, box, lo, hi, n_scan)
    i = int(np.argmin(vals))
    a = math.log(alphas[max(i - 1, 0)])
    b = math.log(alphas[min(i + 1, n_scan - 1)])

    def f(log_alpha):
        return float(max_factor(params, box, math.exp(log_alpha)))

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > rtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    best = [(vals[i], alphas[i])]
    x = 0.5 * (a + b)
    best.append((f(x), math.exp(x)))
    val, alpha = min(best)
    return float(alpha), float(val)
