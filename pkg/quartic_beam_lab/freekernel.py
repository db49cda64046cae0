"""Free resolvent of Δ² in three dimensions.

R0^±(λ⁴)(x, y) = F^±(λ|x-y|) / (8πλ) with the profile
F^±(p) = (e^{±ip} - e^{-p}) / p, plus the subtracted profiles
F̃^±(p) = F^±(p) + p and F̄(p) = (e^{ip} - e^{-ip}) / p + i p²/3.
"""
from dataclasses import dataclass
from enum import Enum
from functools import cache
from typing import Union

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import integrate, special
from scipy.spatial.distance import cdist

from .errors import InvalidArgumentError, UnsupportedError

# Below these arguments the profile is evaluated from its Taylor series
SWITCH_POINT = 1e-3
DERIVATIVE_SWITCH_POINT = 1.0
SERIES_TERMS = 32

MAX_SERIES_ORDER = 8
MAX_DERIVATIVE_ORDER = 3


class ProfileKind(str, Enum):
    F = "F"
    Ftilde = "Ftilde"
    Fbar = "Fbar"


def parse_sign(sign: Union[int, str]) -> int:
    """Accepts +1/-1, '+'/'-' or 'plus'/'minus'"""
    if sign in (1, '+', 'plus', '+1'):
        return 1
    if sign in (-1, '-', 'minus', '-1'):
        return -1
    raise InvalidArgumentError(f"Sign must be + or -, got {sign!r}")


@cache
def _series_coefficients(kind: ProfileKind, sign: int) -> np.ndarray:
    m = np.arange(1, SERIES_TERMS + 1)
    fact = special.factorial(m)
    if kind == ProfileKind.Fbar:
        coeffs = (1j ** m - (-1j) ** m) / fact
        coeffs[2] += 1j / 3.0
        return coeffs
    s = 1j * sign
    coeffs = (s ** m - (-1.0) ** m) / fact
    if kind == ProfileKind.Ftilde:
        coeffs[1] += 1.0
    return coeffs


def _numerator_derivative(kind: ProfileKind, sign: int, p: np.ndarray, k: int) -> np.ndarray:
    if kind == ProfileKind.Fbar:
        if k == 0:
            return 2j * np.sin(p)
        return (1j ** k) * np.exp(1j * p) - ((-1j) ** k) * np.exp(-1j * p)
    s = 1j * sign
    if k == 0:
        return np.expm1(s * p) - np.expm1(-p)
    return (s ** k) * np.exp(s * p) - ((-1.0) ** k) * np.exp(-p)


def _direct(kind: ProfileKind, sign: int, p: np.ndarray, order: int) -> np.ndarray:
    # Leibniz rule on N(p) * p^-1
    out = np.zeros(p.shape, dtype=complex)
    for k in range(order + 1):
        j = order - k
        out += (special.comb(order, k) * (-1.0) ** j * special.factorial(j)
                * _numerator_derivative(kind, sign, p, k) / p ** (j + 1))
    if kind == ProfileKind.Ftilde:
        out += (p, np.ones_like(p), 0.0, 0.0)[order]
    elif kind == ProfileKind.Fbar:
        out += 1j * (p ** 2 / 3.0, 2.0 * p / 3.0, 2.0 / 3.0 * np.ones_like(p), 0.0)[order]
    return out


def profile_value(kind, sign, p, derivative_order: int = 0):
    """Value or derivative (order <= 3) of a profile function at p >= 0"""
    kind = ProfileKind(kind)
    sign = 1 if kind == ProfileKind.Fbar else parse_sign(sign)
    if derivative_order < 0:
        raise InvalidArgumentError(f"Derivative order must be >= 0, got {derivative_order}")
    if derivative_order > MAX_DERIVATIVE_ORDER:
        raise UnsupportedError(f"Derivatives above order {MAX_DERIVATIVE_ORDER} are not supported")
    scalar = np.ndim(p) == 0
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise InvalidArgumentError("Profile argument must be finite and >= 0")

    switch = SWITCH_POINT if derivative_order == 0 else DERIVATIVE_SWITCH_POINT
    out = np.empty(p.shape, dtype=complex)
    small = p < switch
    if np.any(small):
        coeffs = npoly.polyder(_series_coefficients(kind, sign), derivative_order)
        out[small] = npoly.polyval(p[small], coeffs)
    if not np.all(small):
        out[~small] = _direct(kind, sign, p[~small], derivative_order)
    return complex(out[0]) if scalar else out


def _check_lambda(lam):
    if not np.isfinite(lam) or lam <= 0:
        raise InvalidArgumentError(f"λ must be positive, got {lam}")


def _distance(x, y) -> np.ndarray:
    return np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)


def free_resolvent_kernel(lam: float, x, y, sign):
    """R0^±(λ⁴)(x, y); x, y broadcast as (..., 3) arrays"""
    _check_lambda(lam)
    r = _distance(x, y)
    return profile_value(ProfileKind.F, sign, lam * r) / (8 * np.pi * lam)


def free_resolvent_kernel_derivative(lam: float, x, y, sign):
    """∂λ R0^±(λ⁴)(x, y)"""
    _check_lambda(lam)
    r = _distance(x, y)
    p = lam * r
    value = profile_value(ProfileKind.F, sign, p)
    slope = profile_value(ProfileKind.F, sign, p, 1)
    return (r * slope) / (8 * np.pi * lam) - value / (8 * np.pi * lam ** 2)


def kernel_matrix(lam: float, points_a, points_b, sign) -> np.ndarray:
    """Matrix of R0^±(λ⁴)(a_i, b_j)"""
    _check_lambda(lam)
    r = cdist(np.atleast_2d(points_a), np.atleast_2d(points_b))
    return profile_value(ProfileKind.F, sign, lam * r) / (8 * np.pi * lam)


def kernel_matrix_from_distances(lam: float, distances: np.ndarray, sign) -> np.ndarray:
    _check_lambda(lam)
    return profile_value(ProfileKind.F, sign, lam * distances) / (8 * np.pi * lam)


@dataclass(frozen=True)
class SeriesTerm:
    """coefficient * λ^k * G_k(x, y) with G_k = scale * |x-y|^power"""
    k: int
    coefficient: complex
    scale: float
    power: int

    def kernel(self, r):
        return self.scale * np.asarray(r, dtype=float) ** self.power


def series_coefficient(k: int, sign) -> complex:
    """a_k^± = ((-1)^(k+1) + (±i)^(k+2)) / (8π (k+2)!)"""
    if k < -1 or k > MAX_SERIES_ORDER:
        raise UnsupportedError(f"Series coefficients are tabulated for -1 <= k <= {MAX_SERIES_ORDER}")
    s = 1j * parse_sign(sign)
    value = ((-1.0) ** (k + 1) + s ** (k + 2)) / (8 * np.pi * special.factorial(k + 2))
    return complex(np.real_if_close(value))


def series_term(k: int, sign) -> SeriesTerm:
    if k == 0:
        return SeriesTerm(0, 1.0, -1.0 / (8 * np.pi), 1)
    if k == 4:
        return SeriesTerm(4, 1.0, -1.0 / (4 * np.pi * special.factorial(6)), 5)
    return SeriesTerm(k, series_coefficient(k, sign), 1.0, k + 1)


def series_kernel(k: int, r):
    """G_k(x, y) as a function of r = |x-y|"""
    return series_term(k, 1).kernel(r)


def free_resolvent_series(lam: float, x, y, sign, N: int):
    """Low-energy expansion of R0^±(λ⁴)(x, y) truncated after the λ^N term"""
    if N > MAX_SERIES_ORDER:
        raise UnsupportedError(f"Truncation order {N} exceeds the tabulated order {MAX_SERIES_ORDER}")
    if N < -1:
        raise InvalidArgumentError(f"Truncation order must be >= -1, got {N}")
    _check_lambda(lam)
    r = _distance(x, y)
    total = 0.0 + 0.0j
    for k in range(-1, N + 1):
        term = series_term(k, sign)
        total = total + term.coefficient * lam ** k * term.kernel(r)
    return total


def _quad_complex(fn, a, b):
    re = integrate.quad(lambda s: fn(s).real, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    im = integrate.quad(lambda s: fn(s).imag, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    return complex(re, im)


# Variants of the Taylor identity and the profiles they accept
TAYLOR_VARIANTS = {
    'i': (ProfileKind.F, ProfileKind.Ftilde, ProfileKind.Fbar),
    'ii': (ProfileKind.Ftilde, ProfileKind.Fbar),
    'iii': (ProfileKind.Fbar,),
}


def verify_taylor_identity(kind, sign, lam: float, x, y, variant: str) -> float:
    """|F(λ|x-y|) - RHS| for the first, second or third order Taylor identity.

    The right-hand side expands F(λ|x-θy|) around θ = 0 with the integral
    form of the remainder; the θ-integral is computed by adaptive quadrature.
    """
    kind = ProfileKind(kind)
    if variant not in TAYLOR_VARIANTS:
        raise InvalidArgumentError(f"Unknown Taylor variant {variant!r}")
    if kind not in TAYLOR_VARIANTS[variant]:
        raise InvalidArgumentError(f"Variant ({variant}) needs a profile in "
                                   f"{[k.value for k in TAYLOR_VARIANTS[variant]]}, got {kind.value}")
    _check_lambda(lam)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def F(p, m=0):
        return profile_value(kind, sign, p, m)

    lhs = F(lam * np.linalg.norm(x - y))
    ynorm = np.linalg.norm(y)
    xnorm = np.linalg.norm(x)
    rhs = F(lam * xnorm)
    if ynorm == 0:
        return abs(lhs - rhs)

    def geometry(theta):
        z = x - theta * y
        s = np.linalg.norm(z)
        cos_a = 0.0 if s == 0 else float(np.dot(y, z) / (s * ynorm))
        return lam * s, cos_a, 1.0 - cos_a ** 2

    if variant == 'i':
        def integrand(theta):
            rho, cos_a, _ = geometry(theta)
            return F(rho, 1) * cos_a
        return abs(lhs - (rhs - lam * ynorm * _quad_complex(integrand, 0.0, 1.0)))

    yw = 0.0 if xnorm == 0 else float(np.dot(y, x) / xnorm)
    rhs = rhs - lam * yw * F(lam * xnorm, 1)

    if variant == 'ii':
        def integrand(theta):
            rho, cos_a, sin2 = geometry(theta)
            ratio = F(rho, 2) if rho < 1e-12 else F(rho, 1) / rho
            return (1.0 - theta) * (sin2 * ratio + cos_a ** 2 * F(rho, 2))
        return abs(lhs - (rhs + lam ** 2 * ynorm ** 2 * _quad_complex(integrand, 0.0, 1.0)))

    p0 = lam * xnorm
    ratio0 = F(p0, 2) if p0 < 1e-12 else F(p0, 1) / p0
    rhs = rhs + 0.5 * lam ** 2 * ((ynorm ** 2 - yw ** 2) * ratio0 + yw ** 2 * F(p0, 2))

    def integrand(theta):
        rho, cos_a, sin2 = geometry(theta)
        if rho < 1e-12:
            bracket = -0.5 * F(rho, 3)
        else:
            bracket = F(rho, 1) / rho ** 2 - F(rho, 2) / rho
        return (1.0 - theta) ** 2 * (3 * cos_a * sin2 * bracket - cos_a ** 3 * F(rho, 3))
    return abs(lhs - (rhs + 0.5 * lam ** 3 * ynorm ** 3 * _quad_complex(integrand, 0.0, 1.0)))
