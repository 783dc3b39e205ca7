"""Numerical evaluation of the exact GN integral at the comb center.

At ``f = 0`` the integrand depends on ``(f1, f2)`` only through the product
``nu = f1 f2``, so the 2-D integral collapses to a 1-D integral of the kernel
``g(nu)`` against the density of the level sets ``f1 f2 = nu``:

* square ``|f1|, |f2| <= b``: density ``2 ln(b^2/|nu|)`` for each sign of ``nu``;
* lozenge (square with ``|f1 + f2| <= b``): for ``nu > 0`` the density becomes
  ``2 ln((b + r)/(b - r))``, ``r = sqrt(b^2 - 4 nu)``, supported on
  ``nu <= b^2/4``; negative products are unaffected.

Here ``b = B_WDM/2``. The logarithmic singularity at ``nu -> 0`` is removed with
``nu = nu0 exp(-s)`` on the first oscillation period ``[0, nu0]``; beyond it,
panels are capped at a quarter of the narrowest array-factor lobe spacing.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numba import njit

from .closed_form import validity_report
from .model import Fiber, Link, Method, NliEstimate, Spectrum
from .quadrature import GAUSS_WEIGHTS, KRONROD_WEIGHTS, NODES, QuadResult, adaptive_panel_integrate

DELTA_SING = 1e-7
SINC_SERIES_SWITCH = 1e-6
S_MAX = 60.0

# pi split so that k*PI_A and k*PI_B are exact for |k| < 2**29
PI_A = float(np.float32(math.pi))
PI_B = float(np.float32(math.pi - PI_A))
PI_C = (math.pi - PI_A - PI_B) + 1.2246467991473532e-16


class Domain(str, enum.Enum):
    SQUARE = "square"
    LOZENGE = "lozenge"


@dataclass(frozen=True)
class OracleConfig:
    domain: Domain = Domain.LOZENGE
    rel_tol: float = 1e-5
    max_evals: int = 2_000_000_000

    def __post_init__(self):
        object.__setattr__(self, "domain", Domain(self.domain))
        if not 0.0 < self.rel_tol < 1e-2:
            raise ValueError(f"rel_tol must be in (0, 1e-2), got {self.rel_tol!r}")
        if int(self.max_evals) != self.max_evals or self.max_evals <= 0:
            raise ValueError(f"max_evals must be a positive integer, got {self.max_evals!r}")


@dataclass(frozen=True)
class Kernel:
    """``g(nu) = |F(j 4 pi^2 beta2 nu)|^2`` for a link of ``n_spans`` spans,
    where ``F`` is the single-span field kernel times the array factor."""

    alpha: float
    span_length: float
    n_spans: int
    beta2: float

    @classmethod
    def from_link(cls, fiber: Fiber, link: Link) -> "Kernel":
        return cls(fiber.alpha, link.span_length, link.num_spans, fiber.beta2)

    @property
    def nu_period(self) -> float:
        """Spacing in ``nu`` of the narrowest array-factor lobes."""
        return 1.0 / (2.0 * math.pi * self.beta2 * self.span_length * self.n_spans)

    def __call__(self, nu):
        return kernel_eval(self, nu)


@njit(cache=True)
def _reduce_mod_pi(u):
    k = np.rint(u / math.pi)
    return ((u - k * PI_A) - k * PI_B) - k * PI_C


@njit(cache=True)
def _chi_reduced(eps, n):
    if n == 1:
        return 1.0
    s = math.sin(eps)
    if abs(s) < DELTA_SING:
        r = n * math.cos(n * eps) / math.cos(eps)
    else:
        r = math.sin(n * eps) / s
    return r * r


@njit(cache=True)
def _chi_array(xi, span_length, n):
    out = np.empty(xi.size)
    for i in range(xi.size):
        out[i] = _chi_reduced(_reduce_mod_pi(0.5 * span_length * xi[i]), n)
    return out


@njit(cache=True)
def _chebyshev_chi(c, n):
    # sin(n e)/sin(e) = U_{n-1}(cos e): no removable singularity to handle
    if n == 1:
        return 1.0
    u_prev = 1.0
    u = 2.0 * c
    for _ in range(2, n):
        u_prev, u = u, 2.0 * c * u - u_prev
    return u * u


@njit(cache=True)
def _g_scalar(nu, alpha, span_length, n, xi_per_nu, one_minus_q_sq, q):
    xi = abs(xi_per_nu * nu)
    eps = _reduce_mod_pi(0.5 * span_length * xi)
    s = math.sin(eps)
    if alpha == 0.0:
        xl = xi * span_length
        if xl < SINC_SERIES_SWITCH:
            head = span_length * span_length * (1.0 - xl * xl / 12.0)
        else:
            head = 4.0 * s * s / (xi * xi)
    else:
        # |1 - q e^{j xi L}|^2 = (1-q)^2 + 4 q sin^2(xi L / 2)
        head = (one_minus_q_sq + 4.0 * q * s * s) / (4.0 * alpha * alpha + xi * xi)
    # |eps| <= pi/2, so cos(eps) >= 0
    return head * _chebyshev_chi(math.sqrt(max(0.0, 1.0 - s * s)), n)


@njit(cache=True)
def _g_array(nu, alpha, span_length, n, xi_per_nu, one_minus_q_sq, q):
    out = np.empty(nu.size)
    for i in range(nu.size):
        out[i] = _g_scalar(nu[i], alpha, span_length, n, xi_per_nu, one_minus_q_sq, q)
    return out


def _kernel_args(kernel: Kernel):
    u = 2.0 * kernel.alpha * kernel.span_length
    one_minus_q = -math.expm1(-u)
    return (float(kernel.alpha), float(kernel.span_length), int(kernel.n_spans),
            4.0 * math.pi ** 2 * kernel.beta2, one_minus_q * one_minus_q, math.exp(-u))


def phased_array_factor(xi, span_length: float, n_spans: int):
    """``[sin(N L xi/2) / sin(L xi/2)]^2``, finite everywhere (``N^2`` at the
    removable singularities ``xi = 2 k pi / L``)."""
    xi_arr = np.asarray(xi, dtype=float)
    out = _chi_array(np.ascontiguousarray(xi_arr.ravel()), float(span_length), int(n_spans))
    return out.reshape(xi_arr.shape) if xi_arr.ndim else float(out[0])


def kernel_eval(kernel: Kernel, nu):
    """Evaluate ``g(nu)`` for a scalar or array ``nu`` [Hz^2]."""
    nu_arr = np.asarray(nu, dtype=float)
    out = _g_array(np.ascontiguousarray(nu_arr.ravel()), *_kernel_args(kernel))
    return out.reshape(nu_arr.shape) if nu_arr.ndim else float(out[0])




_NODES = NODES
_KW = KRONROD_WEIGHTS
_GW = GAUSS_WEIGHTS


# Integrands of the product-measure pieces. ``x`` is nu for the direct forms
# and s (nu = nu0 exp(-s), Jacobian included) for the substituted ones.
@njit(cache=True)
def _square_direct(x, nu0, b, alpha, span_length, n, xi_per_nu, omq2, q):
    return math.log(b * b / x) * _g_scalar(x, alpha, span_length, n, xi_per_nu, omq2, q)


@njit(cache=True)
def _lozenge_direct(x, nu0, b, alpha, span_length, n, xi_per_nu, omq2, q):
    # ln((b + r)/(b - r)) with b - r = 4 nu / (b + r)
    bpr = b + math.sqrt(max(b * b - 4.0 * x, 0.0))
    return math.log(bpr * bpr / (4.0 * x)) * _g_scalar(x, alpha, span_length, n, xi_per_nu, omq2, q)


@njit(cache=True)
def _square_subst(x, nu0, b, alpha, span_length, n, xi_per_nu, omq2, q):
    nu = nu0 * math.exp(-x)
    w = math.log(b * b / nu0) + x
    return w * nu * _g_scalar(nu, alpha, span_length, n, xi_per_nu, omq2, q)


@njit(cache=True)
def _lozenge_subst(x, nu0, b, alpha, span_length, n, xi_per_nu, omq2, q):
    nu = nu0 * math.exp(-x)
    bpr = b + math.sqrt(max(b * b - 4.0 * nu, 0.0))
    w = math.log(bpr * bpr / (4.0 * nu0)) + x
    return w * nu * _g_scalar(nu, alpha, span_length, n, xi_per_nu, omq2, q)


@njit(cache=True)
def _gk15_kernel_panels(fn, lo, hi, nu0, b, alpha, span_length, n, xi_per_nu, omq2, q):
    m = lo.size
    k = np.empty(m)
    e = np.empty(m)
    ka = np.empty(m)
    for i in range(m):
        half = 0.5 * (hi[i] - lo[i])
        mid = 0.5 * (hi[i] + lo[i])
        sk = 0.0
        sg = 0.0
        sa = 0.0
        for j in range(15):
            y = fn(mid + half * _NODES[j], nu0, b, alpha, span_length, n, xi_per_nu, omq2, q)
            sk += _KW[j] * y
            sg += _GW[j] * y
            sa += _KW[j] * abs(y)
        k[i] = sk * half
        e[i] = abs(sk - sg) * half
        ka[i] = sa * half
    return k, e, ka


def _density(b: float, lozenge: bool):
    b2 = b * b
    if lozenge:
        def weight(v):
            r = np.sqrt(np.maximum(b2 - 4.0 * v, 0.0))
            return 2.0 * np.log(b + r) - np.log(4.0 * v)
    else:
        def weight(v):
            return np.log(b2 / v)
    return weight


def _weighted_integral(b: float, lozenge: bool, period: float, rel_tol: float, max_evals: int,
                       kernel: Optional[Kernel] = None, g: Optional[Callable] = None) -> QuadResult:
    """``integral_0^upper h(nu) w(nu) dnu`` where ``w`` is the square (``upper = b^2``)
    or lozenge (``upper = b^2/4``) density and ``h`` is ``kernel`` or ``g``."""
    upper = 0.25 * b * b if lozenge else b * b
    nu0 = min(upper, period) if math.isfinite(period) else upper
    if kernel is not None:
        args = _kernel_args(kernel)
        head_fn = _lozenge_subst if lozenge else _square_subst
        tail_fn = _lozenge_direct if lozenge else _square_direct

        def head_rule(lo, hi):
            return _gk15_kernel_panels(head_fn, lo, hi, nu0, b, *args)

        def tail_rule(lo, hi):
            return _gk15_kernel_panels(tail_fn, lo, hi, nu0, b, *args)

        head_f = tail_f = None
    else:
        weight = _density(b, lozenge)
        head_rule = tail_rule = None

        def head_f(s):
            v = nu0 * np.exp(-s)
            return weight(v) * v * g(v)

        def tail_f(v):
            return weight(v) * g(v)

    # each piece is held to rel_tol on its own; the pieces are nonnegative for
    # physical kernels, so the sum meets the same relative tolerance
    head = adaptive_panel_integrate(head_f, 0.0, S_MAX, rel_tol=rel_tol, max_evals=max_evals,
                                    min_panels=32, rule=head_rule)
    if nu0 >= upper:
        return head
    tail = adaptive_panel_integrate(tail_f, nu0, upper, rel_tol=rel_tol,
                                    max_evals=max(1, max_evals - head.n_evals),
                                    period_hint=period, rule=tail_rule)
    return head + tail


def product_measure_integrals(b: float, domains=(Domain.SQUARE, Domain.LOZENGE),
                              rel_tol: float = 1e-5, max_evals: int = 2_000_000_000,
                              kernel: Optional[Kernel] = None, g: Optional[Callable] = None,
                              even: bool = False, period: float = math.inf) -> dict:
    """Integrals of ``h(f1 f2)`` over the requested domains, ``b = B_WDM/2``.

    ``h`` is a :class:`Kernel` (even, fused fast path) or a vectorized callable
    ``g``; pass ``even=True`` when ``g(-nu) == g(nu)`` to skip one half. The
    negative-product half carries the square density in both domains and is
    computed once.
    """
    if (kernel is None) == (g is None):
        raise ValueError("pass exactly one of kernel or g")
    domains = [Domain(d) for d in domains]
    if kernel is not None:
        even = True
        period = kernel.nu_period
        h_pos = h_neg = None
    else:
        h_pos = g
        h_neg = g if even else (lambda v: g(-v))

    budget = max_evals

    def piece(h, lozenge):
        nonlocal budget
        res = _weighted_integral(b, lozenge, period, rel_tol, max(1, budget), kernel=kernel, g=h)
        budget -= res.n_evals
        return res

    neg = piece(h_neg, False)
    out = {}
    if Domain.SQUARE in domains:
        if even:
            out[Domain.SQUARE] = neg.scaled(4.0)
        else:
            out[Domain.SQUARE] = piece(h_pos, False).scaled(2.0) + neg.scaled(2.0)
    if Domain.LOZENGE in domains:
        out[Domain.LOZENGE] = piece(h_pos, True).scaled(2.0) + neg.scaled(2.0)
    return out


def gn_numeric_domains(fiber: Fiber, link: Link, spectrum: Spectrum, config: OracleConfig,
                       domains=(Domain.SQUARE, Domain.LOZENGE),
                       g: Optional[Callable] = None) -> dict:
    """Oracle estimates for several domains from shared quadrature pieces.

    ``g`` replaces the physical kernel (a hook for checking the measure).
    """
    b = 0.5 * spectrum.b_wdm
    kern = Kernel.from_link(fiber, link)
    if g is None:
        res = product_measure_integrals(b, domains, config.rel_tol, config.max_evals, kernel=kern)
    else:
        res = product_measure_integrals(b, domains, config.rel_tol, config.max_evals, g=g,
                                        period=kern.nu_period)
    prefactor = 16.0 / 27.0 * fiber.gamma ** 2 * spectrum.g_wdm ** 3
    validity = validity_report(fiber, link, spectrum)
    methods = {Domain.SQUARE: Method.NUMERIC_SQUARE, Domain.LOZENGE: Method.NUMERIC_LOZENGE}
    return {d: NliEstimate(prefactor * r.value, methods[d], validity, quad=r.scaled(prefactor))
            for d, r in res.items()}


def gn_numeric_square(fiber: Fiber, link: Link, spectrum: Spectrum,
                      config: OracleConfig = OracleConfig(Domain.SQUARE),
                      g: Optional[Callable] = None) -> NliEstimate:
    """GN integral at ``f = 0`` over the square ``|f1|, |f2| <= B/2``."""
    if config.domain is not Domain.SQUARE:
        raise ValueError("gn_numeric_square needs config.domain == square")
    return gn_numeric_domains(fiber, link, spectrum, config, (Domain.SQUARE,), g)[Domain.SQUARE]


def gn_numeric_lozenge(fiber: Fiber, link: Link, spectrum: Spectrum,
                       config: OracleConfig = OracleConfig(Domain.LOZENGE),
                       g: Optional[Callable] = None) -> NliEstimate:
    """GN integral at ``f = 0`` over the exact domain (square with ``|f1 + f2| <= B/2``)."""
    if config.domain is not Domain.LOZENGE:
        raise ValueError("gn_numeric_lozenge needs config.domain == lozenge")
    return gn_numeric_domains(fiber, link, spectrum, config, (Domain.LOZENGE,), g)[Domain.LOZENGE]


def gn_numeric(fiber: Fiber, link: Link, spectrum: Spectrum, config: OracleConfig) -> NliEstimate:
    if config.domain is Domain.SQUARE:
        return gn_numeric_square(fiber, link, spectrum, config)
    return gn_numeric_lozenge(fiber, link, spectrum, config)
