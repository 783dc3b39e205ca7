"""Closed-form GN-model estimates of the NLI PSD at the center of a Nyquist-WDM comb.

All estimates share one kernel: the square-domain integral of
``|A / (2 a - j xi)|^2`` evaluated through the asinh identity. The formulas
differ only in which effective attenuation ``a`` and amplitude ``A`` they feed
into it.

The effective parameters match the value and first derivative at ``xi = 0`` of
the exact per-link field kernel. They are computed in a normalized form,
``E1(u) = (1 - e^-u)/u`` and ``d2(u) = D(u)/u^2`` with ``u = 2 alpha L``, so that
the lossless limit is reached continuously instead of through 0/0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .model import Fiber, Link, Method, NliEstimate, Spectrum

U_SWITCH = 1e-3
COND1_THRESHOLD = 2.0
COND2_THRESHOLD = 0.3

# D(u) = sum_{n>=2} (-1)^n (n-1) u^n / n!
_D_SERIES = tuple((-1) ** n * (n - 1) / math.factorial(n) for n in range(2, 11))


@dataclass(frozen=True)
class EffectiveParams:
    alpha_eq: float
    a_eq: float


@dataclass(frozen=True)
class ValidityReport:
    """Diagnostics for the coherent (generalized) formula.

    cond1: only the central array-factor peak lies in the integration domain,
    ``|pi L beta2 B^2| < 2``. cond2: side peaks are negligible, ``alpha L`` small
    (fixed threshold ``COND2_THRESHOLD``; the raw value is always reported).
    """

    cond1_lhs: float
    cond1_holds: bool
    cond2_lhs: float
    cond2_holds: bool
    exp_neg_2aL: float


def taylor_denominator(u: float) -> float:
    """``1 - e^-u - u e^-u`` for ``u >= 0`` without cancellation."""
    if u < 0.0:
        raise ValueError(f"u must be >= 0, got {u!r}")
    if u < U_SWITCH:
        return u * u * _d2_series(u)
    return -math.expm1(-u) - u * math.exp(-u)


def _d2_series(u: float) -> float:
    acc = 0.0
    for c in reversed(_D_SERIES):
        acc = acc * u + c
    return acc


def _d2(u: float) -> float:
    """D(u)/u^2, equal to 1/2 at u = 0."""
    if u < U_SWITCH:
        return _d2_series(u)
    return taylor_denominator(u) / (u * u)


def _e1(u: float) -> float:
    """(1 - e^-u)/u, equal to 1 at u = 0."""
    if u == 0.0:
        return 1.0
    return -math.expm1(-u) / u


def eff_params_multi(fiber: Fiber, span_length: float, n_spans: int) -> EffectiveParams:
    """Effective (alpha_eq, A_eq) for ``n_spans`` coherently accumulating spans."""
    if span_length <= 0.0:
        raise ValueError(f"span_length must be > 0, got {span_length!r}")
    if n_spans < 1:
        raise ValueError(f"n_spans must be >= 1, got {n_spans!r}")
    u = 2.0 * fiber.alpha * span_length
    e1 = _e1(u)
    # full denominator divided by u^2
    den = _d2(u) + 0.5 * (n_spans - 1) * e1
    return EffectiveParams(alpha_eq=e1 / (2.0 * span_length * den), a_eq=n_spans * e1 * e1 / den)


def eff_params_single(fiber: Fiber, span_length: float) -> EffectiveParams:
    return eff_params_multi(fiber, span_length, 1)


def asinh_kernel(a_eq: float, alpha_eq: float, fiber: Fiber, spectrum: Spectrum) -> float:
    """``A^2/(4 pi beta2 a) * asinh(pi^2 beta2 B^2 / (4 a))``.

    Approximates the integral of ``|A/(2a - j xi)|^2`` over the square
    ``|f1|, |f2| <= B/2``. Multiply by ``16/27 gamma^2 G^3`` to get a PSD.
    """
    if not alpha_eq > 0.0:
        raise ValueError(f"alpha_eq must be > 0, got {alpha_eq!r}")
    arg = math.pi ** 2 * fiber.beta2 * spectrum.b_wdm ** 2 / (4.0 * alpha_eq)
    return a_eq * a_eq / (4.0 * math.pi * fiber.beta2 * alpha_eq) * math.asinh(arg)


def _prefactor(fiber: Fiber, spectrum: Spectrum) -> float:
    return 16.0 / 27.0 * fiber.gamma ** 2 * spectrum.g_wdm ** 3


def validity_report(fiber: Fiber, link: Link, spectrum: Spectrum) -> ValidityReport:
    L = link.span_length
    cond1 = abs(math.pi * L * fiber.beta2 * spectrum.b_wdm ** 2)
    cond2 = fiber.alpha * L
    return ValidityReport(
        cond1_lhs=cond1,
        cond1_holds=cond1 < COND1_THRESHOLD,
        cond2_lhs=cond2,
        cond2_holds=cond2 < COND2_THRESHOLD,
        exp_neg_2aL=math.exp(-2.0 * cond2),
    )


def cff_high_loss(fiber: Fiber, span_length: float, spectrum: Spectrum) -> NliEstimate:
    """Single-span estimate valid when ``exp(-2 alpha L) << 1``.

    Diverges for a lossless fiber, so ``alpha == 0`` is rejected; use
    :func:`cff_single_span` there.
    """
    if fiber.alpha == 0.0:
        raise ValueError("high-loss formula is undefined for alpha = 0; use cff_single_span")
    psd = _prefactor(fiber, spectrum) * asinh_kernel(1.0, fiber.alpha, fiber, spectrum)
    return NliEstimate(psd, Method.HIGH_LOSS_8, validity_report(fiber, Link(span_length), spectrum))


def cff_single_span(fiber: Fiber, span_length: float, spectrum: Spectrum) -> NliEstimate:
    """Single-span estimate valid at any span loss, including ``alpha == 0``."""
    p = eff_params_single(fiber, span_length)
    psd = _prefactor(fiber, spectrum) * asinh_kernel(p.a_eq, p.alpha_eq, fiber, spectrum)
    return NliEstimate(psd, Method.SINGLE_SPAN_20, validity_report(fiber, Link(span_length), spectrum))


def cff_generalized(fiber: Fiber, link: Link, spectrum: Spectrum) -> NliEstimate:
    """Coherent multi-span estimate, accurate when the array-factor side peaks
    are excluded or suppressed (see :class:`ValidityReport`)."""
    p = eff_params_multi(fiber, link.span_length, link.num_spans)
    psd = _prefactor(fiber, spectrum) * asinh_kernel(p.a_eq, p.alpha_eq, fiber, spectrum)
    return NliEstimate(psd, Method.GENERALIZED_28, validity_report(fiber, link, spectrum))


def cff_incoherent(fiber: Fiber, link: Link, spectrum: Spectrum) -> NliEstimate:
    """Per-span NLI powers summed without interference; a lower bound."""
    single = cff_single_span(fiber, link.span_length, spectrum)
    return NliEstimate(link.num_spans * single.psd, Method.INCOHERENT_29,
                       validity_report(fiber, link, spectrum))


def cff_combined(fiber: Fiber, link: Link, spectrum: Spectrum) -> NliEstimate:
    """Larger of the incoherent and coherent estimates. Ties go to the coherent one."""
    inc = cff_incoherent(fiber, link, spectrum)
    gen = cff_generalized(fiber, link, spectrum)
    winner = inc if inc.psd > gen.psd else gen
    return NliEstimate(winner.psd, Method.COMBINED_30, gen.validity, branch=winner.method)
