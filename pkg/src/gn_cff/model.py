"""Physical parameter types and engineering-unit ingestion.

Everything inside the package is strict SI (m, s, Hz, W). Engineering units
(dB/km, ps^2/km, 1/(W km), THz, W/THz) are only accepted by the ``*_from_*``
constructors below.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from .closed_form import ValidityReport
    from .quadrature import QuadResult

DB_PER_NEPER_FIELD = 20.0 / math.log(10.0)
PS2_PER_KM_TO_S2_PER_M = 1e-24 / 1e3
THZ = 1e12


class Method(str, enum.Enum):
    HIGH_LOSS_8 = "HighLoss8"
    SINGLE_SPAN_20 = "SingleSpan20"
    GENERALIZED_28 = "Generalized28"
    INCOHERENT_29 = "Incoherent29"
    COMBINED_30 = "Combined30"
    NUMERIC_SQUARE = "NumericSquare"
    NUMERIC_LOZENGE = "NumericLozenge"


@dataclass(frozen=True)
class Fiber:
    """Fiber with field attenuation ``alpha`` [1/m] (power ~ exp(-2 alpha z)),
    dispersion magnitude ``beta2`` [s^2/m] and nonlinearity ``gamma`` [1/(W m)].

    ``beta2_sign`` keeps the sign the user supplied; no formula reads it.
    """

    alpha: float
    beta2: float
    gamma: float
    beta2_sign: int = -1

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha >= 0.0):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha!r}")
        if not (math.isfinite(self.beta2) and self.beta2 > 0.0):
            raise ValueError(f"beta2 magnitude must be finite and > 0, got {self.beta2!r}")
        if not (math.isfinite(self.gamma) and self.gamma > 0.0):
            raise ValueError(f"gamma must be finite and > 0, got {self.gamma!r}")
        if self.beta2_sign not in (-1, 1):
            raise ValueError(f"beta2_sign must be +1 or -1, got {self.beta2_sign!r}")

    @property
    def loss_db_per_km(self) -> float:
        return self.alpha * DB_PER_NEPER_FIELD * 1e3

    @property
    def beta2_ps2_per_km(self) -> float:
        """Signed dispersion in ps^2/km, as originally supplied."""
        return self.beta2_sign * self.beta2 / PS2_PER_KM_TO_S2_PER_M

    @property
    def gamma_per_w_km(self) -> float:
        return self.gamma * 1e3


@dataclass(frozen=True)
class Link:
    """``num_spans`` identical spans of ``span_length`` [m], each followed by an
    amplifier that exactly restores the span loss."""

    span_length: float
    num_spans: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.span_length) and self.span_length > 0.0):
            raise ValueError(f"span_length must be finite and > 0, got {self.span_length!r}")
        if isinstance(self.num_spans, bool) or int(self.num_spans) != self.num_spans or self.num_spans < 1:
            raise ValueError(f"num_spans must be an integer >= 1, got {self.num_spans!r}")
        object.__setattr__(self, "num_spans", int(self.num_spans))


@dataclass(frozen=True)
class Spectrum:
    """Rectangular Nyquist-WDM comb: total bandwidth ``b_wdm`` [Hz] and flat
    PSD ``g_wdm`` [W/Hz]."""

    b_wdm: float
    g_wdm: float

    def __post_init__(self):
        if not (math.isfinite(self.b_wdm) and self.b_wdm > 0.0):
            raise ValueError(f"b_wdm must be finite and > 0, got {self.b_wdm!r}")
        if not (math.isfinite(self.g_wdm) and self.g_wdm > 0.0):
            raise ValueError(f"g_wdm must be finite and > 0, got {self.g_wdm!r}")


@dataclass(frozen=True)
class NliEstimate:
    """NLI PSD at the comb center together with how it was obtained.

    ``branch`` is only set for the combined (max-rule) estimate and names the
    method that won. ``quad`` carries convergence data for numerical results.
    """

    psd: float
    method: Method
    validity: "ValidityReport"
    branch: Optional[Method] = None
    quad: Optional["QuadResult"] = None


def fiber_from_engineering(loss_db_per_km: float, beta2_ps2_per_km: float,
                           gamma_per_w_km: float) -> Fiber:
    """Build a :class:`Fiber` from dB/km, ps^2/km (either sign) and 1/(W km)."""
    if not math.isfinite(loss_db_per_km) or loss_db_per_km < 0.0:
        raise ValueError(f"loss_db_per_km must be >= 0, got {loss_db_per_km!r}")
    if not math.isfinite(beta2_ps2_per_km) or beta2_ps2_per_km == 0.0:
        raise ValueError(f"beta2_ps2_per_km must be finite and nonzero, got {beta2_ps2_per_km!r}")
    if not math.isfinite(gamma_per_w_km) or gamma_per_w_km <= 0.0:
        raise ValueError(f"gamma_per_w_km must be > 0, got {gamma_per_w_km!r}")
    return Fiber(
        alpha=loss_db_per_km / DB_PER_NEPER_FIELD / 1e3,
        beta2=abs(beta2_ps2_per_km) * PS2_PER_KM_TO_S2_PER_M,
        gamma=gamma_per_w_km / 1e3,
        beta2_sign=1 if beta2_ps2_per_km > 0 else -1,
    )


def link_from_engineering(span_km: float, num_spans: int = 1) -> Link:
    return Link(span_length=span_km * 1e3, num_spans=num_spans)


def spectrum_from_engineering(bandwidth_thz: float, psd_w_per_thz: float) -> Spectrum:
    return Spectrum(b_wdm=bandwidth_thz * THZ, g_wdm=psd_w_per_thz / THZ)


def span_loss_db(fiber: Fiber, link: Link) -> float:
    """Power loss of one span in dB."""
    return fiber.alpha * link.span_length * DB_PER_NEPER_FIELD
