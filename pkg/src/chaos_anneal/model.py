"""Parameter ingestion and unit normalization.

All laboratory frequencies are specified as nu = omega / 2 pi (Hz), the
way instrument settings are usually quoted.  Conversion to angular units
happens exactly once, inside this module; everything downstream works in
dimensionless units where the mechanical angular frequency is 1.

Sign convention: the detuning ``delta`` enters the cavity drift as
``+ i * delta * a``.  It is a mandatory input; no silent default exists.
"""

import math
from dataclasses import dataclass, replace

from .errors import MisuseError, ParameterError

HBAR = 1.054571817e-34  # J s
K_B = 1.380649e-23  # J / K

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PhysicalParams:
    """Laboratory parameter set.

    Frequencies are nu = omega / 2 pi in Hz.  ``detuning_hz`` may take
    either sign; all other rates must be positive.  The mechanical
    damping follows from the quality factor, gamma = omega_m / Q.

    Thermal occupations may be given either through ``bath_temperature``
    (kelvin, converted per mode via the Bose-Einstein formula) or as
    explicit ``n_bar_a`` / ``n_bar_b`` overrides, but not both for the
    same mode.
    """

    omega_m_hz: float
    quality_factor: float
    input_power_w: float
    kerr_hz: float
    kappa_hz: float
    kappa_in_hz: float
    drive_frequency_hz: float
    coupling_hz: float
    detuning_hz: float
    bath_temperature_k: float | None = None
    n_bar_a: float | None = None
    n_bar_b: float | None = None

    def __post_init__(self):
        for name in ("omega_m_hz", "quality_factor", "kappa_hz", "kappa_in_hz",
                     "drive_frequency_hz"):
            if not getattr(self, name) > 0.0:
                raise ParameterError(f"{name} must be strictly positive")
        if self.input_power_w < 0.0:
            raise ParameterError("input_power_w must be non-negative")
        for name in ("kerr_hz", "coupling_hz"):
            if getattr(self, name) < 0.0:
                raise ParameterError(f"{name} must be non-negative")
        if self.bath_temperature_k is not None:
            if self.bath_temperature_k < 0.0:
                raise ParameterError("bath_temperature_k must be non-negative")
            if self.n_bar_a is not None or self.n_bar_b is not None:
                raise ParameterError(
                    "give either bath_temperature_k or explicit n_bar "
                    "occupations, not both")
        for name in ("n_bar_a", "n_bar_b"):
            value = getattr(self, name)
            if value is not None and value < 0.0:
                raise ParameterError(f"{name} must be non-negative")


@dataclass(frozen=True)
class DimensionlessParams:
    """Model rates in units of the mechanical frequency (omega_m = 1)."""

    delta: float
    kappa: float
    gamma: float
    coupling: float
    kerr: float
    drive: float
    n_bar_a: float = 0.0
    n_bar_b: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0.0 or not self.gamma > 0.0:
            raise ParameterError("kappa and gamma must be strictly positive")
        for name in ("coupling", "kerr", "drive", "n_bar_a", "n_bar_b"):
            if getattr(self, name) < 0.0:
                raise ParameterError(f"{name} must be non-negative")


@dataclass(frozen=True)
class ScalingTransform:
    """Amplitude rescaling (g, E, chi) -> (s g, E / s, s^2 chi).

    Leaves the products C1 = g E and C2 = chi / g^2 invariant, so the
    deterministic dynamics of the rescaled amplitudes are unchanged
    while the relative weight of quantum noise grows with s.
    """

    scale: float

    def __post_init__(self):
        if not self.scale > 0.0:
            raise ParameterError("scale must be strictly positive")


def drive_amplitude_from_power(power_w, kappa_in, omega_d):
    """Drive amplitude E = sqrt(2 kappa_in P / (hbar omega_d)).

    ``kappa_in`` and ``omega_d`` are angular rates (rad/s); the result
    is an angular rate as well.  ``power_w`` may be zero (drive off).
    """
    if power_w < 0.0:
        raise ParameterError("power must be non-negative")
    if not kappa_in > 0.0 or not omega_d > 0.0:
        raise ParameterError("kappa_in and omega_d must be strictly positive")
    return math.sqrt(2.0 * kappa_in * power_w / (HBAR * omega_d))


def thermal_occupation(omega, temperature_k):
    """Bose-Einstein occupation n = 1 / (exp(hbar omega / kB T) - 1).

    ``omega`` is angular (rad/s).  T = 0 returns exactly 0.
    """
    if not omega > 0.0:
        raise ParameterError("omega must be strictly positive")
    if temperature_k < 0.0:
        raise ParameterError("temperature must be non-negative")
    if temperature_k == 0.0:
        return 0.0
    x = HBAR * omega / (K_B * temperature_k)
    if x > 700.0:  # exp would overflow; occupation is numerically zero
        return 0.0
    return 1.0 / math.expm1(x)


def to_dimensionless(p: PhysicalParams) -> DimensionlessParams:
    """Normalize a physical parameter set to units where omega_m = 1.

    Every rate is divided by the angular mechanical frequency.  The
    drive amplitude is first computed from the input power, and thermal
    occupations from the bath temperature when one is given (the cavity
    occupation uses the optical drive frequency, the mechanical one the
    mechanical frequency).
    """
    omega_m = TWO_PI * p.omega_m_hz
    drive = drive_amplitude_from_power(
        p.input_power_w, TWO_PI * p.kappa_in_hz, TWO_PI * p.drive_frequency_hz)

    if p.bath_temperature_k is not None:
        n_a = thermal_occupation(TWO_PI * p.drive_frequency_hz, p.bath_temperature_k)
        n_b = thermal_occupation(omega_m, p.bath_temperature_k)
    else:
        n_a = p.n_bar_a if p.n_bar_a is not None else 0.0
        n_b = p.n_bar_b if p.n_bar_b is not None else 0.0

    return DimensionlessParams(
        delta=p.detuning_hz / p.omega_m_hz,
        kappa=p.kappa_hz / p.omega_m_hz,
        gamma=1.0 / p.quality_factor,
        coupling=p.coupling_hz / p.omega_m_hz,
        kerr=p.kerr_hz / p.omega_m_hz,
        drive=drive / omega_m,
        n_bar_a=n_a,
        n_bar_b=n_b,
    )


def apply_scaling(d: DimensionlessParams, s: ScalingTransform) -> DimensionlessParams:
    """Rescale (g, E, chi) -> (s g, E / s, s^2 chi); all other rates fixed."""
    if d.coupling == 0.0:
        raise MisuseError("scaling is undefined for zero coupling")
    return replace(
        d,
        coupling=s.scale * d.coupling,
        drive=d.drive / s.scale,
        kerr=s.scale ** 2 * d.kerr,
    )


def scaling_invariants(d: DimensionlessParams) -> tuple[float, float]:
    """The renormalized drive C1 = g E and Kerr weight C2 = chi / g^2."""
    if d.coupling == 0.0:
        raise MisuseError("invariants are undefined for zero coupling")
    return d.coupling * d.drive, d.kerr / d.coupling ** 2
