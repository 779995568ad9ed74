"""Complex phasor arithmetic, reference-frame transforms and three-phase power.

All stored phasors are per-phase RMS quantities at system frequency; peak
values appear only at documented boundaries (peak = RMS * sqrt(2)).
The Clarke transform is amplitude-invariant, so three-phase power always
carries an explicit factor of 3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class Phasor:
    """Per-phase RMS phasor (voltage in volts or current in amps)."""

    re: float
    im: float

    @property
    def mag(self) -> float:
        return math.hypot(self.re, self.im)

    @property
    def angle(self) -> float:
        return math.atan2(self.im, self.re)

    def as_complex(self) -> complex:
        return complex(self.re, self.im)

    @classmethod
    def from_complex(cls, z: complex) -> "Phasor":
        return cls(z.real, z.imag)

    @classmethod
    def from_polar(cls, mag: float, angle: float) -> "Phasor":
        return cls(mag * math.cos(angle), mag * math.sin(angle))


@dataclass(frozen=True)
class ThreePhaseSample:
    """Instantaneous a, b, c values (volts or amps) at one time instant."""

    a: float
    b: float
    c: float


@dataclass(frozen=True)
class PowerReading:
    p_active: float        # watts, three-phase
    q_reactive: float      # vars, three-phase
    v_rms_phase: float
    i_rms_phase: float
    power_factor: float    # |cos phi|, in [0, 1]


def clarke(abc: ThreePhaseSample) -> tuple[float, float]:
    """Amplitude-invariant abc -> alpha/beta.

    alpha = (2a - b - c)/3, beta = (b - c)/sqrt(3); a balanced set with peak A
    maps to an alpha/beta vector of magnitude A.
    """
    alpha = (2.0 * abc.a - abc.b - abc.c) / 3.0
    beta = (abc.b - abc.c) / SQRT3
    return alpha, beta


def inverse_clarke(alpha: float, beta: float) -> ThreePhaseSample:
    """alpha/beta -> abc assuming zero-sequence-free set."""
    a = alpha
    b = -0.5 * alpha + 0.5 * SQRT3 * beta
    c = -0.5 * alpha - 0.5 * SQRT3 * beta
    return ThreePhaseSample(a, b, c)


def park(alpha: float, beta: float, theta: float) -> tuple[float, float]:
    """Rotate stationary alpha/beta into the frame at angle theta (radians)."""
    c, s = math.cos(theta), math.sin(theta)
    d = alpha * c + beta * s
    q = -alpha * s + beta * c
    return d, q


def inverse_park(d: float, q: float, theta: float) -> tuple[float, float]:
    c, s = math.cos(theta), math.sin(theta)
    alpha = d * c - q * s
    beta = d * s + q * c
    return alpha, beta


def complex_power(v: Phasor, i: Phasor) -> PowerReading:
    """Three-phase complex power S = 3 * V * conj(I) of a balanced system.

    Positive P and Q mean flow in the measured direction of the current.
    """
    p = 3.0 * (v.re * i.re + v.im * i.im)
    q = 3.0 * (v.im * i.re - v.re * i.im)
    v_rms = v.mag
    i_rms = i.mag
    s = 3.0 * v_rms * i_rms
    pf = min(abs(p) / s, 1.0) if s > 0.0 else 0.0
    return PowerReading(p, q, v_rms, i_rms, pf)


def line_phase_convert(v_ll_rms: float) -> float:
    """Line-to-line RMS voltage to per-phase RMS (divide by sqrt(3))."""
    if v_ll_rms < 0.0:
        raise ValueError(f"line-to-line voltage must be >= 0, got {v_ll_rms}")
    return v_ll_rms / SQRT3


def peak_to_rms(peak: float) -> float:
    return peak / SQRT2


def rms_to_peak(rms: float) -> float:
    return rms * SQRT2
