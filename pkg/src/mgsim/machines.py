"""Classical synchronous generator model with droop governor and AVR.

The machine is an EMF behind synchronous reactance with swing dynamics:

    d(delta)/dt = omega - omega_sys
    (2 H S / w_s) d(omega)/dt = Pm - Pe - D S (omega - w_s)/w_s

where omega is the ELECTRICAL speed in rad/s (mechanical speed is
omega * 2/poles), w_s = 2*pi*f_rated and S the MVA rating. Field voltage is
not modelled separately: the AVR commands a flux target which the rotor flux
follows through a first-order lag.

Droop gains are per-unit on the machine rating: the frequency droop m is in
Hz per pu active power (f = f0 - m*P_pu, with P measured from the nominal
setpoint), the voltage droop n in pu voltage per pu reactive power
(V = V0 - n*Q_pu). Per-unit voltage base is the rated per-phase RMS value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .phasor import Phasor, SQRT2, line_phase_convert

TWO_PI = 2.0 * math.pi


@dataclass
class MachineParams:
    s_rated: float = 1.5e6        # VA
    v_rated_ll: float = 11e3      # line-to-line RMS volts
    f_rated: float = 50.0         # Hz
    poles: int = 4
    xs: float = 88.6              # ohms, synchronous reactance
    h_inertia: float = 1.0        # s, stored energy / rating
    d_damping: float = 50.0   # pu torque per pu speed deviation
    flux_nominal: float = 28.0    # webers
    # controller settings (defaults give < 2 s governor and AVR settling)
    kg: float = 2.0               # governor integral gain, 1/s
    avr_kp: float = 400.0         # Wb per pu voltage error
    avr_ki: float = 900.0         # Wb/s per pu voltage error
    t_field: float = 0.5          # s, field flux lag
    tau_track: float = 1e-3       # s, speed-reference tracking constant

    def __post_init__(self):
        for name in ("s_rated", "v_rated_ll", "f_rated", "xs", "h_inertia"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")
        if self.poles < 2 or self.poles % 2 != 0:
            raise ValueError(f"poles must be even and >= 2, got {self.poles}")

    @property
    def omega_sync(self) -> float:
        """Rated electrical speed, rad/s."""
        return TWO_PI * self.f_rated

    @property
    def v_base(self) -> float:
        """Per-phase RMS voltage base, volts."""
        return line_phase_convert(self.v_rated_ll)


@dataclass
class MachineState:
    delta: float = 0.0            # rad, EMF angle in the network reference frame
    omega: float = TWO_PI * 50.0  # electrical rad/s
    flux: float = 28.0            # webers
    governor_integ: float = 0.0   # watts (mechanical power state in droop mode)
    avr_integ: float = 0.0        # webers

    def mech_speed(self, poles: int) -> float:
        return self.omega * 2.0 / poles


@dataclass(frozen=True)
class DroopParams:
    """Proportional sharing coefficients: f = f0 - m P, V = V0 - n Q."""

    f0: float = 50.0              # Hz, no-load frequency
    m: float = 0.02               # Hz per pu active power
    v0: float = 6350.85           # volts phase RMS, no-load voltage
    n: float = 0.01               # pu volts per pu reactive power


FREQ_MODES = ("const_power", "speed_ref", "droop")
AVR_MODES = ("pi", "fixed", "droop")


@dataclass
class MachineMode:
    """One frequency-side mode and one voltage-side mode per machine.

    p_mech is the fixed mechanical power in const_power mode and the nominal
    active power setpoint in droop mode. v_ref is the PI terminal-voltage
    target; droop AVRs use droop.v0 instead. q0 is the nominal reactive
    setpoint of the voltage droop (VArs).
    """

    freq: str = "const_power"
    avr: str = "pi"
    p_mech: float = 0.0
    omega_ref: float = TWO_PI * 50.0   # electrical rad/s, speed_ref mode
    droop: DroopParams = field(default_factory=DroopParams)
    v_ref: float = 6350.85
    q0: float = 0.0

    def __post_init__(self):
        if self.freq not in FREQ_MODES:
            raise ValueError(f"unknown frequency mode {self.freq!r}")
        if self.avr not in AVR_MODES:
            raise ValueError(f"unknown AVR mode {self.avr!r}")


def sync_speed(f: float, poles: int) -> tuple[float, float]:
    """Synchronous speed (rpm, mechanical rad/s) from Ns = 120 f / P."""
    if f <= 0.0:
        raise ValueError("frequency must be > 0")
    if poles < 2 or poles % 2 != 0:
        raise ValueError(f"poles must be even and >= 2, got {poles}")
    rpm = 120.0 * f / poles
    return rpm, rpm * TWO_PI / 60.0


def emf_magnitude(omega_e: float, flux: float) -> float:
    """Internal EMF, per-phase RMS volts: peak omega_e*flux divided by sqrt(2)."""
    if omega_e <= 0.0:
        raise ValueError("electrical speed must be > 0")
    if flux < 0.0:
        raise ValueError("flux must be >= 0")
    return omega_e * flux / SQRT2


def xs_from_short_circuit(ef_rms: float, isc_rms: float) -> float:
    """Synchronous reactance from a short-circuit test, Xs = Ef / Isc."""
    if isc_rms <= 0.0:
        raise ValueError("short-circuit current must be > 0")
    return ef_rms / isc_rms


def short_circuit_report(params: MachineParams, omega_e: float, flux: float) -> dict:
    """Simulated stator short-circuit test at the given speed and flux.

    Exposes the reactance under both current conventions, since mixing an RMS
    EMF with a peak short-circuit current changes the ratio by sqrt(2).
    """
    ef = emf_magnitude(omega_e, flux)
    isc_rms = ef / params.xs
    isc_peak = isc_rms * SQRT2
    return {
        "ef_rms": ef,
        "isc_rms": isc_rms,
        "isc_peak": isc_peak,
        "xs_rms_over_rms": xs_from_short_circuit(ef, isc_rms),
        "xs_rms_over_peak": xs_from_short_circuit(ef, isc_peak),
    }


def electrical_power_delta(vt: float, ef: float, xs: float, delta: float) -> float:
    """Three-phase power over a reactance: P = 3 Vt Ef sin(delta) / Xs."""
    if xs <= 0.0:
        raise ValueError("xs must be > 0")
    return 3.0 * vt * ef * math.sin(delta) / xs


def speed_droop_ratio(no_load: float, full_load: float) -> float:
    """Prime-mover speed droop (X - Y)/Y for no-load X and full-load Y."""
    if full_load <= 0.0:
        raise ValueError("full-load speed must be > 0")
    return (no_load - full_load) / full_load


def machine_norton(state: MachineState, params: MachineParams) -> tuple[Phasor, complex]:
    """Norton equivalent (current injection, admittance) of the machine.

    The internal source is E = Ef * e^{j delta} behind jXs; the terminal
    current delivered to the bus is injection - Y * V_bus.
    """
    y = 1.0 / complex(0.0, params.xs)
    if state.flux == 0.0:
        return Phasor(0.0, 0.0), y
    ef = emf_magnitude(state.omega, state.flux)
    e = ef * complex(math.cos(state.delta), math.sin(state.delta))
    inj = e * y
    return Phasor(inj.real, inj.imag), y


def governor_target(mode: MachineMode, params: MachineParams, f_hz: float) -> float:
    """Droop governor power target in watts: P = Pnom + (f0 - f)/m (per-unit)."""
    d = mode.droop
    return mode.p_mech + (d.f0 - f_hz) / d.m * params.s_rated


def swing_derivatives(state: MachineState, pe: float, params: MachineParams,
                      mode: MachineMode, omega_sys: float) -> tuple[float, float, float]:
    """Rates (d delta, d omega, d governor_integ) given electrical power pe.

    omega_sys is the electrical speed of the network reference frame. In
    speed_ref mode the swing is replaced by a stiff first-order tracker so the
    state vector stays uniform across modes.
    """
    ddelta = state.omega - omega_sys
    w_s = params.omega_sync

    if mode.freq == "speed_ref":
        domega = (mode.omega_ref - state.omega) / params.tau_track
        return ddelta, domega, 0.0

    if mode.freq == "const_power":
        pm = mode.p_mech
        dgov = 0.0
    else:  # droop governor
        pm = state.governor_integ
        f_hz = state.omega / TWO_PI
        dgov = params.kg * (governor_target(mode, params, f_hz) - pe)

    p_damp = params.d_damping * params.s_rated * (state.omega - w_s) / w_s
    domega = (pm - pe - p_damp) * w_s / (2.0 * params.h_inertia * params.s_rated)
    return ddelta, domega, dgov


def avr_reference(mode: MachineMode, params: MachineParams, q_machine: float) -> float:
    """AVR voltage reference in per-phase RMS volts for the active mode."""
    if mode.avr == "droop":
        d = mode.droop
        q_pu = (q_machine - mode.q0) / params.s_rated
        return d.v0 - d.n * q_pu * params.v_base
    return mode.v_ref


def avr_rates(state: MachineState, v_bus_rms: float, q_machine: float,
              params: MachineParams, mode: MachineMode) -> tuple[float, float]:
    """Rates (d flux, d avr_integ) of the excitation states.

    PI on the per-unit voltage error drives a flux command through the field
    lag t_field. The command is clamped to [0, 2*flux_nominal] and the
    integrator freezes while the clamp is active in its own direction.
    """
    if mode.avr == "fixed":
        return 0.0, 0.0
    v_ref = avr_reference(mode, params, q_machine)
    err = (v_ref - v_bus_rms) / params.v_base
    cmd = params.flux_nominal + params.avr_kp * err + state.avr_integ
    lo, hi = 0.0, 2.0 * params.flux_nominal
    dinteg = params.avr_ki * err
    if cmd > hi:
        cmd = hi
        if err > 0.0:
            dinteg = 0.0
    elif cmd < lo:
        cmd = lo
        if err < 0.0:
            dinteg = 0.0
    dflux = (cmd - state.flux) / params.t_field
    return dflux, dinteg


def avr_update(state: MachineState, v_bus_rms: float, q_machine: float,
               params: MachineParams, mode: MachineMode, dt: float) -> tuple[float, float]:
    """One explicit-Euler AVR update; returns (new flux, new avr_integ)."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    dflux, dinteg = avr_rates(state, v_bus_rms, q_machine, params, mode)
    return state.flux + dt * dflux, state.avr_integ + dt * dinteg
