"""Quasi-static single-frequency phasor network and droop equilibrium solver.

The network is solved algebraically each step: shunt admittances (loads,
source internals) and Norton current injections (machines, grid, wind) are
assembled into Y V = I and solved for the bus voltages. Wind devices inject a
current aligned with their bus voltage, which makes the solve mildly
nonlinear; a fixed-point iteration on the alignment handles it.

All quantities are per-phase RMS phasors; powers are three-phase watts/vars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .phasor import Phasor, line_phase_convert
from .machines import MachineParams, MachineMode, emf_magnitude

TWO_PI = 2.0 * math.pi


class NetworkError(RuntimeError):
    pass


class SingularNetworkError(NetworkError):
    """The bus system is de-energized or otherwise unsolvable."""


class ConvergenceError(NetworkError):
    def __init__(self, message, residuals=None, iterations=None):
        super().__init__(message)
        self.residuals = residuals
        self.iterations = iterations


@dataclass
class GridSourceParams:
    v_ll_rms: float = 11e3
    f: float = 50.0
    r_internal: float = 1e-5      # ohms
    l_internal: float = 0.04      # henries

    def __post_init__(self):
        if self.f <= 0.0:
            raise ValueError("grid frequency must be > 0")
        for name in ("v_ll_rms", "r_internal", "l_internal"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class RLLoadParams:
    r: float = 121.0              # ohms per phase
    l: float = 0.0                # henries per phase
    connected: bool = True

    def __post_init__(self):
        if self.r < 0.0 or self.l < 0.0:
            raise ValueError("load r and l must be >= 0")
        if self.r == 0.0 and self.l == 0.0:
            raise ValueError("load must have nonzero r or l")


@dataclass
class NetworkModel:
    """Bus system snapshot: switchable load shunts, fixed shunts, injections.

    All the reference circuits collapse to a single 11 kV bus; the matrix
    machinery stays general (n buses, optional branch admittances between
    them) so multi-bus scenarios assemble the same way.
    """

    n_bus: int = 1
    f_hz: float = 50.0
    loads: dict = field(default_factory=dict)        # id -> (RLLoadParams, bus)
    shunts: list = field(default_factory=list)       # (bus, complex admittance)
    sources: list = field(default_factory=list)      # (bus, complex injection)
    wind: list = field(default_factory=list)         # (bus, id_rms, iq_rms)
    branches: list = field(default_factory=list)     # (bus_i, bus_j, complex Y)


def load_admittance(load: RLLoadParams, f: float) -> complex:
    """Shunt admittance 1/(r + j 2 pi f l); a disconnected load contributes 0."""
    if f <= 0.0:
        raise ValueError("frequency must be > 0")
    if not load.connected:
        return 0j
    return 1.0 / complex(load.r, TWO_PI * f * load.l)


def grid_norton(g: GridSourceParams) -> tuple[Phasor, complex]:
    """Norton pair of the grid source; its EMF fixes the angle origin at 0.

    An infinite internal resistance stands for a disconnected grid and yields
    a zero admittance and injection.
    """
    if math.isinf(g.r_internal):
        return Phasor(0.0, 0.0), 0j
    z = complex(g.r_internal, TWO_PI * g.f * g.l_internal)
    if z == 0:
        raise ValueError("grid internal impedance must be nonzero")
    y = 1.0 / z
    inj = line_phase_convert(g.v_ll_rms) * y
    return Phasor(inj.real, inj.imag), y


def wind_injection(id_rms: float, iq_rms: float, v_bus: Phasor) -> Phasor:
    """Converter current (id - j iq) aligned with the bus voltage.

    Injected powers follow as P = 3 |V| id and Q = 3 |V| iq. A de-energized
    bus gets zero current.
    """
    v = v_bus.as_complex()
    vm = abs(v)
    if vm == 0.0:
        return Phasor(0.0, 0.0)
    i = complex(id_rms, -iq_rms) * (v / vm)
    return Phasor(i.real, i.imag)


def solve_single_bus(y: complex, i_source: complex, wind_c: complex = 0j) -> complex:
    """Exact solve of Y V = I + c V/|V| on one bus.

    c = sum of (id - j iq) over the wind devices on the bus. Taking magnitudes
    gives |Y|^2 v^2 - 2 v Re(Y conj(c)) + |c|^2 = |I|^2, a quadratic in
    v = |V|; the phase then follows from e^{j phi} = I / (Y v - c).
    """
    if abs(y) < 1e-30:
        raise SingularNetworkError("bus system is de-energized (zero admittance)")
    if wind_c == 0:
        return i_source / y
    s = abs(i_source)
    if s == 0.0:
        raise SingularNetworkError(
            "bus has no voltage-establishing source for the wind to lock onto")
    a = abs(y) ** 2
    beta = (y * wind_c.conjugate()).real
    disc = beta * beta - a * (abs(wind_c) ** 2 - s * s)
    if disc < 0.0:
        raise ConvergenceError("wind injection exceeds what the network can absorb")
    v_mag = (beta + math.sqrt(disc)) / a
    if v_mag <= 0.0:
        raise SingularNetworkError("bus collapses to zero voltage")
    u = i_source / (y * v_mag - wind_c)
    return v_mag * u / abs(u)


def _assemble(net: NetworkModel):
    n = net.n_bus
    y = np.zeros((n, n), dtype=complex)
    i = np.zeros(n, dtype=complex)
    for load, bus in net.loads.values():
        y[bus, bus] += load_admittance(load, net.f_hz) if load.connected else 0j
    for bus, ys in net.shunts:
        y[bus, bus] += ys
    for a, b, yb in net.branches:
        y[a, a] += yb
        y[b, b] += yb
        y[a, b] -= yb
        y[b, a] -= yb
    for bus, inj in net.sources:
        i[bus] += inj
    return y, i


def solve_bus_voltages(net: NetworkModel, seed=None) -> list[Phasor]:
    """Solve Y V = I for the bus voltage phasors.

    Wind injections are realigned to the solved voltage by fixed-point
    iteration (they are small relative to the network currents, so this
    converges in a few passes). Raises SingularNetworkError when no
    voltage-establishing element is connected.
    """
    y, i_fixed = _assemble(net)
    n = net.n_bus
    scalar = n == 1

    if scalar:
        c = sum(complex(idr, -iqr) for _, idr, iqr in net.wind)
        v0 = solve_single_bus(y[0, 0], i_fixed[0], c)
        return [Phasor(v0.real, v0.imag)]

    def linear_solve(i_vec):
        try:
            v = np.linalg.solve(y, i_vec)
        except np.linalg.LinAlgError as exc:
            raise SingularNetworkError(f"singular admittance matrix: {exc}") from exc
        return list(v)

    if not net.wind:
        return [Phasor(z.real, z.imag) for z in linear_solve(i_fixed)]

    v = list(seed) if seed is not None else linear_solve(i_fixed)
    for _ in range(60):
        i_vec = np.array(i_fixed, dtype=complex)
        for bus, idr, iqr in net.wind:
            vb = v[bus]
            vm = abs(vb)
            if vm > 0.0:
                i_vec[bus] += complex(idr, -iqr) * (vb / vm)
        v_new = linear_solve(i_vec)
        dv = max(abs(a - b) for a, b in zip(v_new, v))
        vref = max(abs(a) for a in v_new)
        v = v_new
        if dv <= 1e-12 * max(vref, 1.0):
            break
    else:
        raise ConvergenceError("wind alignment fixed point did not converge")
    return [Phasor(z.real, z.imag) for z in v]


def apply_switch(net: NetworkModel, target: str, closed: bool) -> NetworkModel:
    """Return a copy of the model with the load's connected flag set (idempotent)."""
    if target not in net.loads:
        raise KeyError(f"unknown switch target {target!r}")
    load, bus = net.loads[target]
    loads = dict(net.loads)
    loads[target] = (replace(load, connected=closed), bus)
    return replace(net, loads=loads)


# ---------------------------------------------------------------------------
# Algebraic droop equilibrium
# ---------------------------------------------------------------------------

@dataclass
class SteadyState:
    f_hz: float
    v_phase: float                 # per-phase RMS volts at the bus
    p: dict                        # device id -> watts (machines, wind, load, grid)
    q: dict                        # device id -> vars
    delta: dict = field(default_factory=dict)   # machine id -> rad vs bus voltage
    ef: dict = field(default_factory=dict)      # machine id -> per-phase RMS EMF
    iterations: int = 0
    residual: float = 0.0

    @property
    def v_ll(self) -> float:
        return self.v_phase * math.sqrt(3.0)


def machine_internal(params: MachineParams, v: float, p: float, q: float):
    """Recover (Ef, delta) behind Xs from terminal conditions at V angle 0.

    I = (P - jQ)/(3V), E = V + jXs I.
    """
    e = complex(v + params.xs * q / (3.0 * v), params.xs * p / (3.0 * v))
    return abs(e), math.atan2(e.imag, e.real)


def _machine_q_fixed_flux(params: MachineParams, flux: float, f_hz: float,
                          v: float, p: float, strict: bool = True) -> float:
    """Reactive output of a fixed-excitation machine at (V, P).

    From P = 3 V Ef sin(d)/Xs and Q = 3 (V Ef cos(d) - V^2)/Xs. While the
    Newton iteration is still far from the solution the required angle can
    exceed pull-out; non-strict mode clamps sin(d) so the residual stays
    finite, and the final solution is re-checked strictly.
    """
    ef = emf_magnitude(TWO_PI * f_hz, flux)
    s = p * params.xs / (3.0 * v * ef)
    if abs(s) > 1.0:
        if strict:
            raise ConvergenceError(
                f"no equilibrium: required sin(delta)={s:.3f} exceeds pull-out")
        s = math.copysign(1.0, s)
    c = math.sqrt(max(1.0 - s * s, 0.0))
    return 3.0 * (v * ef * c - v * v) / params.xs


def _load_pq(loads, v: float, f_hz: float) -> tuple[float, float]:
    p = q = 0.0
    for load in loads:
        if not load.connected:
            continue
        yl = load_admittance(load, f_hz)
        s = 3.0 * v * v * yl.conjugate()
        p += s.real
        q += s.imag
    return p, q


def steady_state_droop_solve(machines, loads, wind=(), grid=None,
                             tol=1e-8, max_iter=200) -> SteadyState:
    """Solve the algebraic steady state of a single-bus droop system.

    The system couples the droop laws of every machine with the active and
    reactive power balances; load powers vary with V^2 (constant impedance)
    and weakly with f. Solved by damped Newton (factor 0.5) on the per-unit
    unknowns among (f, V); pinned quantities (a grid or a speed-reference
    master pins f, a grid or a PI AVR pins V) drop out and the corresponding
    balance is absorbed by that slack device. Serves as the independent
    oracle for time-domain steady states.

    Parameters
    ----------
    machines : list of (id, MachineParams, MachineMode)
    loads : iterable of RLLoadParams (connected flags honoured)
    wind : iterable of (id, id_rms, iq_rms)
    grid : GridSourceParams or None. The reduced model treats a connected
        grid as an ideal source (internal impedance ignored).
    """
    if not machines and grid is None:
        raise ValueError("need at least one machine or a grid")

    s_base = sum(p.s_rated for _, p, _ in machines) or 1.0
    v_base = machines[0][1].v_base if machines else line_phase_convert(grid.v_ll_rms)

    f_pin = v_pin = None
    p_slack = q_slack = None          # device ids absorbing the balances
    if grid is not None:
        f_pin, v_pin = grid.f, line_phase_convert(grid.v_ll_rms)
        p_slack = q_slack = "grid"
    for mid, params, mode in machines:
        if mode.freq == "speed_ref":
            if f_pin is not None:
                raise ValueError(
                    "reduced equilibrium model supports one frequency master; "
                    f"{mid!r} conflicts with the existing one")
            f_pin = mode.omega_ref / TWO_PI
            p_slack = mid
        if mode.avr == "pi":
            if v_pin is not None:
                raise ValueError(
                    "reduced equilibrium model supports one PI voltage "
                    f"regulator; {mid!r} conflicts with the existing one")
            v_pin = mode.v_ref
            q_slack = mid

    f_guess = f_pin
    v_guess = v_pin
    if f_guess is None:
        f_guess = next((m.droop.f0 for _, _, m in machines if m.freq == "droop"), 50.0)
    if v_guess is None:
        droop_v0 = [m.droop.v0 for _, _, m in machines if m.avr == "droop"]
        if droop_v0:
            v_guess = droop_v0[0]
        else:
            # linear network estimate with every EMF at angle zero; good
            # enough to start fixed-excitation configurations inside pull-out
            y_acc = 0j
            i_acc = 0j
            for _, params, _ in machines:
                yx = 1.0 / complex(0.0, params.xs)
                y_acc += yx
                i_acc += emf_magnitude(TWO_PI * f_guess, params.flux_nominal) * yx
            for load in loads:
                if load.connected:
                    y_acc += load_admittance(load, f_guess)
            v_guess = abs(i_acc / y_acc) if abs(y_acc) > 0.0 else v_base

    def evaluate(f_hz, v, strict=False):
        """Per-device powers and the (P, Q) balance residuals at (f, V)."""
        p = {}
        q = {}
        for wid, idr, iqr in wind:
            p[wid] = 3.0 * v * idr
            q[wid] = 3.0 * v * iqr
        p_load, q_load = _load_pq(loads, v, f_hz)
        p["load"] = p_load
        q["load"] = q_load

        for mid, params, mode in machines:
            if mode.freq == "const_power":
                p[mid] = mode.p_mech
            elif mode.freq == "droop":
                d = mode.droop
                p[mid] = mode.p_mech + (d.f0 - f_hz) / d.m * params.s_rated

        p_known = sum(p[mid] for mid, _, _ in machines if mid in p)
        p_wind = sum(p[wid] for wid, _, _ in wind)
        if p_slack is not None:
            p[p_slack] = p_load - p_known - p_wind
            res_p = 0.0
        else:
            res_p = (p_known + p_wind - p_load) / s_base

        for mid, params, mode in machines:
            if mode.avr == "droop":
                d = mode.droop
                q[mid] = mode.q0 + (d.v0 - v) / (d.n * params.v_base) * params.s_rated
            elif mode.avr == "fixed":
                q[mid] = _machine_q_fixed_flux(params, params.flux_nominal,
                                               f_hz, v, p[mid], strict=strict)
        q_known = sum(q[mid] for mid, _, _ in machines if mid in q)
        q_wind = sum(q[wid] for wid, _, _ in wind)
        if q_slack is not None:
            q[q_slack] = q_load - q_known - q_wind
            res_q = 0.0
        else:
            res_q = (q_known + q_wind - q_load) / s_base
        return p, q, res_p, res_q

    # unknowns among (f, V), per-unit scaled
    free = []
    if f_pin is None:
        free.append("f")
    if v_pin is None:
        free.append("v")

    u = []
    if "f" in free:
        u.append(f_guess / 50.0)
    if "v" in free:
        u.append(v_guess / v_base)

    def unpack(u):
        f_hz = f_pin if f_pin is not None else u[free.index("f")] * 50.0
        v = v_pin if v_pin is not None else u[free.index("v")] * v_base
        return f_hz, v

    def residuals(u):
        f_hz, v = unpack(u)
        _, _, rp, rq = evaluate(f_hz, v)
        out = []
        if "f" in free:
            out.append(rp)
        if "v" in free:
            out.append(rq)
        return out

    iters = 0
    res_norm = 0.0
    if free:
        for iters in range(1, max_iter + 1):
            r = residuals(u)
            res_norm = max(abs(x) for x in r)
            if res_norm < tol:
                break
            # finite-difference Jacobian
            m = len(u)
            jac = np.zeros((m, m))
            h = 1e-7
            for j in range(m):
                up = list(u)
                up[j] += h
                rp_ = residuals(up)
                for i in range(m):
                    jac[i, j] = (rp_[i] - r[i]) / h
            try:
                du = np.linalg.solve(jac, np.array(r))
            except np.linalg.LinAlgError as exc:
                raise ConvergenceError(f"singular Jacobian: {exc}",
                                       residuals=r, iterations=iters) from exc
            u = [ui - 0.5 * dui for ui, dui in zip(u, du)]
        else:
            raise ConvergenceError(
                f"droop equilibrium did not converge after {max_iter} iterations "
                f"(residual {res_norm:.3e} pu)", residuals=residuals(u),
                iterations=max_iter)

    f_hz, v = unpack(u)
    p, q, _, _ = evaluate(f_hz, v, strict=True)
    delta = {}
    ef = {}
    for mid, params, _ in machines:
        ef[mid], delta[mid] = machine_internal(params, v, p[mid], q[mid])
    return SteadyState(f_hz=f_hz, v_phase=v, p=p, q=q, delta=delta, ef=ef,
                       iterations=iters, residual=res_norm)
