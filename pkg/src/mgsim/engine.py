"""Top-level simulation loop, steady-state extraction and parameter sweeps.

Each integrator stage evaluates the algebraic network at the current machine
states (quasi-static phasor coupling): machine EMFs become Norton injections,
the bus is solved, and the resulting per-machine electrical powers drive the
swing, governor and AVR rates. Scheduled events land exactly on integration
boundaries. A single run is strictly sequential and deterministic.
"""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import replace

from .integrators import integrate
from .machines import MachineState, avr_rates, swing_derivatives
from .network import (
    NetworkError,
    grid_norton,
    load_admittance,
    solve_single_bus,
    steady_state_droop_solve,
)
from .output import TimeSeries
from .phasor import SQRT2, SQRT3
from .scenario import Scenario

TWO_PI = 2.0 * math.pi
_NSTATE = 5   # per machine: delta, omega, flux, governor_integ, avr_integ


def _wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi] for reporting."""
    w = math.remainder(a, TWO_PI)
    return w if w != -math.pi else math.pi


class _Runtime:
    """Private mutable copy of a scenario while a run is in progress."""

    def __init__(self, scn: Scenario):
        self.scn = scn
        self.machines = scn.machines
        self.loads = scn.loads
        self.winds = scn.winds
        self.grid = scn.grid
        if scn.grid is not None:
            inj, y = grid_norton(scn.grid)
            self.grid_inj = inj.as_complex()
            self.grid_y = y
        else:
            self.grid_inj = 0j
            self.grid_y = 0j
        self.y_xs = [1.0 / complex(0.0, m.params.xs) for m in self.machines]
        self.master = next((i for i, m in enumerate(self.machines)
                            if m.mode.freq == "speed_ref"), None)
        self.h_weight = [m.params.h_inertia * m.params.s_rated for m in self.machines]
        self.h_total = sum(self.h_weight)
        # scratch state objects reused by the derivative evaluation
        self.scratch = [MachineState() for _ in self.machines]

    def initial_state(self):
        x = []
        if self.grid is not None:
            w0 = TWO_PI * self.grid.f
        elif self.master is not None:
            w0 = self.machines[self.master].mode.omega_ref
        else:
            w0 = TWO_PI * self.machines[0].mode.droop.f0 if self.machines else TWO_PI * 50.0
        for m in self.machines:
            gov0 = m.mode.p_mech if m.mode.freq == "droop" else 0.0
            x.extend([0.0, w0, m.flux0, gov0, 0.0])
        return x

    def omega_sys(self, x):
        if self.grid is not None:
            return TWO_PI * self.grid.f
        if self.master is not None:
            return x[_NSTATE * self.master + 1]
        acc = sum(w * x[_NSTATE * i + 1] for i, w in enumerate(self.h_weight))
        return acc / self.h_total

    def solve(self, t, x):
        """Network solution at state x: returns (V, omega_sys, list of machine
        (E, I, pe, q), wind ids)."""
        w_sys = self.omega_sys(x)
        f_net = w_sys / TWO_PI
        y = self.grid_y
        i_s = self.grid_inj
        emfs = []
        for i, m in enumerate(self.machines):
            base = _NSTATE * i
            omega = x[base + 1]
            flux = x[base + 2]
            ef = omega * flux / SQRT2
            e = ef * complex(math.cos(x[base]), math.sin(x[base]))
            yx = self.y_xs[i]
            y += yx
            i_s += e * yx
            emfs.append(e)
        for load in self.loads.values():
            if load.connected:
                y += load_admittance(load, f_net)
        wind_ids = [w.id_at(t) for w in self.winds]
        c = 0j
        for w, idr in zip(self.winds, wind_ids):
            c += complex(idr, -w.iq_rms)
        try:
            v = solve_single_bus(y, i_s, c)
        except NetworkError as exc:
            raise type(exc)(f"{exc} (at t={t:.9g} s)") from exc
        mach = []
        for i, e in enumerate(emfs):
            cur = (e - v) * self.y_xs[i]
            s = 3.0 * v * cur.conjugate()
            mach.append((e, cur, s.real, s.imag))
        return v, w_sys, mach, wind_ids

    def deriv(self, t, x):
        v, w_sys, mach, _ = self.solve(t, x)
        vmag = abs(v)
        rates = []
        for i, m in enumerate(self.machines):
            base = _NSTATE * i
            st = self.scratch[i]
            st.delta = x[base]
            st.omega = x[base + 1]
            st.flux = x[base + 2]
            st.governor_integ = x[base + 3]
            st.avr_integ = x[base + 4]
            _, _, pe, q = mach[i]
            ddelta, domega, dgov = swing_derivatives(st, pe, m.params, m.mode, w_sys)
            dflux, davr = avr_rates(st, vmag, q, m.params, m.mode)
            rates.extend([ddelta, domega, dflux, dgov, davr])
        return rates

    def apply_event(self, ev):
        if ev.action in ("close_switch", "open_switch"):
            closed = ev.action == "close_switch"
            self.loads[ev.target] = replace(self.loads[ev.target], connected=closed)
        elif ev.action == "set_mech_power":
            self.scn.machine(ev.target).mode.p_mech = ev.value
        elif ev.action == "set_iq":
            self.scn.wind(ev.target).iq_rms = ev.value
        elif ev.action == "set_id":
            w = self.scn.wind(ev.target)
            w.series = None
            w.id_rms = ev.value
        else:
            raise ValueError(f"unknown event action {ev.action!r}")

    def measure(self, t, x):
        """One output record at (t, x)."""
        v, w_sys, mach, wind_ids = self.solve(t, x)
        vmag = abs(v)
        vang = math.atan2(v.imag, v.real)
        f_net = w_sys / TWO_PI
        row = [t, w_sys / TWO_PI, vmag * SQRT3]
        for i, m in enumerate(self.machines):
            base = _NSTATE * i
            _, cur, pe, q = mach[i]
            row.extend([
                pe, q, abs(cur),
                _wrap_angle(x[base] - vang),
                x[base + 1] * 2.0 / m.params.poles,
                x[base + 2],
            ])
        if self.grid is not None:
            cur = self.grid_inj - self.grid_y * v
            s = 3.0 * v * cur.conjugate()
            row.extend([s.real, s.imag, abs(cur)])
        for load in self.loads.values():
            yl = load_admittance(load, f_net) if load.connected else 0j
            cur = yl * v
            s = 3.0 * v * cur.conjugate()
            row.extend([s.real, s.imag, abs(cur)])
        for w, idr in zip(self.winds, wind_ids):
            if vmag > 0.0:
                cur = complex(idr, -w.iq_rms) * (v / vmag)
            else:
                cur = 0j
            s = 3.0 * v * cur.conjugate()
            row.extend([s.real, s.imag, abs(cur)])
        return row


def _columns(scn: Scenario):
    cols = ["t", "f_hz", "v_ll_rms"]
    kinds = []
    for m in scn.machines:
        cols.extend([f"p_{m.id}", f"q_{m.id}", f"i_{m.id}",
                     f"delta_{m.id}", f"speed_{m.id}", f"flux_{m.id}"])
        kinds.append(f"{m.id}=machine")
    if scn.grid is not None:
        cols.extend(["p_grid", "q_grid", "i_grid"])
        kinds.append("grid=grid")
    for lid in scn.loads:
        cols.extend([f"p_{lid}", f"q_{lid}", f"i_{lid}"])
        kinds.append(f"{lid}=load")
    for w in scn.winds:
        cols.extend([f"p_{w.id}", f"q_{w.id}", f"i_{w.id}"])
        kinds.append(f"{w.id}=wind")
    return cols, ",".join(kinds)


def run(scenario: Scenario) -> TimeSeries:
    """Simulate a scenario and return the sampled time series.

    The record interval is sim.output_interval; events are applied exactly at
    their times between integration segments. Integrator step-underflow and
    singular-network errors propagate annotated with the offending time.
    """
    rt = _Runtime(copy.deepcopy(scenario))
    sim = rt.scn.sim
    t_end = sim.t_end

    cols, kinds = _columns(rt.scn)
    ts = TimeSeries(columns=cols, meta={
        "format": "mgsim-csv v1",
        "scenario_hash": hashlib.sha256(scenario.source_text.encode()).hexdigest(),
        "dt": repr(sim.integrator.dt),
        "method": sim.integrator.method,
        "output_interval": repr(sim.output_interval),
        "t_end": repr(t_end),
        "devices": kinds,
    })

    pending = [ev for ev in rt.scn.events if ev.time > 1e-12]
    for ev in rt.scn.events:
        if ev.time <= 1e-12:
            rt.apply_event(ev)

    n_out = int(math.floor(t_end / sim.output_interval + 1e-9))
    out_times = [k * sim.output_interval for k in range(1, n_out + 1)]
    if not out_times or out_times[-1] < t_end - 1e-9 * t_end:
        out_times.append(t_end)

    # merge event times into the boundary grid (events win near-coincidences)
    bounds = sorted(set(out_times))
    for ev in pending:
        if all(abs(ev.time - b) > 1e-9 for b in bounds):
            bounds.append(ev.time)
    bounds.sort()

    x0 = rt.initial_state()
    ts.append(rt.measure(0.0, x0))
    next_out = 0     # index into out_times

    def on_boundary(t, x):
        nonlocal next_out
        if next_out < len(out_times) and t >= out_times[next_out] - 1e-9:
            ts.append(rt.measure(t, x))
            while next_out < len(out_times) and out_times[next_out] <= t + 1e-9:
                next_out += 1
        while pending and pending[0].time <= t + 1e-9:
            rt.apply_event(pending.pop(0))
        return None

    traj = integrate(rt.deriv, x0, 0.0, t_end, sim.integrator,
                     events=bounds, on_boundary=on_boundary)
    if ts.rows[-1][0] < t_end - 1e-9:
        ts.append(rt.measure(t_end, traj.states[-1]))
    ts.validate()
    return ts


def steady_state_of(ts: TimeSeries, fraction: float = 0.1) -> dict:
    """Mean of every column over the final fraction of the run."""
    t = ts.times
    t_min = t[-1] - fraction * (t[-1] - t[0])
    return {c: ts.window_mean(c, t_min) for c in ts.columns}


def equilibrium(scenario: Scenario, at_time=None):
    """Algebraic steady state of the scenario via the droop equilibrium solver.

    Events with time <= at_time (default: t_end, i.e. the final configuration)
    are applied first, and series-driven wind currents are evaluated at
    at_time. Returns a network.SteadyState.
    """
    scn = copy.deepcopy(scenario)
    t = scn.sim.t_end if at_time is None else at_time
    rt = _Runtime(scn)
    for ev in scn.events:
        if ev.time <= t + 1e-12:
            rt.apply_event(ev)
    machines = [(m.id, m.params, m.mode) for m in scn.machines]
    loads = [ld for ld in rt.loads.values()]
    wind = [(w.id, w.id_at(t), w.iq_rms) for w in scn.winds]
    return steady_state_droop_solve(machines, loads, wind=wind, grid=scn.grid)


def set_param(scenario: Scenario, path: str, value: float):
    """Set a numeric scenario field addressed as 'kind.id.key' (or 'grid.key').

    Raises ValueError for paths that do not resolve.
    """
    parts = path.split(".")
    err = ValueError(f"unresolvable parameter path {path!r}")

    if len(parts) == 2 and parts[0] == "grid":
        if scenario.grid is None:
            raise err
        key = {"v_ll": "v_ll_rms", "f": "f", "r": "r_internal", "l": "l_internal"}.get(parts[1])
        if key is None:
            raise err
        scenario.grid = replace(scenario.grid, **{key: value})
        return
    if len(parts) == 2 and parts[0] == "sim":
        if parts[1] == "t_end":
            scenario.sim.t_end = value
            return
        if parts[1] == "dt":
            scenario.sim.integrator = replace(scenario.sim.integrator, dt=value)
            return
        if parts[1] == "output_interval":
            scenario.sim.output_interval = value
            return
        raise err
    if len(parts) != 3:
        raise err
    kind, ident, key = parts

    if kind == "load":
        if ident not in scenario.loads or key not in ("r", "l"):
            raise err
        scenario.loads[ident] = replace(scenario.loads[ident], **{key: value})
        return
    if kind == "wind":
        try:
            w = scenario.wind(ident)
        except KeyError:
            raise err from None
        if key == "id_rms":
            w.id_rms = value
        elif key == "iq_rms":
            w.iq_rms = value
        elif key == "gain" and w.mapping is not None:
            w.mapping = replace(w.mapping, gain=value)
        else:
            raise err
        return
    if kind == "machine":
        try:
            m = scenario.machine(ident)
        except KeyError:
            raise err from None
        if key == "p_mech":
            m.mode.p_mech = value
        elif key == "q0":
            m.mode.q0 = value
        elif key == "m_droop":
            m.mode.droop = replace(m.mode.droop, m=value)
        elif key == "n_droop":
            m.mode.droop = replace(m.mode.droop, n=value)
        elif key == "v0":
            m.mode.droop = replace(m.mode.droop, v0=value)
            m.mode.v_ref = value
        elif key == "f0":
            m.mode.droop = replace(m.mode.droop, f0=value)
            m.mode.omega_ref = TWO_PI * value
            m.params.f_rated = value
        elif key == "flux0":
            m.flux0 = value
            m.params.flux_nominal = value
        elif key in ("xs", "h_inertia", "d_damping", "s_rated", "kg",
                     "avr_kp", "avr_ki", "t_field"):
            setattr(m.params, key, value)
        elif key == "h":
            m.params.h_inertia = value
        elif key == "d":
            m.params.d_damping = value
        else:
            raise err
        return
    raise err


def sweep(base: Scenario, param_path: str, values, dynamic: bool = False):
    """Evaluate the steady state at each parameter value, in input order.

    By default each point solves the algebraic droop equilibrium; with
    dynamic=True each point is a full time-domain run and steady values come
    from the final 10 percent of samples. Returns a list of row dicts keyed
    by the swept value.
    """
    rows = []
    for value in values:
        scn = copy.deepcopy(base)
        set_param(scn, param_path, value)
        if dynamic:
            ts = run(scn)
            st = steady_state_of(ts)
            row = {"value": value, "f_hz": st["f_hz"],
                   "v_phase": st["v_ll_rms"] / SQRT3}
            for m in scn.machines:
                row[f"p_{m.id}"] = st[f"p_{m.id}"]
                row[f"q_{m.id}"] = st[f"q_{m.id}"]
                row[f"delta_{m.id}"] = st[f"delta_{m.id}"]
                row[f"i_{m.id}"] = st[f"i_{m.id}"]
            for lid in scn.loads:
                row[f"p_{lid}"] = st[f"p_{lid}"]
                row[f"q_{lid}"] = st[f"q_{lid}"]
                row[f"i_{lid}"] = st[f"i_{lid}"]
            row["p_load"] = sum(st[f"p_{lid}"] for lid in scn.loads)
            row["q_load"] = sum(st[f"q_{lid}"] for lid in scn.loads)
            row["i_load"] = math.hypot(row["p_load"], row["q_load"]) / (
                3.0 * row["v_phase"])
            for w in scn.winds:
                row[f"p_{w.id}"] = st[f"p_{w.id}"]
                row[f"q_{w.id}"] = st[f"q_{w.id}"]
            if scn.grid is not None:
                row["p_grid"] = st["p_grid"]
                row["q_grid"] = st["q_grid"]
        else:
            ss = equilibrium(scn)
            row = {"value": value, "f_hz": ss.f_hz, "v_phase": ss.v_phase}
            for m in scn.machines:
                row[f"p_{m.id}"] = ss.p[m.id]
                row[f"q_{m.id}"] = ss.q[m.id]
                row[f"delta_{m.id}"] = ss.delta[m.id]
                vmag = ss.v_phase
                row[f"i_{m.id}"] = math.hypot(ss.p[m.id], ss.q[m.id]) / (3.0 * vmag)
            p_load = ss.p.get("load", 0.0)
            q_load = ss.q.get("load", 0.0)
            row["p_load"] = p_load
            row["q_load"] = q_load
            row["i_load"] = math.hypot(p_load, q_load) / (3.0 * ss.v_phase)
            for w in scn.winds:
                row[f"p_{w.id}"] = ss.p[w.id]
                row[f"q_{w.id}"] = ss.q[w.id]
            if scn.grid is not None:
                row["p_grid"] = ss.p["grid"]
                row["q_grid"] = ss.q["grid"]
        rows.append(row)
    return rows
