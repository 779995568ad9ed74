"""Scenario description and the sectioned key=value file format.

A scenario file is line oriented: ``[section]`` headers followed by
``key = value`` pairs, with ``#`` comments. Sections are ``[sim]``, ``[grid]``,
``[machine.<id>]``, ``[load.<id>]``, ``[wind.<id>]`` and ``[event.<n>]``.
Validation collects every problem (with its line number) before failing, so a
fixture can be fixed in one pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .integrators import IntegratorConfig
from .machines import DroopParams, MachineMode, MachineParams
from .network import GridSourceParams, RLLoadParams

TWO_PI = 2.0 * math.pi

EVENT_ACTIONS = ("close_switch", "open_switch", "set_mech_power", "set_iq", "set_id")

# ids become CSV column suffixes; keep these free for the fixed columns
RESERVED_IDS = {"grid", "t", "f_hz", "v_ll_rms", "sim", "event"}


class ScenarioError(ValueError):
    """Carries every validation problem found in a scenario file."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n" + "\n".join(self.errors))


@dataclass
class WindSeries:
    samples: list              # (time s, speed m/s), strictly increasing times

    def __post_init__(self):
        if not self.samples:
            raise ValueError("wind series must not be empty")
        times = [t for t, _ in self.samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("wind series times must be strictly increasing")

    def speed_at(self, t: float) -> float:
        """Linear interpolation, held constant beyond both ends."""
        s = self.samples
        if t <= s[0][0]:
            return s[0][1]
        if t >= s[-1][0]:
            return s[-1][1]
        for (t0, v0), (t1, v1) in zip(s, s[1:]):
            if t0 <= t <= t1:
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        raise AssertionError("unreachable")


@dataclass
class WindMapping:
    kind: str = "linear"       # linear | cubic
    gain: float = 0.9607       # A per (m/s), or A at v_ref for cubic
    v_ref: float = 11.2        # m/s, cubic reference speed
    i_max: float = 60.0        # A, clamp

    def __post_init__(self):
        if self.kind not in ("linear", "cubic"):
            raise ValueError(f"unknown wind mapping {self.kind!r}")
        if self.gain < 0.0:
            raise ValueError("mapping gain must be >= 0")
        if self.i_max <= 0.0:
            raise ValueError("i_max must be > 0")
        if self.kind == "cubic" and self.v_ref <= 0.0:
            raise ValueError("v_ref must be > 0 for the cubic mapping")


def wind_current_at(series: WindSeries, mapping: WindMapping, t: float) -> float:
    """Direct-axis current (A RMS) for the wind speed at time t."""
    if t < 0.0:
        raise ValueError("t must be >= 0")
    v = series.speed_at(t)
    if mapping.kind == "linear":
        i = mapping.gain * v
    else:
        i = mapping.gain * (v / mapping.v_ref) ** 3
    return min(max(i, 0.0), mapping.i_max)


@dataclass
class MachineSpec:
    id: str
    params: MachineParams
    mode: MachineMode
    flux0: float = 28.0


@dataclass
class WindSpec:
    id: str
    id_rms: float = 0.0
    iq_rms: float = 0.0
    series: WindSeries | None = None
    mapping: WindMapping | None = None

    def id_at(self, t: float) -> float:
        if self.series is not None:
            return wind_current_at(self.series, self.mapping or WindMapping(), t)
        return self.id_rms


@dataclass
class Event:
    time: float
    action: str
    target: str
    value: float = 0.0


@dataclass
class SimSettings:
    t_end: float = 15.0
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    output_interval: float = 0.01


@dataclass
class Scenario:
    sim: SimSettings = field(default_factory=SimSettings)
    grid: GridSourceParams | None = None
    machines: list = field(default_factory=list)      # [MachineSpec]
    loads: dict = field(default_factory=dict)         # id -> RLLoadParams
    winds: list = field(default_factory=list)         # [WindSpec]
    events: list = field(default_factory=list)        # [Event]
    source_text: str = ""

    def machine(self, mid: str) -> MachineSpec:
        for m in self.machines:
            if m.id == mid:
                return m
        raise KeyError(mid)

    def wind(self, wid: str) -> WindSpec:
        for w in self.winds:
            if w.id == wid:
                return w
        raise KeyError(wid)


def load_wind_series_csv(path) -> WindSeries:
    """Two-column ``time,speed_mps`` CSV with one header line."""
    lines = Path(path).read_text().splitlines()
    samples = []
    for ln in lines[1:]:
        ln = ln.strip()
        if not ln:
            continue
        parts = ln.split(",")
        if len(parts) != 2:
            raise ValueError(f"bad wind series line {ln!r}")
        samples.append((float(parts[0]), float(parts[1])))
    return WindSeries(samples)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_SIM_KEYS = {"t_end", "dt", "method", "output_interval", "rel_tol", "abs_tol"}
_GRID_KEYS = {"v_ll", "f", "r", "l"}
_MACHINE_KEYS = {
    "s_rated", "v_ll", "poles", "xs", "h", "d", "flux0", "mode", "p_mech",
    "f0", "m_droop", "avr", "v0", "n_droop", "q0",
    "kg", "avr_kp", "avr_ki", "t_field",
}
_LOAD_KEYS = {"r", "l", "connected"}
_WIND_KEYS = {"id_rms", "iq_rms", "series_file", "mapping", "gain", "v_ref", "i_max"}
_EVENT_KEYS = {"time", "action", "target", "value"}


def _tokenize(text):
    """Yield (line_no, section_name, key, value); headers have key=None."""
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            yield no, line[1:-1].strip(), None, None
        elif "=" in line:
            k, v = line.split("=", 1)
            yield no, None, k.strip(), v.strip()
        else:
            yield no, None, None, raw.strip()


def _ident_ok(name: str) -> bool:
    return name.isidentifier()


class _SectionData:
    def __init__(self, kind, ident, line):
        self.kind = kind
        self.ident = ident
        self.line = line
        self.pairs = {}            # key -> (value string, line)


def parse_scenario(text: str, base_dir=None) -> Scenario:
    """Parse and fully validate a scenario file.

    base_dir resolves relative wind series_file paths. Raises ScenarioError
    carrying every validation problem, each tagged with its line number.
    """
    errors = []
    sections = []
    current = None

    for no, header, key, value in _tokenize(text):
        if header is not None:
            parts = header.split(".", 1)
            kind = parts[0]
            ident = parts[1] if len(parts) > 1 else None
            if kind not in ("sim", "grid", "machine", "load", "wind", "event"):
                errors.append(f"line {no}: unknown section [{header}]")
                current = None
                continue
            if kind in ("machine", "load", "wind", "event") and not ident:
                errors.append(f"line {no}: section [{kind}] needs an id, e.g. [{kind}.x]")
                current = None
                continue
            if kind in ("sim", "grid") and ident:
                errors.append(f"line {no}: section [{kind}] takes no id")
                current = None
                continue
            current = _SectionData(kind, ident, no)
            sections.append(current)
        elif key is not None:
            if current is None:
                errors.append(f"line {no}: key outside any section")
            elif key in current.pairs:
                errors.append(f"line {no}: duplicate key {key!r} in [{current.kind}]")
            else:
                current.pairs[key] = (value, no)
        else:
            errors.append(f"line {no}: cannot parse {value!r}")

    known = {"sim": _SIM_KEYS, "grid": _GRID_KEYS, "machine": _MACHINE_KEYS,
             "load": _LOAD_KEYS, "wind": _WIND_KEYS, "event": _EVENT_KEYS}
    for sec in sections:
        for k, (_, no) in sec.pairs.items():
            if k not in known[sec.kind]:
                errors.append(f"line {no}: unknown key {k!r} in [{sec.kind}]")

    def fnum(sec, key, default=None):
        if key not in sec.pairs:
            return default
        v, no = sec.pairs[key]
        try:
            return float(v)
        except ValueError:
            errors.append(f"line {no}: {key} must be a number, got {v!r}")
            return default

    def inum(sec, key, default=None):
        if key not in sec.pairs:
            return default
        v, no = sec.pairs[key]
        try:
            return int(v)
        except ValueError:
            errors.append(f"line {no}: {key} must be an integer, got {v!r}")
            return default

    def fstr(sec, key, default=None, choices=None):
        if key not in sec.pairs:
            return default
        v, no = sec.pairs[key]
        if choices and v not in choices:
            errors.append(f"line {no}: {key} must be one of {'|'.join(choices)}, got {v!r}")
            return default
        return v

    def fbool(sec, key, default=None):
        if key not in sec.pairs:
            return default
        v, no = sec.pairs[key]
        low = v.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        errors.append(f"line {no}: {key} must be true/false, got {v!r}")
        return default

    scn = Scenario(source_text=text)
    seen_ids = {}

    def register(ident, sec):
        if ident in RESERVED_IDS:
            errors.append(f"line {sec.line}: id {ident!r} is reserved")
        elif not _ident_ok(ident):
            errors.append(f"line {sec.line}: id {ident!r} is not a valid identifier")
        elif ident in seen_ids:
            errors.append(f"line {sec.line}: duplicate device id {ident!r} "
                          f"(first defined at line {seen_ids[ident]})")
        else:
            seen_ids[ident] = sec.line
            return True
        return False

    for sec in sections:
        if sec.kind == "sim":
            t_end = fnum(sec, "t_end", 15.0)
            if t_end is not None and t_end <= 0.0:
                errors.append(f"line {sec.line}: t_end must be > 0")
                t_end = 1.0
            try:
                cfg = IntegratorConfig(
                    dt=fnum(sec, "dt", 1e-3),
                    method={"rk4": "rk4", "rk23": "rk23"}.get(
                        fstr(sec, "method", "rk4", ("rk4", "rk23")), "rk4"),
                    rel_tol=fnum(sec, "rel_tol", 1e-6),
                    abs_tol=fnum(sec, "abs_tol", 1e-9),
                )
            except ValueError as exc:
                errors.append(f"line {sec.line}: {exc}")
                cfg = IntegratorConfig()
            out = fnum(sec, "output_interval", 0.01)
            if out is not None and out <= 0.0:
                errors.append(f"line {sec.line}: output_interval must be > 0")
                out = 0.01
            scn.sim = SimSettings(t_end=t_end, integrator=cfg, output_interval=out)

        elif sec.kind == "grid":
            if scn.grid is not None:
                errors.append(f"line {sec.line}: duplicate [grid] section")
                continue
            try:
                scn.grid = GridSourceParams(
                    v_ll_rms=fnum(sec, "v_ll", 11e3),
                    f=fnum(sec, "f", 50.0),
                    r_internal=fnum(sec, "r", 1e-5),
                    l_internal=fnum(sec, "l", 0.04),
                )
            except (TypeError, ValueError) as exc:
                errors.append(f"line {sec.line}: {exc}")

        elif sec.kind == "machine":
            if not register(sec.ident, sec):
                continue
            v_ll = fnum(sec, "v_ll", 11e3)
            f0 = fnum(sec, "f0", 50.0)
            flux0 = fnum(sec, "flux0", 28.0)
            try:
                params = MachineParams(
                    s_rated=fnum(sec, "s_rated", 1.5e6),
                    v_rated_ll=v_ll,
                    f_rated=f0,
                    poles=inum(sec, "poles", 4),
                    xs=fnum(sec, "xs", 88.6),
                    h_inertia=fnum(sec, "h", 1.0),
                    d_damping=fnum(sec, "d", 50.0),
                    flux_nominal=flux0,
                    kg=fnum(sec, "kg", 2.0),
                    avr_kp=fnum(sec, "avr_kp", 400.0),
                    avr_ki=fnum(sec, "avr_ki", 900.0),
                    t_field=fnum(sec, "t_field", 0.5),
                )
            except (TypeError, ValueError) as exc:
                errors.append(f"line {sec.line}: {exc}")
                continue
            v0 = fnum(sec, "v0", params.v_base)
            freq = fstr(sec, "mode", "const_power",
                        ("const_power", "speed_ref", "droop"))
            avr = fstr(sec, "avr", "pi", ("pi", "fixed", "droop"))
            droop = DroopParams(f0=f0, m=fnum(sec, "m_droop", 0.02),
                                v0=v0, n=fnum(sec, "n_droop", 0.01))
            if freq == "droop" and droop.m <= 0.0:
                errors.append(f"line {sec.line}: m_droop must be > 0 for droop mode")
            if avr == "droop" and droop.n <= 0.0:
                errors.append(f"line {sec.line}: n_droop must be > 0 for droop AVR")
            mode = MachineMode(
                freq=freq, avr=avr,
                p_mech=fnum(sec, "p_mech", 0.0),
                omega_ref=TWO_PI * f0,
                droop=droop,
                v_ref=v0,
                q0=fnum(sec, "q0", 0.0),
            )
            scn.machines.append(MachineSpec(sec.ident, params, mode, flux0=flux0))

        elif sec.kind == "load":
            if not register(sec.ident, sec):
                continue
            try:
                scn.loads[sec.ident] = RLLoadParams(
                    r=fnum(sec, "r", 121.0),
                    l=fnum(sec, "l", 0.0),
                    connected=fbool(sec, "connected", True),
                )
            except (TypeError, ValueError) as exc:
                errors.append(f"line {sec.line}: {exc}")

        elif sec.kind == "wind":
            if not register(sec.ident, sec):
                continue
            series = None
            mapping = None
            if "series_file" in sec.pairs:
                fname, no = sec.pairs["series_file"]
                path = Path(base_dir) / fname if base_dir else Path(fname)
                try:
                    series = load_wind_series_csv(path)
                except (OSError, ValueError) as exc:
                    errors.append(f"line {no}: cannot load wind series: {exc}")
                try:
                    mapping = WindMapping(
                        kind=fstr(sec, "mapping", "linear", ("linear", "cubic")),
                        gain=fnum(sec, "gain", 0.9607),
                        v_ref=fnum(sec, "v_ref", 11.2),
                        i_max=fnum(sec, "i_max", 60.0),
                    )
                except (TypeError, ValueError) as exc:
                    errors.append(f"line {sec.line}: {exc}")
            scn.winds.append(WindSpec(
                sec.ident,
                id_rms=fnum(sec, "id_rms", 0.0),
                iq_rms=fnum(sec, "iq_rms", 0.0),
                series=series, mapping=mapping,
            ))

        elif sec.kind == "event":
            action = fstr(sec, "action", None, EVENT_ACTIONS)
            time = fnum(sec, "time", None)
            target = fstr(sec, "target", None)
            if action is None and "action" not in sec.pairs:
                errors.append(f"line {sec.line}: event needs an action")
            if time is None and "time" not in sec.pairs:
                errors.append(f"line {sec.line}: event needs a time")
            if target is None:
                errors.append(f"line {sec.line}: event needs a target")
            if action is None or time is None or target is None:
                continue
            scn.events.append(Event(time=time, action=action, target=target,
                                    value=fnum(sec, "value", 0.0)))

    # cross-section validation
    if scn.grid is None and not scn.machines:
        errors.append("no voltage source: scenario needs a [grid] or at least one [machine.*]")

    load_ids = set(scn.loads)
    mach_ids = {m.id for m in scn.machines}
    wind_ids = {w.id for w in scn.winds}
    for ev in scn.events:
        if ev.time < 0.0 or ev.time > scn.sim.t_end:
            errors.append(f"event at t={ev.time} outside [0, t_end={scn.sim.t_end}]")
        if ev.action in ("close_switch", "open_switch") and ev.target not in load_ids:
            errors.append(f"event target {ev.target!r} is not a load (action {ev.action})")
        elif ev.action == "set_mech_power" and ev.target not in mach_ids:
            errors.append(f"event target {ev.target!r} is not a machine (action {ev.action})")
        elif ev.action in ("set_iq", "set_id") and ev.target not in wind_ids:
            errors.append(f"event target {ev.target!r} is not a wind device (action {ev.action})")

    if errors:
        raise ScenarioError(errors)

    # deterministic event order regardless of declaration order
    scn.events.sort(key=lambda e: (e.time, e.target, e.action))
    return scn


def load_scenario_file(path) -> Scenario:
    p = Path(path)
    return parse_scenario(p.read_text(), base_dir=p.parent)


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture scenario (fig3_1, fig4_2, appC2, ...)."""
    root = Path(__file__).parent / "fixtures"
    p = root / f"{name}.cfg"
    if not p.exists():
        available = sorted(q.stem for q in root.glob("*.cfg"))
        raise FileNotFoundError(
            f"no bundled fixture {name!r}; available: {', '.join(available)}")
    return p


def load_fixture(name: str) -> Scenario:
    return load_scenario_file(fixture_path(name))
