"""Paper-table reproduction reports and the power-balance audit.

Each table report runs the matching parameter sweep on its bundled fixture,
prints our steady values beside the reference ones, and evaluates exactly the
assertions declared as module invariants (ratio, symmetry, monotonicity).
Reference magnitudes from the original study depend on vendor machine
internals, so they are shown with a +-15 percent side-by-side band that is
never asserted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .engine import sweep
from .output import TimeSeries
from .scenario import Scenario, load_fixture

MODEL_GAP_BAND = 0.15


@dataclass
class BalanceReport:
    times: list
    p_source: list
    p_load: list
    q_source: list
    q_load: list
    p_residual: list               # relative, per timestamp
    q_residual: list
    window_start: float

    @property
    def max_p_residual(self) -> float:
        return max(self.p_residual) if self.p_residual else 0.0

    @property
    def max_q_residual(self) -> float:
        return max(self.q_residual) if self.q_residual else 0.0


def balance_report(ts: TimeSeries, window_start: float = None) -> BalanceReport:
    """Source-versus-load power residuals per timestamp after the transient.

    The default window starts at 3 s (three times the default inertia
    constant), clamped to leave at least the final tenth of the run. Residuals
    are relative to the largest per-device power at that instant.
    """
    kinds = ts.device_kinds()
    if not kinds:
        raise ValueError("time series carries no device metadata")
    src = [i for i, k in kinds.items() if k in ("machine", "grid", "wind")]
    lod = [i for i, k in kinds.items() if k == "load"]

    t = ts.times
    if window_start is None:
        window_start = 3.0
    window_start = min(window_start, t[0] + 0.9 * (t[-1] - t[0]))

    pi = {i: ts.index(f"p_{i}") for i in kinds}
    qi = {i: ts.index(f"q_{i}") for i in kinds}
    it = ts.index("t")

    rep = BalanceReport([], [], [], [], [], [], [], window_start)
    for row in ts.rows:
        if row[it] < window_start:
            continue
        ps = sum(row[pi[i]] for i in src)
        pl = sum(row[pi[i]] for i in lod)
        qs = sum(row[qi[i]] for i in src)
        ql = sum(row[qi[i]] for i in lod)
        scale_p = max(max(abs(row[pi[i]]) for i in kinds), 1.0)
        scale_q = max(max(abs(row[qi[i]]) for i in kinds), 1.0)
        rep.times.append(row[it])
        rep.p_source.append(ps)
        rep.p_load.append(pl)
        rep.q_source.append(qs)
        rep.q_load.append(ql)
        rep.p_residual.append(abs(ps - pl) / scale_p)
        rep.q_residual.append(abs(qs - ql) / scale_q)
    if not rep.times:
        raise ValueError(f"no samples after window_start={window_start}")
    return rep


# ---------------------------------------------------------------------------
# Reference tables
# ---------------------------------------------------------------------------

@dataclass
class TableCheck:
    description: str
    passed: bool


@dataclass
class TableResult:
    name: str
    title: str
    header: list
    rows: list                      # display rows (list of str)
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def render(self) -> str:
        widths = [max(len(str(r[i])) for r in [self.header] + self.rows)
                  for i in range(len(self.header))]
        lines = [self.title]
        lines.append("  ".join(str(h).ljust(w) for h, w in zip(self.header, widths)))
        for r in self.rows:
            lines.append("  ".join(str(c).ljust(w) for c, w in zip(r, widths)))
        for c in self.checks:
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.description}")
        return "\n".join(lines)


def _band(ours: float, ref: float) -> str:
    if ref == 0.0:
        return "-"
    gap = abs(ours - ref) / abs(ref)
    return f"{'in' if gap <= MODEL_GAP_BAND else 'off'}-band ({100 * gap:.1f}%)"


def _strictly_monotone(values, decreasing: bool) -> bool:
    pairs = zip(values, values[1:])
    return all((b < a) if decreasing else (b > a) for a, b in pairs)


# name -> (fixture, param path, sweep values, dynamic default)
TABLE_SWEEPS = {
    "t3_13": ("fig3_12", "load.main.r", [40.0, 50.0, 70.0, 15.0, 5.0], False),
    "t3_16": ("fig3_15", "load.main.r", [40.0, 50.0, 70.0, 5.0], True),
    "t4_3": ("fig4_2", "machine.sg1.n_droop", [0.01, 0.05, 0.001], False),
    "t4_4": ("fig4_2", "machine.sg1.m_droop", [0.01, 0.05, 0.001], False),
    "t4_5": ("fig4_2", "load.main.l", [0.001, 0.1, 0.5], False),
    # reference Iq magnitudes; the fixture's converter draws (absorbs)
    # reactive current, so the swept component is negative
    "t5_9": ("fig5_8", "wind.w1.iq_rms", [-0.01, -0.3, -0.5], False),
}

# reference values from the original study, display only
_REF_T3_13 = {40.0: (20.0, 1.16), 50.0: (16.2, 0.96), 70.0: (11.6, 0.73),
              15.0: (52.96, 2.815), 5.0: (135.0, 8.214)}
_REF_T3_16 = {40.0: (66.0, 1.4), 50.0: (57.0, 1.2), 70.0: (43.0, 1.1),
              5.0: (94.0, 4.34)}
_REF_T4_3 = {0.01: (1.05e5, 1.05e5), 0.05: (3.02e4, 1.51e5), 0.001: (2.5e5, 2.5e4)}
_REF_T4_4 = {0.01: (4.8e5, 4.8e5), 0.05: (4.7e5, 5.0e5), 0.001: (4.95e5, 4.75e5)}
_REF_T4_5 = {0.001: (1555.0, 1555.0), 0.1: (0.1e6, 0.1e6), 0.5: (0.16e6, 0.16e6)}
_REF_T5_9 = {0.01: (1.39e5, 1.01e5), 0.3: (1.41e5, 1.04e5), 0.5: (1.43e5, 1.06e5)}

K2_FIXED = 0.01        # the second machine's gain in the Ch. 4 tables


def table_sweep(name: str, scenario: Scenario = None, dynamic: bool = None):
    """Run the sweep matching a reference table; returns the row dicts."""
    if name not in TABLE_SWEEPS:
        raise KeyError(f"unknown table {name!r}; choose from {sorted(TABLE_SWEEPS)}")
    fixture, path, values, dyn_default = TABLE_SWEEPS[name]
    scn = scenario if scenario is not None else load_fixture(fixture)
    dyn = dyn_default if dynamic is None else dynamic
    return sweep(scn, path, values, dynamic=dyn)


def table_report(name: str, results) -> TableResult:
    """Format sweep results beside the reference rows and evaluate the
    table's declared assertions."""
    if name in ("t3_13", "t3_16"):
        ref = _REF_T3_13 if name == "t3_13" else _REF_T3_16
        mid = "sg1"
        header = ["R (ohm)", "I load (A)", "delta (deg)", "ref I", "ref delta", "model gap"]
        rows = []
        for r in results:
            d_deg = math.degrees(r[f"delta_{mid}"])
            ri, rd = ref.get(r["value"], (0.0, 0.0))
            rows.append([f"{r['value']:g}", f"{r['i_load']:.4g}", f"{d_deg:.4g}",
                         f"{ri:g}", f"{rd:g}", _band(d_deg, rd)])
        by_r = sorted(results, key=lambda r: r["value"])
        deltas = [r[f"delta_{mid}"] for r in by_r]
        currents = [r["i_load"] for r in by_r]
        title = ("load-angle trend vs load resistance "
                 + ("(machine + R load)" if name == "t3_13" else "(grid + machine + RL load)"))
        res = TableResult(name, title, header, rows)
        res.checks.append(TableCheck(
            "load angle strictly decreasing in R", _strictly_monotone(deltas, True)))
        res.checks.append(TableCheck(
            "load current strictly decreasing in R", _strictly_monotone(currents, True)))
        return res

    if name == "t4_3":
        header = ["K1", "K2", "Q1 (VAr)", "Q2 (VAr)", "ref Q1", "ref Q2", "model gap"]
        rows = []
        res = TableResult(name, "reactive power sharing vs voltage droop gains",
                          header, rows)
        for r in results:
            k1 = r["value"]
            q1, q2 = r["q_sg1"], r["q_sg2"]
            r1, r2 = _REF_T4_3.get(k1, (0.0, 0.0))
            rows.append([f"{k1:g}", f"{K2_FIXED:g}", f"{q1:.4g}", f"{q2:.4g}",
                         f"{r1:g}", f"{r2:g}", _band(q1, r1)])
            want = K2_FIXED / k1
            err = abs(q1 / q2 - want) / want
            res.checks.append(TableCheck(
                f"K1={k1:g}: Q1:Q2 = K2:K1 within 1e-4 (got ratio {q1 / q2:.6g})",
                err <= 1e-4))
        return res

    if name == "t4_4":
        header = ["K1", "K2", "P1 (W)", "P2 (W)", "ref P1", "ref P2", "model gap"]
        rows = []
        res = TableResult(name, "active power sharing vs frequency droop gains",
                          header, rows)
        for r in results:
            k1 = r["value"]
            p1, p2 = r["p_sg1"], r["p_sg2"]
            r1, r2 = _REF_T4_4.get(k1, (0.0, 0.0))
            rows.append([f"{k1:g}", f"{K2_FIXED:g}", f"{p1:.6g}", f"{p2:.6g}",
                         f"{r1:g}", f"{r2:g}", _band(p1, r1)])
            if k1 == K2_FIXED:
                res.checks.append(TableCheck(
                    "equal gains: P1 = P2 within 1e-6",
                    abs(p1 - p2) <= 1e-6 * max(abs(p1), abs(p2))))
            else:
                expect_less = k1 > K2_FIXED
                ok = (p1 < p2) if expect_less else (p1 > p2)
                res.checks.append(TableCheck(
                    f"K1={k1:g}: higher gain carries strictly less P", ok))
        return res

    if name == "t4_5":
        header = ["L (H)", "Q1 (VAr)", "Q2 (VAr)", "Q_load", "ref Q1", "ref Q2", "model gap"]
        rows = []
        res = TableResult(name, "reactive power sharing vs load inductance",
                          header, rows)
        q1s = []
        for r in results:
            lval = r["value"]
            q1, q2 = r["q_sg1"], r["q_sg2"]
            r1, r2 = _REF_T4_5.get(lval, (0.0, 0.0))
            rows.append([f"{lval:g}", f"{q1:.4g}", f"{q2:.4g}", f"{r['q_load']:.4g}",
                         f"{r1:g}", f"{r2:g}", _band(q1, r1)])
            q1s.append(q1)
            res.checks.append(TableCheck(
                f"L={lval:g}: Q1 = Q2 within 1e-6",
                abs(q1 - q2) <= 1e-6 * max(abs(q1), abs(q2))))
        res.checks.append(TableCheck(
            "per-machine Q strictly increasing in L", _strictly_monotone(q1s, False)))
        return res

    if name == "t5_9":
        header = ["Iq (A)", "Q1 (VAr)", "Q2 (VAr)", "Q_wind", "ref Q1", "ref Q2", "model gap"]
        rows = []
        res = TableResult(name, "reactive power sharing vs wind reactive current",
                          header, rows)
        q1s, q2s = [], []
        for r in results:
            iq = r["value"]
            q1, q2, qw = r["q_sg1"], r["q_sg2"], r["q_w1"]
            r1, r2 = _REF_T5_9.get(abs(iq), (0.0, 0.0))
            rows.append([f"{abs(iq):g}", f"{q1:.4g}", f"{q2:.4g}", f"{qw:.4g}",
                         f"{r1:g}", f"{r2:g}", _band(q1, r1)])
            q1s.append(q1)
            q2s.append(q2)
            want = 3.0 * r["v_phase"] * iq
            res.checks.append(TableCheck(
                f"Iq={abs(iq):g}: Q_wind = 3 V Iq exactly",
                abs(qw - want) <= 1e-9 * max(abs(want), 1.0)))
            bal = abs(q1 + q2 + qw - r["q_load"])
            res.checks.append(TableCheck(
                f"Iq={abs(iq):g}: reactive balance within 1e-3",
                bal <= 1e-3 * max(abs(r["q_load"]), 1.0)))
        res.checks.append(TableCheck(
            "Q1 nondecreasing in Iq", all(b >= a for a, b in zip(q1s, q1s[1:]))))
        res.checks.append(TableCheck(
            "Q2 nondecreasing in Iq", all(b >= a for a, b in zip(q2s, q2s[1:]))))
        return res

    raise KeyError(f"unknown table {name!r}")
