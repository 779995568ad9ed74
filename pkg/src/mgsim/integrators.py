"""Fixed-step RK4 and adaptive RK23 integrators with exact event alignment.

Integration steps never straddle an event time: the span between events is
integrated as an independent segment and every event lands exactly on a step
boundary, so discontinuous parameter changes can be applied there by the
caller. Everything is plain Python and deterministic; identical inputs give
bit-identical trajectories on one platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


MIN_STEP = 1e-12


class StepUnderflowError(RuntimeError):
    """Adaptive controller drove the step below MIN_STEP (stiff scenario)."""

    def __init__(self, t, dt):
        super().__init__(f"integration step underflow at t={t:.9g} s (dt={dt:.3g} s)")
        self.t = t
        self.dt = dt


@dataclass
class IntegratorConfig:
    dt: float = 1e-3
    method: str = "rk4"          # "rk4" | "rk23"
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        if self.method not in ("rk4", "rk23"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0:
            raise ValueError("tolerances must be > 0")


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)

    def append(self, t, x):
        self.times.append(t)
        self.states.append(list(x))


def rk4_step(deriv, x, t, dt):
    """One classical 4th-order Runge-Kutta step; x is a sequence of floats."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    k1 = deriv(t, x)
    h2 = 0.5 * dt
    x2 = [xi + h2 * ki for xi, ki in zip(x, k1)]
    k2 = deriv(t + h2, x2)
    x3 = [xi + h2 * ki for xi, ki in zip(x, k2)]
    k3 = deriv(t + h2, x3)
    x4 = [xi + dt * ki for xi, ki in zip(x, k3)]
    k4 = deriv(t + dt, x4)
    sixth = dt / 6.0
    return [
        xi + sixth * (a + 2.0 * b + 2.0 * c + d)
        for xi, a, b, c, d in zip(x, k1, k2, k3, k4)
    ]


def _rk23_step(deriv, x, t, dt, k1):
    """Bogacki-Shampine 3(2) embedded pair: returns (x3, err, k4), k4 is FSAL."""
    x2 = [xi + 0.5 * dt * ki for xi, ki in zip(x, k1)]
    k2 = deriv(t + 0.5 * dt, x2)
    xs = [xi + 0.75 * dt * ki for xi, ki in zip(x, k2)]
    k3 = deriv(t + 0.75 * dt, xs)
    x3 = [
        xi + dt * (2.0 * a + 3.0 * b + 4.0 * c) / 9.0
        for xi, a, b, c in zip(x, k1, k2, k3)
    ]
    k4 = deriv(t + dt, x3)
    err = [
        dt * (-5.0 / 72.0 * a + b / 12.0 + c / 9.0 - d / 8.0)
        for a, b, c, d in zip(k1, k2, k3, k4)
    ]
    return x3, err, k4


def _error_norm(err, x_old, x_new, rel_tol, abs_tol):
    acc = 0.0
    for e, xo, xn in zip(err, x_old, x_new):
        scale = abs_tol + rel_tol * max(abs(xo), abs(xn))
        r = e / scale
        acc += r * r
    return math.sqrt(acc / len(err)) if err else 0.0


def _segment_rk4(deriv, x, t0, t1, dt, record):
    # full dt steps, one shortened final step to land exactly on t1
    span = t1 - t0
    n_full = int(math.floor(span / dt + 1e-9))
    rem = span - n_full * dt
    if rem <= 1e-9 * dt:
        rem = 0.0
        if n_full == 0:
            n_full = 1
            dt = span
    for k in range(n_full):
        x = rk4_step(deriv, x, t0 + k * dt, dt)
        record(t1 if (rem == 0.0 and k == n_full - 1) else t0 + (k + 1) * dt, x)
    if rem > 0.0:
        x = rk4_step(deriv, x, t0 + n_full * dt, rem)
        record(t1, x)
    return x


def _segment_rk23(deriv, x, t0, t1, cfg, record):
    t = t0
    h = min(cfg.dt, t1 - t0)
    k1 = deriv(t, x)
    eps = 1e-15 * max(1.0, abs(t1))
    while t1 - t > eps:
        if h < MIN_STEP:
            raise StepUnderflowError(t, h)
        last = (t + h) >= (t1 - eps)
        if last:
            h = t1 - t
        x_new, err, k4 = _rk23_step(deriv, x, t, h, k1)
        enorm = _error_norm(err, x, x_new, cfg.rel_tol, cfg.abs_tol)
        if enorm <= 1.0:
            t = t1 if last else t + h
            x = x_new
            k1 = k4  # first-same-as-last
            record(t, x)
            h *= 5.0 if enorm == 0.0 else min(5.0, max(0.2, 0.9 * enorm ** (-1.0 / 3.0)))
        else:
            h *= max(0.2, 0.9 * enorm ** (-1.0 / 3.0))
    return x


def integrate(deriv, x0, t0, t1, cfg, events=(), on_boundary=None, record_all=False):
    """Integrate dx/dt = deriv(t, x) over [t0, t1] with event-aligned stepping.

    Parameters
    ----------
    deriv : callable(t, x) -> list of rates
    x0 : initial state (sequence of floats)
    cfg : IntegratorConfig
    events : event times inside [t0, t1]; each becomes an exact step boundary.
        Duplicates and times at the interval ends are tolerated.
    on_boundary : optional callable(t, x) -> new state or None, invoked at
        every interior boundary once the state has landed there (the caller
        applies discontinuous parameter changes here).
    record_all : also record every accepted internal step, not only the
        segment boundaries.

    Returns
    -------
    Trajectory (always includes t0 and every boundary up to t1).
    """
    if t1 <= t0:
        raise ValueError("t1 must be > t0")
    eps = 1e-15 * max(1.0, abs(t1))
    bounds = [t0]
    for te in sorted(events):
        if te < t0 - eps or te > t1 + eps:
            raise ValueError(f"event time {te} outside [{t0}, {t1}]")
        if te > bounds[-1] + eps and te < t1 - eps:
            bounds.append(te)
    bounds.append(t1)

    traj = Trajectory()
    traj.append(t0, x0)
    x = list(x0)
    record = traj.append if record_all else (lambda t, x: None)

    for a, b in zip(bounds[:-1], bounds[1:]):
        if cfg.method == "rk4":
            x = _segment_rk4(deriv, x, a, b, cfg.dt, record)
        else:
            x = _segment_rk23(deriv, x, a, b, cfg, record)
        if not record_all or traj.times[-1] != b:
            traj.append(b, x)
        if on_boundary is not None and b < t1 - eps:
            replaced = on_boundary(b, x)
            if replaced is not None:
                x = list(replaced)
    return traj
