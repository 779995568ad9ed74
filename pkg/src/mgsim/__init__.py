"""Phasor-domain microgrid simulation.

Synchronous generators (classical model with governor and AVR), a stiff grid
source, RL loads and converter-interfaced wind share a quasi-static phasor
network. Scenarios are text files; results are CSV time series. See the
bundled fixtures for the reference experiments.
"""

from .engine import equilibrium, run, set_param, steady_state_of, sweep
from .integrators import IntegratorConfig, StepUnderflowError, integrate, rk4_step
from .machines import (
    DroopParams,
    MachineMode,
    MachineParams,
    MachineState,
    electrical_power_delta,
    emf_magnitude,
    speed_droop_ratio,
    sync_speed,
    xs_from_short_circuit,
)
from .network import (
    ConvergenceError,
    GridSourceParams,
    NetworkError,
    NetworkModel,
    RLLoadParams,
    SingularNetworkError,
    SteadyState,
    apply_switch,
    grid_norton,
    load_admittance,
    solve_bus_voltages,
    steady_state_droop_solve,
    wind_injection,
)
from .output import TimeSeries, read_csv, write_csv
from .phasor import Phasor, PowerReading, ThreePhaseSample, clarke, complex_power, line_phase_convert, park
from .report import balance_report, table_report, table_sweep
from .scenario import (
    Event,
    Scenario,
    ScenarioError,
    WindMapping,
    WindSeries,
    load_fixture,
    load_scenario_file,
    parse_scenario,
    wind_current_at,
)

__version__ = "0.1.0"
