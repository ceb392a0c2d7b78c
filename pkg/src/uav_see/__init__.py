"""Secrecy-energy-efficient co-design of an untrusted UAV relay over THz links.

Library surface: scenario loading and user placement, closed-form link and
propulsion physics, the SCA bound toolbox, a conic-program builder with an
embedded exponential-cone interior-point solver, the four block solvers, and
the outer block-coordinate drivers.
"""

from .scenario import (NodeLayout, RotorParams, ScenarioConfig, ScenarioError,
                       config_from_dict, config_to_dict, load_scenario,
                       place_users, save_scenario)
from .physics import (FlightPlan, LinkGains, ResourceAllocation, SeeMetrics,
                      average_secrecy_rate, channel_gain, flight_power,
                      flight_power_upper_bound, induced_slack, link_gains,
                      link_rates, see_metrics)
from .conic import ConeProgram, ConicError, LinExpr, SolveReport
from .subproblems import (AuditReport, BlockResult, DinkelbachError,
                          audit_constraints, finalize_binary, round_scheduling,
                          solve_p1, solve_p2, solve_p31, solve_p4_dinkelbach)
from .orchestrator import (InfeasibleMissionError, RunReport, SCHEMES,
                           initialize_feasible, run_baseline, run_msee_mi,
                           run_msee_seq, run_scheme)

__version__ = "0.1.0"
