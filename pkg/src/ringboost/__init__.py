"""Ring-coupled boost converter simulation with passivity-based control."""

from .control import (ConstantReference, ControllerState, DampingConfig,
                      ErrorEnergy, PbcController, SinusoidReference,
                      decay_rate_bound, desired_state_derivative, error_energy,
                      error_energy_rate, pbc_duty)
from .equilibrium import Equilibrium, duty_from_voltage, operating_point, steady_state
from .integrators import IntegratorConfig, SimulationError
from .model import (ConverterParams, LineParams, PchMatrices, RingParams,
                    assemble_pch, averaged_derivative, hamiltonian, pack_state,
                    split_state, switched_derivative)
from .report import RunReport, compare, extract_report
from .scenarios import (BUILTIN_SCENARIOS, Scenario, X0Spec,
                        cross_validate_scenario, load_scenario, report_for, run,
                        simulate_scenario)
from .sim import (CrossValidation, PwmConfig, Trajectory, cross_validate,
                  max_state_deviation, pwm_period_average, simulate_averaged,
                  simulate_switched, trajectory_from_csv, trajectory_to_csv)
from .zero_dynamics import (DutyEquilibrium, PhaseLine, ZeroDynConfig,
                            equilibria_current_output, mu_dot_current_output,
                            mu_dot_voltage_output, phase_line, phase_line_to_csv)

__version__ = "0.1.0"
