"""Distributed formation control of networked two-link arms with flexible joints."""
from .controller import AgentLaw, ControlGains, centralized_torques, control_torque, singularity_check
from .dynamics import ActuationType, LinkParams, ManipulatorConfig, ManipulatorState, MechParams, forward_dynamics
from .graph import FormationGraph, FormationMethod, Framework, potential, potential_gradient, rigidity_check
from .kinematics import ObservedNeighbor, forward_kinematics, virtual_end_effector, virtual_from_observables
from .scenarios import Scenario, ScenarioError, builtin, load_scenario, save_scenario
from .shapes import ShapeClass, classify_cardinality, export_projection, solve_shapes
from .sim import IntegrationError, NetworkState, Simulator, load_trajectory, run, save_trajectory, verify_rest_equilibrium

__version__ = "0.1.0"

__all__ = [
    "ActuationType",
    "AgentLaw",
    "ControlGains",
    "FormationGraph",
    "FormationMethod",
    "Framework",
    "IntegrationError",
    "LinkParams",
    "ManipulatorConfig",
    "ManipulatorState",
    "MechParams",
    "NetworkState",
    "ObservedNeighbor",
    "Scenario",
    "ScenarioError",
    "ShapeClass",
    "Simulator",
    "builtin",
    "centralized_torques",
    "classify_cardinality",
    "control_torque",
    "export_projection",
    "forward_dynamics",
    "forward_kinematics",
    "load_scenario",
    "load_trajectory",
    "potential",
    "potential_gradient",
    "rigidity_check",
    "run",
    "save_scenario",
    "save_trajectory",
    "singularity_check",
    "solve_shapes",
    "verify_rest_equilibrium",
    "virtual_end_effector",
    "virtual_from_observables",
]
