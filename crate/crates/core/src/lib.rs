//! Passivity-based stability certification for lossy AC power networks.
//!
//! The library models a transmission grid as a static multivariable
//! input/output map between bus voltage and net injected current components
//! in a common synchronously rotating reference frame, and each generator
//! bus as a nonlinear 2-input/2-output dynamical system in the same frame.
//! Stability of the interconnection is certified bus by bus: the network
//! side carries an unconditional passivity certificate (Gershgorin discs on
//! the conductance matrix plus an eigenvalue check), while each bus is
//! linearized about an equilibrium and tested for input-strict passivity by
//! a positive-realness frequency sweep. Buses that fail the sweep can be
//! passivated by retuning a phase-lag stage in their excitation system.
//!
//! Pipeline, end to end:
//!
//! 1. [`io`] parses a case file (buses, branches, machines, controllers,
//!    loads) and a run configuration.
//! 2. [`network`] builds the admittance matrices and the real block map,
//!    and certifies network passivity.
//! 3. [`equilibrium`] solves a Newton-Raphson power flow and back-solves
//!    machine internal states, frame angles and controller references.
//! 4. [`linear_analysis`] linearizes each bus, runs the per-bus passivity
//!    sweep, and computes closed-loop eigenvalues with damping ratios.
//! 5. [`tuner`] searches lag-compensator constants for buses that violate
//!    the sweep and verifies the result.
//! 6. [`simulator`] integrates the nonlinear interconnected system through
//!    load-step disturbances to validate the certified configuration.

pub mod bus_models;
pub mod equilibrium;
pub mod frames;
pub mod io;
pub mod linear_analysis;
pub mod network;
pub mod pipeline;
pub mod simulator;
pub mod tuner;

pub use bus_models::{BusModel, ControllerParams, DynamicModel, GeneratorParams, LocalBusModel, MachineState};
pub use equilibrium::{EquilibriumPoint, PowerFlowSolution, PowerFlowSpec};
pub use frames::{ComplexPhasor, FrameAngle, ThreePhaseSample};
pub use io::{CaseFile, RunConfig};
pub use linear_analysis::{EigenReport, FrequencyGrid, LinearBusModel, PassivitySweepReport};
pub use network::{AdmittancePair, BranchSpec, NetworkBlockMatrix, PassivityCertificate};
pub use pipeline::SystemModel;
pub use simulator::{LoadStepEvent, Scenario, Trajectory};
