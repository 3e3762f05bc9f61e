//! End-to-end command implementations over a parsed case: power flow,
//! per-bus passivity sweeps, lag tuning, full-system eigenanalysis and
//! time-domain simulation, each with its CSV artifacts.
//!
//! The heavy lifting happens in data-returning functions so that the CLI,
//! the browser demo and the test suites all drive the same code; the
//! `run_*` wrappers add artifact writing on top.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use thiserror::Error;

use crate::bus_models::{BusModelError, LocalBusModel};
use crate::frames::to_machine_frame;
use crate::equilibrium::{
    init_single_machine, initialize_machine_states, solve_power_flow, EquilibriumError,
    EquilibriumPoint, PowerFlowSolution,
};
use crate::io::{
    self, CaseFile, IndexedCase, IoError, PassivitySummaryRow, RunConfig, TuneSummaryRow,
};
use crate::linear_analysis::{
    full_system_eigenanalysis, linearize_bus, passivity_sweep, EigenReport, LinearAnalysisError,
    LinearBusModel, PassivitySweepReport,
};
use crate::network::{
    assemble_block, augment_with_loads, build_admittance, certify_network_passivity,
    reduce_admittance, AdmittancePair, NetworkBlockMatrix, NetworkError, PassivityCertificate,
};
use crate::simulator::{simulate, Scenario, SimulatorError, Trajectory};
use crate::tuner::{find_violation_band, tune_lag, TunerError, TuningConstraints};

/// Relative finite-difference step for all bus linearizations.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    BusModel(#[from] BusModelError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Linear(#[from] LinearAnalysisError),
    #[error(transparent)]
    Tuner(#[from] TunerError),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error("unknown bus id {0}")]
    UnknownBus(u32),
    #[error("bus {0} has no machine to tune")]
    NoMachineAt(u32),
}

impl PipelineError {
    /// One exit code per error family.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Io(_) | PipelineError::UnknownBus(_) | PipelineError::NoMachineAt(_) => {
                2
            }
            PipelineError::BusModel(_) => 2,
            PipelineError::Network(_) => 3,
            PipelineError::Equilibrium(_) => 4,
            PipelineError::Linear(_) => 5,
            PipelineError::Tuner(_) => 6,
            PipelineError::Simulator(_) => 7,
        }
    }
}

/// Everything derived from a case up to the verified equilibrium.
pub struct SystemModel {
    pub case: IndexedCase,
    pub y: AdmittancePair,
    pub block: NetworkBlockMatrix,
    pub certificate: PassivityCertificate,
    pub pf: PowerFlowSolution,
    pub models: Vec<crate::bus_models::BusModel>,
    pub ep: EquilibriumPoint,
    /// Admittance with equilibrium constant-impedance loads folded in.
    pub y_aug: AdmittancePair,
}

impl SystemModel {
    /// Generated complex power of machine `m` at the equilibrium.
    pub fn machine_s_gen(&self, m: usize) -> Complex64 {
        let bus = self.ep.machine_buses[m];
        self.ep.v_hat[bus].as_complex() * self.ep.i_hat[bus].as_complex().conj()
    }

    /// Equilibrium model input of machine `m`.
    pub fn machine_u_hat(&self, m: usize) -> [f64; 2] {
        let bus = self.ep.machine_buses[m];
        [-self.ep.i_hat[bus].re, -self.ep.i_hat[bus].im]
    }

    /// Equilibrium model input of machine `m` in its own rotating frame.
    pub fn machine_u_hat_local(&self, m: usize) -> [f64; 2] {
        let bus = self.ep.machine_buses[m];
        let (iq, id) = to_machine_frame(self.ep.i_hat[bus], self.ep.delta_hat[m]);
        [-iq, -id]
    }

    /// Linearizes machine `m` about the equilibrium in the system frame,
    /// rotor angle included. This is the model the closed-loop analysis
    /// composes with the network map.
    pub fn linearize_machine(&self, m: usize) -> Result<LinearBusModel, PipelineError> {
        Ok(linearize_bus(
            &self.models[m],
            &self.ep.x_hat[m],
            self.machine_u_hat(m),
            FD_STEP,
        )?)
    }

    /// Linearizes machine `m` in its own rotating frame, the certification
    /// view used by the decentralized passivity test and the tuner.
    pub fn linearize_machine_local(&self, m: usize) -> Result<LinearBusModel, PipelineError> {
        let local = LocalBusModel::new(self.models[m].clone());
        Ok(linearize_bus(
            &local,
            &self.ep.x_hat[m][1..],
            self.machine_u_hat_local(m),
            FD_STEP,
        )?)
    }
}

/// Builds the network, solves the flow and back-solves the equilibrium.
pub fn prepare(case: &IndexedCase, cfg: &RunConfig) -> Result<SystemModel, PipelineError> {
    for m in &case.machines {
        m.generator.validate()?;
        if let Some(ep) = m.controllers.exciter {
            ep.validate()?;
        }
        m.controllers.pss.validate()?;
    }
    let y = build_admittance(&case.branches, case.n_buses())?;
    let block = assemble_block(&y)?;
    let certificate = certify_network_passivity(&y);
    let pf = solve_power_flow(
        &y,
        &case.power_flow_spec(),
        cfg.tolerances.power_flow,
        cfg.tolerances.max_power_flow_iterations,
    )?;
    let (models, ep) = initialize_machine_states(&pf, &case.machines, &case.loads, &y)?;
    let y_aug = augment_with_loads(&y, &case.loads, &ep.v_hat)?;
    Ok(SystemModel {
        case: case.clone(),
        y,
        block,
        certificate,
        pf,
        models,
        ep,
        y_aug,
    })
}

/// Passivity sweep of every machine (or a single one), by machine index.
pub fn sweep_machines(
    sys: &SystemModel,
    cfg: &RunConfig,
    only: Option<usize>,
) -> Result<Vec<(usize, PassivitySweepReport)>, PipelineError> {
    let grid = cfg.frequency_grid();
    let eps = cfg.tolerances.passivity_eps;
    let mut out = Vec::new();
    for m in 0..sys.models.len() {
        if let Some(pick) = only {
            if m != pick {
                continue;
            }
        }
        let lm = sys.linearize_machine_local(m)?;
        out.push((m, passivity_sweep(&lm, &grid, eps)?));
    }
    Ok(out)
}

/// Re-linearizes machine `m` with replacement lag constants. The machine
/// equilibrium is unchanged because the lag stage has unity dc gain.
pub fn linearize_with_lag(
    sys: &SystemModel,
    m: usize,
    t_b: f64,
    t_c: f64,
) -> Result<LinearBusModel, LinearAnalysisError> {
    let bus = sys.ep.machine_buses[m];
    let spec = &sys.case.machines[m];
    let mut controllers = spec.controllers.clone();
    let exciter = controllers
        .exciter
        .expect("lag retuning requires an exciter");
    controllers.exciter = Some(exciter.with_lag(t_b, t_c));
    let init = init_single_machine(
        bus,
        sys.ep.v_hat[bus],
        sys.machine_s_gen(m),
        &spec.generator,
        &controllers,
    )
    .map_err(|e| LinearAnalysisError::DimensionMismatch(e.to_string()))?;
    let (iq, id) = to_machine_frame(init.i_hat, init.delta);
    let local = LocalBusModel::new(init.model);
    linearize_bus(&local, &init.x_hat[1..], [-iq, -id], FD_STEP)
}

/// Outcome of tuning one machine.
#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub machine: usize,
    pub bus_id: u32,
    /// `Some((t_b, t_c))` once a verified passing pair exists.
    pub pair: Option<(f64, f64)>,
    pub already_passive: bool,
    pub error: Option<String>,
}

/// Runs the sweep-band-tune loop on machine `m`. Buses that already pass
/// get the bypass pair; violating buses without an exciter cannot be tuned.
pub fn tune_machine(
    sys: &SystemModel,
    cfg: &RunConfig,
    m: usize,
) -> Result<TuneOutcome, PipelineError> {
    let bus = sys.ep.machine_buses[m];
    let bus_id = sys.case.bus_ids[bus];
    let grid = cfg.frequency_grid();
    let eps = cfg.tolerances.passivity_eps;
    let lm = sys.linearize_machine_local(m)?;
    let report = passivity_sweep(&lm, &grid, eps)?;
    let band = find_violation_band(&report);
    if report.passive {
        return Ok(TuneOutcome {
            machine: m,
            bus_id,
            pair: Some((0.0, 0.0)),
            already_passive: true,
            error: None,
        });
    }
    let Some(exciter) = sys.case.machines[m].controllers.exciter else {
        return Ok(TuneOutcome {
            machine: m,
            bus_id,
            pair: None,
            already_passive: false,
            error: Some("bus violates the sweep but has no exciter to retune".into()),
        });
    };
    let constraints = TuningConstraints {
        k_a: exciter.k_a,
        t_a: exciter.t_a,
        margin: cfg.tuner.margin,
        max_tb: cfg.tuner.max_tb,
    };
    match tune_lag(
        |t_b, t_c| linearize_with_lag(sys, m, t_b, t_c),
        band,
        &constraints,
        &grid,
        eps,
    ) {
        Ok(pair) => Ok(TuneOutcome {
            machine: m,
            bus_id,
            pair: Some(pair),
            already_passive: false,
            error: None,
        }),
        Err(e @ TunerError::TuningFailed { .. }) => Ok(TuneOutcome {
            machine: m,
            bus_id,
            pair: None,
            already_passive: false,
            error: Some(e.to_string()),
        }),
        Err(other) => Err(other.into()),
    }
}

/// Linearizes every machine and closes the loop over the load-augmented
/// network reduced to the machine buses.
pub fn closed_loop_eigen(sys: &SystemModel) -> Result<EigenReport, PipelineError> {
    let lms: Vec<LinearBusModel> = (0..sys.models.len())
        .map(|m| sys.linearize_machine(m))
        .collect::<Result<_, _>>()?;
    let y_red = reduce_admittance(&sys.y_aug.to_complex(), &sys.ep.machine_buses)?;
    let h_red = assemble_block(&AdmittancePair::from_complex(&y_red))?;
    Ok(full_system_eigenanalysis(&lms, &h_red)?)
}

/// Integrates the configured scenario from the equilibrium.
pub fn simulate_scenario(
    sys: &SystemModel,
    scenario: &Scenario,
) -> Result<Trajectory, PipelineError> {
    Ok(simulate(
        &sys.models,
        &sys.ep.machine_buses,
        &sys.y_aug,
        &sys.ep.x_hat,
        scenario,
    )?)
}

/// Files written by a command plus a printable summary.
pub struct Artifacts {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub fn run_powerflow(
    case: &CaseFile,
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<Artifacts, PipelineError> {
    let indexed = case.index()?;
    let sys = prepare(&indexed, cfg)?;
    let path = out_dir.join("powerflow.csv");
    io::write_power_flow_csv(
        &path,
        &indexed.bus_ids,
        &sys.pf.voltages,
        &sys.pf.p_inj,
        &sys.pf.q_inj,
    )?;
    Ok(Artifacts {
        files: vec![path],
        summary: format!(
            "power flow converged in {} iterations, max mismatch {:.3e} pu; equilibrium residual {:.3e}",
            sys.pf.iterations, sys.pf.max_mismatch, sys.ep.residual_norm
        ),
    })
}

pub fn run_passivity(
    case: &CaseFile,
    cfg: &RunConfig,
    out_dir: &Path,
    bus_filter: Option<u32>,
) -> Result<Artifacts, PipelineError> {
    let indexed = case.index()?;
    let sys = prepare(&indexed, cfg)?;
    let only = match bus_filter {
        Some(id) => {
            let dense = indexed
                .dense_index(id)
                .ok_or(PipelineError::UnknownBus(id))?;
            Some(
                sys.ep
                    .machine_buses
                    .iter()
                    .position(|&b| b == dense)
                    .ok_or(PipelineError::NoMachineAt(id))?,
            )
        }
        None => None,
    };
    let sweeps = sweep_machines(&sys, cfg, only)?;
    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut n_passive = 0usize;
    for (m, report) in &sweeps {
        let bus_id = indexed.bus_ids[sys.ep.machine_buses[*m]];
        let path = out_dir.join(format!("sweep_bus_{bus_id}.csv"));
        io::write_sweep_csv(&path, report)?;
        files.push(path);
        if report.passive {
            n_passive += 1;
        }
        rows.push(PassivitySummaryRow {
            bus_id,
            hurwitz: report.hurwitz,
            passive: report.passive,
            band: report.violation_band,
            multi_band: report.multi_band,
        });
    }
    let summary_path = out_dir.join("passivity_summary.csv");
    io::write_passivity_summary_csv(&summary_path, &rows)?;
    files.push(summary_path);
    let cert_path = out_dir.join("network_certificate.csv");
    io::write_network_certificate_csv(&cert_path, &indexed.bus_ids, &sys.certificate)?;
    files.push(cert_path);
    Ok(Artifacts {
        files,
        summary: format!(
            "network certificate {} (min symmetric eigenvalue {:.3e}); {}/{} machine buses passive",
            if sys.certificate.passes { "passes" } else { "FAILS" },
            sys.certificate.min_symmetric_eigenvalue,
            n_passive,
            sweeps.len()
        ),
    })
}

pub fn run_tune(
    case: &CaseFile,
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<Artifacts, PipelineError> {
    let indexed = case.index()?;
    let sys = prepare(&indexed, cfg)?;
    let mut rows = Vec::new();
    let mut tuned_case = case.clone();
    let mut failures = Vec::new();
    for m in 0..sys.models.len() {
        let outcome = tune_machine(&sys, cfg, m)?;
        let (t_b, t_c) = outcome.pair.unwrap_or((0.0, 0.0));
        if let Some((t_b, t_c)) = outcome.pair {
            if !outcome.already_passive {
                let entry = tuned_case
                    .machines
                    .iter_mut()
                    .find(|e| e.bus == outcome.bus_id)
                    .expect("machine entry exists for tuned bus");
                if let Some(ref mut ex) = entry.exciter {
                    ex.t_b = t_b;
                    ex.t_c = t_c;
                }
            }
        } else {
            failures.push(format!(
                "bus {}: {}",
                outcome.bus_id,
                outcome.error.as_deref().unwrap_or("tuning failed")
            ));
        }
        rows.push(TuneSummaryRow {
            bus_id: outcome.bus_id,
            t_b,
            t_c,
            passive_after: outcome.pair.is_some(),
        });
    }
    let summary_path = out_dir.join("tune_summary.csv");
    io::write_tune_summary_csv(&summary_path, &rows)?;
    let case_path = out_dir.join("tuned_case.toml");
    io::write_case(&tuned_case, &case_path)?;
    let summary = if failures.is_empty() {
        format!(
            "all {} machine buses verified passive after tuning; constants written to {}",
            rows.len(),
            case_path.display()
        )
    } else {
        format!("tuning failed for: {}", failures.join("; "))
    };
    Ok(Artifacts {
        files: vec![summary_path, case_path],
        summary,
    })
}

pub fn run_eigen(
    case: &CaseFile,
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<Artifacts, PipelineError> {
    let indexed = case.index()?;
    let sys = prepare(&indexed, cfg)?;
    let report = closed_loop_eigen(&sys)?;
    let path = out_dir.join("eigen.csv");
    io::write_eigen_csv(&path, &report)?;
    Ok(Artifacts {
        files: vec![path],
        summary: format!(
            "{} eigenvalues, spectral abscissa {:.4}",
            report.eigenvalues.len(),
            report.spectral_abscissa()
        ),
    })
}

pub fn run_simulate(
    case: &CaseFile,
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<Artifacts, PipelineError> {
    let indexed = case.index()?;
    let sys = prepare(&indexed, cfg)?;
    let scenario = cfg.scenario_for(&indexed)?;
    let traj = simulate_scenario(&sys, &scenario)?;
    let path = out_dir.join("trajectory.csv");
    io::write_trajectory_csv(&path, &indexed.bus_ids, &traj, indexed.omega_s)?;
    let final_d_omega = traj
        .d_omega
        .iter()
        .map(|s| s.last().copied().unwrap_or(0.0).abs())
        .fold(0.0, f64::max);
    Ok(Artifacts {
        files: vec![path],
        summary: format!(
            "simulated {:.2} s with {} events; final max |d_omega| = {:.3e} rad/s",
            scenario.horizon,
            scenario.events.len(),
            final_d_omega
        ),
    })
}
