//! Case-file and run-configuration ingestion plus CSV artifact writers.
//!
//! Case files are TOML with typed sections (`[system]`, `[[bus]]`,
//! `[[branch]]`, `[[machine]]` with nested controller tables, `[[load]]`);
//! the exact grammar is documented in `docs/case-format.md`. Parsing
//! validates referential integrity and produces an indexed working form
//! with dense bus indices. All CSV output uses shortest round-trip float
//! formatting, so identical inputs produce byte-identical artifacts.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus_models::{
    ControllerParams, ExciterParams, GeneratorParams, GovernorParams, PssParams,
};
use crate::equilibrium::{BusKind, MachineSpec, PowerFlowSpec};
use crate::linear_analysis::{EigenReport, FrequencyGrid, PassivitySweepReport};
use crate::network::BranchSpec;
use crate::simulator::{LoadStepEvent, Scenario, Trajectory};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    WriteFile {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{entity} references unknown bus {bus_id}")]
    DanglingReference { entity: String, bus_id: u32 },
    #[error("duplicate bus id {0}")]
    DuplicateBusId(u32),
    #[error("bus {0} carries more than one machine")]
    DuplicateMachine(u32),
    #[error("case has no buses")]
    EmptyCase,
}

// ---------------------------------------------------------------------------
// Case file schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSection {
    /// Power base, MVA.
    pub base_mva: f64,
    /// Synchronous frequency, Hz (50 or 60).
    pub base_frequency_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKindEntry {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusEntry {
    pub id: u32,
    pub kind: BusKindEntry,
    /// Voltage setpoint for slack and PV buses, pu.
    #[serde(default = "default_one")]
    pub v_set: f64,
    /// Reference angle, degrees; meaningful for the slack bus.
    #[serde(default)]
    pub angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchEntry {
    pub from: u32,
    pub to: u32,
    /// Series resistance, pu.
    pub r: f64,
    /// Series reactance, pu.
    pub x: f64,
    /// Total line-charging susceptance, pu.
    #[serde(default)]
    pub b_shunt: f64,
    /// Off-nominal turns ratio; 1.0 for plain lines.
    #[serde(default = "default_one")]
    pub tap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernorEntry {
    /// Servo time constant, s.
    pub t_g: f64,
    /// Droop, rad/s of frequency deviation per pu of power.
    pub droop_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExciterEntry {
    pub k_a: f64,
    pub t_a: f64,
    /// Lag-stage denominator constant, s; 0 disables the stage.
    #[serde(default)]
    pub t_b: f64,
    /// Lag-stage numerator constant, s.
    #[serde(default)]
    pub t_c: f64,
    /// Declared voltage reference, pu; back-solved at equilibrium.
    #[serde(default = "default_one")]
    pub v_ref: f64,
    /// Load-compensation reactance of the regulated magnitude, pu.
    #[serde(default)]
    pub x_comp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PssEntry {
    pub enabled: bool,
    pub k_w: f64,
    pub t_w: f64,
    pub t_1: f64,
    pub t_2: f64,
    pub t_3: f64,
    pub t_4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineEntry {
    pub bus: u32,
    /// Inertia, pu power per (rad/s²).
    pub inertia: f64,
    /// Damping, pu power per (rad/s).
    pub damping: f64,
    pub xd: f64,
    pub xq: f64,
    pub xd_t: f64,
    pub xq_t: f64,
    pub td0_t: f64,
    pub tq0_t: f64,
    pub r_s: f64,
    /// Dispatch setpoint, pu; the PV injection for the power flow.
    pub p_set: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub governor: Option<GovernorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exciter: Option<ExciterEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pss: Option<PssEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadEntry {
    pub bus: u32,
    /// Active power draw, pu.
    pub p: f64,
    /// Reactive power draw, pu; negative values model shunt compensation.
    #[serde(default)]
    pub q: f64,
}

/// Complete parsed case file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFile {
    pub system: SystemSection,
    #[serde(rename = "bus")]
    pub buses: Vec<BusEntry>,
    #[serde(rename = "branch", default)]
    pub branches: Vec<BranchEntry>,
    #[serde(rename = "machine", default)]
    pub machines: Vec<MachineEntry>,
    #[serde(rename = "load", default)]
    pub loads: Vec<LoadEntry>,
}

fn default_one() -> f64 {
    1.0
}

pub fn parse_case_str(text: &str, origin: &Path) -> Result<CaseFile, IoError> {
    let case: CaseFile = toml::from_str(text).map_err(|e| IoError::Schema {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    if case.buses.is_empty() {
        return Err(IoError::EmptyCase);
    }
    Ok(case)
}

pub fn parse_case(path: &Path) -> Result<CaseFile, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_case_str(&text, path)
}

pub fn emit_case(case: &CaseFile) -> String {
    toml::to_string_pretty(case).expect("case files serialize to TOML")
}

pub fn write_case(case: &CaseFile, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, emit_case(case)).map_err(|source| IoError::WriteFile {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Indexed working form
// ---------------------------------------------------------------------------

/// A validated case with dense, sorted bus indices.
#[derive(Debug, Clone)]
pub struct IndexedCase {
    pub base_mva: f64,
    pub base_frequency_hz: f64,
    /// Synchronous angular frequency `2π·f_s`, rad/s.
    pub omega_s: f64,
    /// External id per dense index, ascending.
    pub bus_ids: Vec<u32>,
    pub kinds: Vec<BusKind>,
    pub v_set: Vec<f64>,
    pub slack_angle: f64,
    pub branches: Vec<BranchSpec>,
    /// Machines, ordered by dense bus index.
    pub machines: Vec<MachineSpec>,
    /// Loads as `(dense bus, p, q)`.
    pub loads: Vec<(usize, f64, f64)>,
}

impl IndexedCase {
    pub fn n_buses(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn dense_index(&self, bus_id: u32) -> Option<usize> {
        self.bus_ids.binary_search(&bus_id).ok()
    }

    pub fn machine_buses(&self) -> Vec<usize> {
        self.machines.iter().map(|m| m.bus).collect()
    }

    /// Net-injection power flow inputs: machine dispatch minus load draw.
    pub fn power_flow_spec(&self) -> PowerFlowSpec {
        let n = self.n_buses();
        let mut p_inj = vec![0.0; n];
        let mut q_inj = vec![0.0; n];
        for m in &self.machines {
            p_inj[m.bus] += m.generator.p_ref;
        }
        for &(bus, p, q) in &self.loads {
            p_inj[bus] -= p;
            q_inj[bus] -= q;
        }
        PowerFlowSpec {
            kinds: self.kinds.clone(),
            p_inj,
            q_inj,
            v_set: self.v_set.clone(),
            slack_angle: self.slack_angle,
        }
    }
}

impl CaseFile {
    /// Validates referential integrity and produces the indexed form.
    pub fn index(&self) -> Result<IndexedCase, IoError> {
        let mut bus_ids: Vec<u32> = self.buses.iter().map(|b| b.id).collect();
        bus_ids.sort_unstable();
        if let Some(dup) = bus_ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(IoError::DuplicateBusId(dup[0]));
        }
        let lookup = |entity: &str, id: u32| -> Result<usize, IoError> {
            bus_ids
                .binary_search(&id)
                .map_err(|_| IoError::DanglingReference {
                    entity: entity.to_string(),
                    bus_id: id,
                })
        };

        let n = bus_ids.len();
        let mut kinds = vec![BusKind::Pq; n];
        let mut v_set = vec![1.0; n];
        let mut slack_angle = 0.0;
        for b in &self.buses {
            let idx = lookup("bus", b.id)?;
            kinds[idx] = match b.kind {
                BusKindEntry::Slack => BusKind::Slack,
                BusKindEntry::Pv => BusKind::Pv,
                BusKindEntry::Pq => BusKind::Pq,
            };
            v_set[idx] = b.v_set;
            if b.kind == BusKindEntry::Slack {
                slack_angle = b.angle_deg.to_radians();
            }
        }

        let mut branches = Vec::with_capacity(self.branches.len());
        for br in &self.branches {
            branches.push(BranchSpec {
                from_bus: lookup("branch", br.from)?,
                to_bus: lookup("branch", br.to)?,
                series_resistance: br.r,
                series_reactance: br.x,
                shunt_susceptance_total: br.b_shunt,
                tap_ratio: br.tap,
            });
        }

        let mut machines = Vec::with_capacity(self.machines.len());
        for m in &self.machines {
            let bus = lookup("machine", m.bus)?;
            machines.push(MachineSpec {
                bus,
                generator: GeneratorParams {
                    m: m.inertia,
                    d: m.damping,
                    xd: m.xd,
                    xq: m.xq,
                    xd_t: m.xd_t,
                    xq_t: m.xq_t,
                    td0_t: m.td0_t,
                    tq0_t: m.tq0_t,
                    r_s: m.r_s,
                    p_ref: m.p_set,
                },
                controllers: ControllerParams {
                    governor: m.governor.as_ref().map(|g| GovernorParams {
                        t_g: g.t_g,
                        droop_r: g.droop_r,
                    }),
                    exciter: m.exciter.as_ref().map(|e| ExciterParams {
                        k_a: e.k_a,
                        t_a: e.t_a,
                        t_b: e.t_b,
                        t_c: e.t_c,
                        v_ref: e.v_ref,
                        x_comp: e.x_comp,
                    }),
                    pss: m.pss.as_ref().map_or(PssParams::disabled(), |p| PssParams {
                        enabled: p.enabled,
                        k_w: p.k_w,
                        t_w: p.t_w,
                        t_1: p.t_1,
                        t_2: p.t_2,
                        t_3: p.t_3,
                        t_4: p.t_4,
                    }),
                },
            });
        }
        machines.sort_by_key(|m| m.bus);
        if let Some(w) = machines.windows(2).find(|w| w[0].bus == w[1].bus) {
            return Err(IoError::DuplicateMachine(bus_ids[w[0].bus]));
        }

        let mut loads = Vec::with_capacity(self.loads.len());
        for l in &self.loads {
            loads.push((lookup("load", l.bus)?, l.p, l.q));
        }

        Ok(IndexedCase {
            base_mva: self.system.base_mva,
            base_frequency_hz: self.system.base_frequency_hz,
            omega_s: 2.0 * std::f64::consts::PI * self.system.base_frequency_hz,
            bus_ids,
            kinds,
            v_set,
            slack_angle,
            branches,
            machines,
            loads,
        })
    }
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSection {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            lo: 1e-2,
            hi: 1e3,
            points: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceSection {
    pub passivity_eps: f64,
    pub power_flow: f64,
    pub equilibrium: f64,
    pub max_power_flow_iterations: usize,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        Self {
            passivity_eps: 1e-9,
            power_flow: 1e-8,
            equilibrium: 1e-8,
            max_power_flow_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TunerSection {
    pub margin: f64,
    pub max_tb: f64,
}

impl Default for TunerSection {
    fn default() -> Self {
        Self {
            margin: 3.0,
            max_tb: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEntry {
    pub time: f64,
    /// External bus id.
    pub bus: u32,
    #[serde(default)]
    pub delta_p: f64,
    #[serde(default)]
    pub delta_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSection {
    pub horizon: f64,
    pub dt: f64,
    #[serde(rename = "event")]
    pub events: Vec<EventEntry>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            dt: 0.005,
            events: Vec::new(),
        }
    }
}

/// Complete run configuration; every section is optional in the file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub grid: GridSection,
    pub tolerances: ToleranceSection,
    pub tuner: TunerSection,
    pub scenario: ScenarioSection,
}

impl RunConfig {
    pub fn frequency_grid(&self) -> FrequencyGrid {
        FrequencyGrid::log_spaced(self.grid.lo, self.grid.hi, self.grid.points)
    }

    /// Resolves the scenario's external bus ids against a case.
    pub fn scenario_for(&self, case: &IndexedCase) -> Result<Scenario, IoError> {
        let mut events = Vec::with_capacity(self.scenario.events.len());
        for ev in &self.scenario.events {
            let bus = case
                .dense_index(ev.bus)
                .ok_or(IoError::DanglingReference {
                    entity: "scenario event".to_string(),
                    bus_id: ev.bus,
                })?;
            events.push(LoadStepEvent {
                time: ev.time,
                bus,
                delta_p: ev.delta_p,
                delta_q: ev.delta_q,
            });
        }
        Ok(Scenario {
            horizon: self.scenario.horizon,
            dt: self.scenario.dt,
            events,
        })
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| IoError::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// CSV artifacts
// ---------------------------------------------------------------------------

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, IoError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| IoError::WriteFile {
            path: path.to_path_buf(),
            source,
        })?;
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path).map_err(
        |source| IoError::WriteFile {
            path: path.to_path_buf(),
            source,
        },
    )?))
}

fn finish(mut w: std::io::BufWriter<std::fs::File>, path: &Path) -> Result<(), IoError> {
    w.flush().map_err(|source| IoError::WriteFile {
        path: path.to_path_buf(),
        source,
    })
}

macro_rules! w {
    ($w:expr, $path:expr, $($arg:tt)*) => {
        writeln!($w, $($arg)*).map_err(|source| IoError::WriteFile {
            path: $path.to_path_buf(),
            source,
        })?
    };
}

pub fn write_power_flow_csv(
    path: &Path,
    bus_ids: &[u32],
    voltages: &[crate::frames::ComplexPhasor],
    p_inj: &[f64],
    q_inj: &[f64],
) -> Result<(), IoError> {
    let mut out = create(path)?;
    w!(out, path, "bus,v_mag_pu,v_angle_rad,p_inj_pu,q_inj_pu");
    for (k, &id) in bus_ids.iter().enumerate() {
        w!(
            out,
            path,
            "{},{},{},{},{}",
            id,
            voltages[k].magnitude(),
            voltages[k].angle(),
            p_inj[k],
            q_inj[k]
        );
    }
    finish(out, path)
}

pub fn write_sweep_csv(path: &Path, report: &PassivitySweepReport) -> Result<(), IoError> {
    let mut out = create(path)?;
    w!(out, path, "omega_rad_per_s,min_eig");
    for (omega, eig) in report.grid.iter().zip(&report.min_eig) {
        w!(out, path, "{},{}", omega, eig);
    }
    finish(out, path)
}

pub struct PassivitySummaryRow {
    pub bus_id: u32,
    pub hurwitz: bool,
    pub passive: bool,
    pub band: Option<(f64, f64)>,
    pub multi_band: bool,
}

pub fn write_passivity_summary_csv(
    path: &Path,
    rows: &[PassivitySummaryRow],
) -> Result<(), IoError> {
    let mut out = create(path)?;
    w!(
        out,
        path,
        "bus,hurwitz,passive,band_lo_rad_per_s,band_hi_rad_per_s,multi_band"
    );
    for r in rows {
        let (lo, hi) = match r.band {
            Some((lo, hi)) => (lo.to_string(), hi.to_string()),
            None => (String::new(), String::new()),
        };
        w!(
            out,
            path,
            "{},{},{},{},{},{}",
            r.bus_id,
            r.hurwitz,
            r.passive,
            lo,
            hi,
            r.multi_band
        );
    }
    finish(out, path)
}

pub fn write_network_certificate_csv(
    path: &Path,
    bus_ids: &[u32],
    cert: &crate::network::PassivityCertificate,
) -> Result<(), IoError> {
    let mut out = create(path)?;
    w!(
        out,
        path,
        "# min_symmetric_eigenvalue = {}, passes = {}",
        cert.min_symmetric_eigenvalue,
        cert.passes
    );
    w!(out, path, "bus,disc_center,disc_radius,nonnegative");
    for d in &cert.discs {
        w!(
            out,
            path,
            "{},{},{},{}",
            bus_ids[d.bus],
            d.center,
            d.radius,
            d.nonnegative
        );
    }
    finish(out, path)
}

pub fn write_eigen_csv(path: &Path, report: &EigenReport) -> Result<(), IoError> {
    let mut out = create(path)?;
    w!(out, path, "re_per_s,im_per_s,damping_ratio");
    for (z, zeta) in report.eigenvalues.iter().zip(&report.damping_ratios) {
        w!(out, path, "{},{},{}", z.re, z.im, zeta);
    }
    finish(out, path)
}

pub struct TuneSummaryRow {
    pub bus_id: u32,
    pub t_b: f64,
    pub t_c: f64,
    pub passive_after: bool,
}

pub fn write_tune_summary_csv(path: &Path, rows: &[TuneSummaryRow]) -> Result<(), IoError> {
    let mut out = create(path)?;
    w!(out, path, "bus,t_b_s,t_c_s,passive_after");
    for r in rows {
        w!(
            out,
            path,
            "{},{},{},{}",
            r.bus_id,
            r.t_b,
            r.t_c,
            r.passive_after
        );
    }
    finish(out, path)
}

/// Trajectory CSV: one row per machine bus per sample. Speed deviations are
/// rad/s; the header comment carries the conversion constant to per-unit.
pub fn write_trajectory_csv(
    path: &Path,
    bus_ids: &[u32],
    traj: &Trajectory,
    omega_s: f64,
) -> Result<(), IoError> {
    let mut out = create(path)?;
    w!(
        out,
        path,
        "# d_omega is rad/s; divide by omega_s = {} rad/s for per-unit speed deviation",
        omega_s
    );
    w!(
        out,
        path,
        "t_s,bus,d_omega_rad_per_s,v_mag_pu,delta_rad,i_a_pu,i_b_pu"
    );
    for (s, &t) in traj.times.iter().enumerate() {
        for (m, &bus) in traj.machine_buses.iter().enumerate() {
            w!(
                out,
                path,
                "{},{},{},{},{},{},{}",
                t,
                bus_ids[bus],
                traj.d_omega[m][s],
                traj.v_mag[m][s],
                traj.delta[m][s],
                traj.i_a[m][s],
                traj.i_b[m][s]
            );
        }
    }
    finish(out, path)
}
