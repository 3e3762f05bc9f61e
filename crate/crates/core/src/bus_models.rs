//! Per-bus nonlinear dynamics: a fourth-order synchronous machine (with
//! reduced third- and second-order variants), a droop turbine governor, an
//! exciter with an optional phase-lag stage, and a speed-input power system
//! stabilizer, composed into one 2-input/2-output system in the system
//! reference frame.
//!
//! The assembled model takes `u = (−I_a, −I_b)`, the negated components of
//! the net injected current, and produces `y = (V_a, V_b)`, the bus voltage
//! components. All rotor-frame quantities are mapped through the frame
//! rotation at the machine angle so the model composes directly with the
//! network map.

use thiserror::Error;

use crate::frames::{to_machine_frame, to_system_frame, ComplexPhasor, FrameAngle};

#[derive(Debug, Error)]
pub enum BusModelError {
    #[error("invalid generator parameter: {0}")]
    InvalidGeneratorParam(String),
    #[error("invalid time constant: {0}")]
    InvalidTimeConstant(String),
}

/// Synchronous machine constants, per-unit on the system base.
///
/// `m` is in pu power per (rad/s²) and `d` in pu power per (rad/s); the
/// rotor speed deviation state is kept in rad/s throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    /// Inertia constant.
    pub m: f64,
    /// Damping coefficient.
    pub d: f64,
    /// d-axis synchronous reactance.
    pub xd: f64,
    /// q-axis synchronous reactance.
    pub xq: f64,
    /// d-axis transient reactance.
    pub xd_t: f64,
    /// q-axis transient reactance.
    pub xq_t: f64,
    /// d-axis open-circuit time constant, seconds.
    pub td0_t: f64,
    /// q-axis open-circuit time constant, seconds.
    pub tq0_t: f64,
    /// Stator winding resistance.
    pub r_s: f64,
    /// Mechanical power setpoint.
    pub p_ref: f64,
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<(), BusModelError> {
        let fail = |msg: String| Err(BusModelError::InvalidGeneratorParam(msg));
        if !(self.m > 0.0) {
            return fail(format!("inertia m = {} must be positive", self.m));
        }
        if !(self.td0_t > 0.0 && self.tq0_t > 0.0) {
            return fail("open-circuit time constants must be positive".into());
        }
        if !(self.xd_t > 0.0 && self.xd >= self.xd_t) {
            return fail(format!(
                "need xd >= xd_t > 0, got xd = {}, xd_t = {}",
                self.xd, self.xd_t
            ));
        }
        if !(self.xq_t > 0.0 && self.xq >= self.xq_t) {
            return fail(format!(
                "need xq >= xq_t > 0, got xq = {}, xq_t = {}",
                self.xq, self.xq_t
            ));
        }
        if self.r_s < 0.0 {
            return fail(format!("stator resistance {} negative", self.r_s));
        }
        Ok(())
    }
}

/// Machine differential states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineState {
    /// Rotor angle relative to the system frame, rad.
    pub delta: f64,
    /// Rotor speed deviation, rad/s.
    pub d_omega: f64,
    /// q-axis transient emf.
    pub eq_t: f64,
    /// d-axis transient emf.
    pub ed_t: f64,
}

/// Droop turbine governor: `T_g·dP_m = −P_m + P_ref − Δω/R`.
///
/// `droop_r` is in rad/s of frequency deviation per pu of power, so a 5 %
/// droop on a 60 Hz system is `0.05·2π·60 ≈ 18.85`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GovernorParams {
    pub t_g: f64,
    pub droop_r: f64,
}

/// Exciter `E_f = K_a/(1+sT_a) · (1+sT_c)/(1+sT_b) · E_g` acting on the
/// voltage error `E_g = V_ref − |V| + v_pss`.
///
/// `t_b = t_c = 0` bypasses the lag stage, leaving the plain first-order
/// exciter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExciterParams {
    pub k_a: f64,
    pub t_a: f64,
    pub t_b: f64,
    pub t_c: f64,
    pub v_ref: f64,
    /// Load-compensation reactance for the regulated magnitude
    /// `|V + (R + jX_comp)·I|`; 0 regulates the raw terminal voltage.
    pub x_comp: f64,
}

impl ExciterParams {
    pub fn has_lag(&self) -> bool {
        self.t_b > 0.0
    }

    pub fn validate(&self) -> Result<(), BusModelError> {
        if !(self.t_a > 0.0) {
            return Err(BusModelError::InvalidTimeConstant(format!(
                "exciter t_a = {} must be positive",
                self.t_a
            )));
        }
        if self.t_b < 0.0 || (self.t_b > 0.0 && self.t_c < 0.0) {
            return Err(BusModelError::InvalidTimeConstant(format!(
                "lag stage needs t_b >= 0 and t_c >= 0, got t_b = {}, t_c = {}",
                self.t_b, self.t_c
            )));
        }
        Ok(())
    }

    /// Returns a copy with the lag constants replaced.
    pub fn with_lag(&self, t_b: f64, t_c: f64) -> Self {
        Self {
            t_b,
            t_c,
            ..*self
        }
    }
}

/// Washout plus two lead-lag stages driven by rotor speed deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PssParams {
    pub enabled: bool,
    pub k_w: f64,
    pub t_w: f64,
    pub t_1: f64,
    pub t_2: f64,
    pub t_3: f64,
    pub t_4: f64,
}

impl PssParams {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            k_w: 0.0,
            t_w: 1.0,
            t_1: 1.0,
            t_2: 1.0,
            t_3: 1.0,
            t_4: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), BusModelError> {
        if self.enabled
            && !(self.t_w > 0.0 && self.t_2 > 0.0 && self.t_4 > 0.0 && self.t_1 > 0.0 && self.t_3 > 0.0)
        {
            return Err(BusModelError::InvalidTimeConstant(
                "enabled stabilizer needs positive time constants".into(),
            ));
        }
        Ok(())
    }
}

/// Controller complement of one machine. `None` means the controller is not
/// installed and the corresponding setpoint is held constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    pub governor: Option<GovernorParams>,
    pub exciter: Option<ExciterParams>,
    pub pss: PssParams,
}

impl ControllerParams {
    pub fn none() -> Self {
        Self {
            governor: None,
            exciter: None,
            pss: PssParams::disabled(),
        }
    }
}

/// Model order for the machine emf dynamics; reduced orders freeze the
/// corresponding transient emf states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MachineOrder {
    #[default]
    Fourth,
    /// `E'_d` held constant.
    Third,
    /// `E'_q` and `E'_d` held constant (classical model).
    Second,
}

/// Electrical power delivered at the stator terminals plus stator losses:
/// `P^e = E'_q I_q + E'_d I_d + (X'_d − X'_q) I_d I_q`.
pub fn electrical_power(s: &MachineState, iq: f64, id: f64, p: &GeneratorParams) -> f64 {
    s.eq_t * iq + s.ed_t * id + (p.xd_t - p.xq_t) * id * iq
}

/// Fourth-order machine derivatives `[dδ, dΔω, dE'_q, dE'_d]` given stator
/// currents in the machine frame, mechanical power and field voltage.
pub fn machine_derivatives(
    s: &MachineState,
    iq: f64,
    id: f64,
    p: &GeneratorParams,
    pm: f64,
    ef: f64,
) -> [f64; 4] {
    let pe = electrical_power(s, iq, id, p);
    [
        s.d_omega,
        (pm - pe - p.d * s.d_omega) / p.m,
        (ef - s.eq_t + id * (p.xd - p.xd_t)) / p.td0_t,
        (-s.ed_t - iq * (p.xq - p.xq_t)) / p.tq0_t,
    ]
}

/// Stator terminal voltage in the machine frame:
/// `[V_q; V_d] = [E'_q; E'_d] − [[R, −X'_d],[X'_q, R]]·[I_q; I_d]`.
pub fn stator_output_dq(s: &MachineState, iq: f64, id: f64, p: &GeneratorParams) -> (f64, f64) {
    (
        s.eq_t - p.r_s * iq + p.xd_t * id,
        s.ed_t - p.xq_t * iq - p.r_s * id,
    )
}

/// Terminal voltage components in the system frame for given system-frame
/// current components: the stator equation conjugated by the frame rotation.
pub fn bus_output_system_frame(
    s: &MachineState,
    ia: f64,
    ib: f64,
    p: &GeneratorParams,
) -> ComplexPhasor {
    let delta = FrameAngle::new(s.delta);
    let (iq, id) = to_machine_frame(ComplexPhasor::new(ia, ib), delta);
    let (vq, vd) = stator_output_dq(s, iq, id, p);
    to_system_frame(vq, vd, delta)
}

/// The voltage magnitude the excitation system regulates: the terminal
/// voltage compensated by the reactance `x_comp`, `|V̄ + (R + jX_c)·Ī|`.
///
/// Full compensation (`x_comp = X_q`) measures the emf behind the q-axis
/// synchronous reactance, which is first-order insensitive to current at
/// dc: the voltage loop then adds no steady-state asymmetry to the
/// current-to-voltage map. A raw terminal regulator (`x_comp = 0`) skews
/// that map at dc by an amount of order half the synchronous reactance
/// that no lag compensation can remove; intermediate values trade dc skew
/// against mid-band correction of the stator's operational-reactance
/// imbalance.
pub fn regulated_voltage(
    s: &MachineState,
    ia: f64,
    ib: f64,
    p: &GeneratorParams,
    x_comp: f64,
) -> f64 {
    let delta = FrameAngle::new(s.delta);
    let (iq, id) = to_machine_frame(ComplexPhasor::new(ia, ib), delta);
    let (vq, vd) = stator_output_dq(s, iq, id, p);
    // V + (R + jX_c)·I in machine-frame components (q real, d imaginary).
    let wq = vq + p.r_s * iq - x_comp * id;
    let wd = vd + x_comp * iq + p.r_s * id;
    wq.hypot(wd)
}

/// Governor state derivative `dP_m/dt`.
pub fn governor_derivative(pm: f64, d_omega: f64, p_ref: f64, gp: &GovernorParams) -> f64 {
    (-pm + p_ref - d_omega / gp.droop_r) / gp.t_g
}

/// Exciter state derivatives and the produced field voltage.
///
/// With the lag stage active the states are `[x_lag, x_f]`; without it just
/// `[x_f]`. The lag stage is realized with feedthrough `T_c/T_b` so the
/// transfer function matches exactly, including unity dc gain.
pub fn exciter_derivatives(
    xe: &[f64],
    eg: f64,
    ep: &ExciterParams,
) -> Result<(Vec<f64>, f64), BusModelError> {
    ep.validate()?;
    if ep.has_lag() {
        let (x_lag, x_f) = (xe[0], xe[1]);
        let ratio = ep.t_c / ep.t_b;
        let y_lag = ratio * eg + (1.0 - ratio) * x_lag;
        Ok((
            vec![
                (eg - x_lag) / ep.t_b,
                (ep.k_a * y_lag - x_f) / ep.t_a,
            ],
            x_f,
        ))
    } else {
        let x_f = xe[0];
        Ok((vec![(ep.k_a * eg - x_f) / ep.t_a], x_f))
    }
}

/// Number of exciter states for the given parameters.
pub fn exciter_state_dim(ep: &ExciterParams) -> usize {
    if ep.has_lag() {
        2
    } else {
        1
    }
}

/// Stabilizer state derivatives and its output signal.
///
/// States are `[x_w, x_1, x_2]` for the washout and the two lead-lag
/// stages; a disabled stabilizer has no states and zero output.
pub fn pss_derivatives(
    xp: &[f64],
    d_omega: f64,
    pp: &PssParams,
) -> Result<(Vec<f64>, f64), BusModelError> {
    pp.validate()?;
    if !pp.enabled {
        return Ok((Vec::new(), 0.0));
    }
    let (x_w, x_1, x_2) = (xp[0], xp[1], xp[2]);
    let y_w = pp.k_w * (d_omega - x_w);
    let r1 = pp.t_1 / pp.t_2;
    let y_1 = r1 * y_w + (1.0 - r1) * x_1;
    let r2 = pp.t_3 / pp.t_4;
    let y_2 = r2 * y_1 + (1.0 - r2) * x_2;
    Ok((
        vec![
            (d_omega - x_w) / pp.t_w,
            (y_w - x_1) / pp.t_2,
            (y_1 - x_2) / pp.t_4,
        ],
        y_2,
    ))
}

pub fn pss_state_dim(pp: &PssParams) -> usize {
    if pp.enabled {
        3
    } else {
        0
    }
}

/// A nonlinear state-space system with two inputs and two outputs.
pub trait DynamicModel {
    fn state_dim(&self) -> usize;
    /// Time derivative of the state for input `u`.
    fn derivatives(&self, x: &[f64], u: [f64; 2]) -> Vec<f64>;
    /// Output for state `x` and input `u`.
    fn output(&self, x: &[f64], u: [f64; 2]) -> [f64; 2];
}

/// Complete bus model: machine, governor, exciter and stabilizer stacked
/// into one state vector.
///
/// State layout: `[δ, Δω, E'_q, E'_d]`, then `[P_m]` if a governor is
/// installed, then the exciter states, then the stabilizer states.
///
/// Immutable after assembly; derivative and output evaluation is pure.
#[derive(Debug, Clone, PartialEq)]
pub struct BusModel {
    pub generator: GeneratorParams,
    pub controllers: ControllerParams,
    /// Constant field voltage used when no exciter is installed.
    pub fixed_field_voltage: f64,
    pub order: MachineOrder,
}

impl BusModel {
    pub fn new(generator: GeneratorParams, controllers: ControllerParams) -> Self {
        Self {
            generator,
            controllers,
            fixed_field_voltage: 1.0,
            order: MachineOrder::Fourth,
        }
    }

    pub fn with_fixed_field_voltage(mut self, ef: f64) -> Self {
        self.fixed_field_voltage = ef;
        self
    }

    pub fn with_order(mut self, order: MachineOrder) -> Self {
        self.order = order;
        self
    }

    /// Index of the governor state, if installed.
    pub fn governor_index(&self) -> Option<usize> {
        self.controllers.governor.map(|_| 4)
    }

    /// Index range of the exciter states, if installed.
    pub fn exciter_range(&self) -> Option<std::ops::Range<usize>> {
        self.controllers.exciter.map(|ep| {
            let start = 4 + self.controllers.governor.map_or(0, |_| 1);
            start..start + exciter_state_dim(&ep)
        })
    }

    /// Index range of the stabilizer states, if enabled.
    pub fn pss_range(&self) -> Option<std::ops::Range<usize>> {
        if !self.controllers.pss.enabled {
            return None;
        }
        let start = 4
            + self.controllers.governor.map_or(0, |_| 1)
            + self
                .controllers
                .exciter
                .map_or(0, |ep| exciter_state_dim(&ep));
        Some(start..start + 3)
    }

    pub fn machine_state(&self, x: &[f64]) -> MachineState {
        MachineState {
            delta: x[0],
            d_omega: x[1],
            eq_t: x[2],
            ed_t: x[3],
        }
    }

    /// Builds the stacked equilibrium state vector from the machine state
    /// and steady controller values. Stabilizer states are zero at any
    /// equilibrium because the washout blocks dc.
    pub fn stack_equilibrium_state(&self, ms: &MachineState, pm: f64, ef: f64, eg: f64) -> Vec<f64> {
        let mut x = vec![ms.delta, ms.d_omega, ms.eq_t, ms.ed_t];
        if self.controllers.governor.is_some() {
            x.push(pm);
        }
        if let Some(ep) = self.controllers.exciter {
            if ep.has_lag() {
                x.push(eg);
            }
            x.push(ef);
        }
        if self.controllers.pss.enabled {
            x.extend_from_slice(&[0.0, 0.0, 0.0]);
        }
        x
    }
}

/// The certification view of a bus: the same dynamics with inputs and
/// outputs expressed in the machine's own rotating frame.
///
/// In the local frame the frame maps drop out and the rotor angle decouples
/// (nothing reads it), so the state stack loses its first entry. This is
/// the model the decentralized passivity test runs on: the port inner
/// product `uᵀy` is invariant under the simultaneous orthogonal rotation of
/// both port vectors, so a certificate here composes with the network
/// certificate exactly as the system-frame one would — while the isolated
/// bus keeps the open-loop stability that an absolute-current termination
/// destroys.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBusModel {
    pub inner: BusModel,
}

impl LocalBusModel {
    pub fn new(inner: BusModel) -> Self {
        Self { inner }
    }

    fn lift(&self, x: &[f64]) -> Vec<f64> {
        let mut full = Vec::with_capacity(x.len() + 1);
        full.push(0.0);
        full.extend_from_slice(x);
        full
    }
}

impl DynamicModel for LocalBusModel {
    fn state_dim(&self) -> usize {
        self.inner.state_dim() - 1
    }

    fn derivatives(&self, x: &[f64], u: [f64; 2]) -> Vec<f64> {
        let full = self.lift(x);
        let mut dx = self.inner.derivatives(&full, u);
        dx.remove(0);
        dx
    }

    fn output(&self, x: &[f64], u: [f64; 2]) -> [f64; 2] {
        self.inner.output(&self.lift(x), u)
    }
}

impl DynamicModel for BusModel {
    fn state_dim(&self) -> usize {
        4 + self.controllers.governor.map_or(0, |_| 1)
            + self
                .controllers
                .exciter
                .map_or(0, |ep| exciter_state_dim(&ep))
            + pss_state_dim(&self.controllers.pss)
    }

    fn derivatives(&self, x: &[f64], u: [f64; 2]) -> Vec<f64> {
        let p = &self.generator;
        let ms = self.machine_state(x);
        let (ia, ib) = (-u[0], -u[1]);
        let delta = FrameAngle::new(ms.delta);
        let (iq, id) = to_machine_frame(ComplexPhasor::new(ia, ib), delta);

        let mut dx = vec![0.0; self.state_dim()];

        // Stabilizer feeds the exciter error; it reads the rotor speed.
        let (pss_dx, v_pss) = if let Some(range) = self.pss_range() {
            let (dxp, out) = pss_derivatives(&x[range.clone()], ms.d_omega, &self.controllers.pss)
                .expect("validated at assembly");
            (Some((range, dxp)), out)
        } else {
            (None, 0.0)
        };

        let ef = if let Some(ep) = self.controllers.exciter {
            let range = self.exciter_range().expect("exciter installed");
            let ec = regulated_voltage(&ms, ia, ib, p, ep.x_comp);
            let eg = ep.v_ref - ec + v_pss;
            let (dxe, ef) =
                exciter_derivatives(&x[range.clone()], eg, &ep).expect("validated at assembly");
            dx[range].copy_from_slice(&dxe);
            ef
        } else {
            self.fixed_field_voltage
        };

        let pm = if let Some(gp) = self.controllers.governor {
            let gi = self.governor_index().expect("governor installed");
            dx[gi] = governor_derivative(x[gi], ms.d_omega, p.p_ref, &gp);
            x[gi]
        } else {
            p.p_ref
        };

        let md = machine_derivatives(&ms, iq, id, p, pm, ef);
        dx[..4].copy_from_slice(&md);
        match self.order {
            MachineOrder::Fourth => {}
            MachineOrder::Third => dx[3] = 0.0,
            MachineOrder::Second => {
                dx[2] = 0.0;
                dx[3] = 0.0;
            }
        }

        if let Some((range, dxp)) = pss_dx {
            dx[range].copy_from_slice(&dxp);
        }
        dx
    }

    fn output(&self, x: &[f64], u: [f64; 2]) -> [f64; 2] {
        let ms = self.machine_state(x);
        let v = bus_output_system_frame(&ms, -u[0], -u[1], &self.generator);
        [v.re, v.im]
    }
}
