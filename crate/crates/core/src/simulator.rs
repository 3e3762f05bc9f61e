//! Nonlinear time-domain simulation of the interconnected bus/network
//! system under load-step disturbances.
//!
//! The network stays algebraic: at every integrator stage the bus outputs
//! `V = E(x, δ) − Z(δ)·I` and the network relation `I = H·V` are resolved
//! jointly by one linear solve in the stacked voltage components. Buses
//! without machines carry the zero-injection constraint instead of a stator
//! equation (their loads having been folded into the augmented admittance
//! diagonal), so the same solve covers mixed machine/load topologies.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::bus_models::{BusModel, DynamicModel};
use crate::frames::{to_system_frame, ComplexPhasor, FrameAngle};
use crate::network::{assemble_block, AdmittancePair, NetworkBlockMatrix, NetworkError};

/// Machine-bus voltages below this floor abort the run: the exciter input
/// |V| loses differentiability at zero and the operating point is physically
/// meaningless well before that.
pub const VOLTAGE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("interconnection is ill-posed (interface matrix singular)")]
    IllPosedInterconnection,
    #[error("state became non-finite at t = {time:.4} s")]
    NonFiniteState { time: f64 },
    #[error("voltage collapsed below {VOLTAGE_FLOOR} pu at bus {bus} at t = {time:.4} s")]
    VoltageCollapse { time: f64, bus: usize },
    #[error("cannot apply load step at bus {bus}: voltage magnitude {v_mag:.2e} too small")]
    VoltageCollapseAtEvent { bus: usize, v_mag: f64 },
    #[error("invalid scenario: {0}")]
    BadScenario(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// A sudden constant-power load change at one bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadStepEvent {
    pub time: f64,
    pub bus: usize,
    pub delta_p: f64,
    pub delta_q: f64,
}

/// Simulation horizon, step and event list.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub horizon: f64,
    pub dt: f64,
    pub events: Vec<LoadStepEvent>,
}

impl Scenario {
    pub fn quiet(horizon: f64, dt: f64) -> Self {
        Self {
            horizon,
            dt,
            events: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SimulatorError> {
        if !(self.dt > 0.0) {
            return Err(SimulatorError::BadScenario(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(SimulatorError::BadScenario(format!(
                "horizon = {} must be positive",
                self.horizon
            )));
        }
        let mut last = f64::NEG_INFINITY;
        for ev in &self.events {
            if ev.time < 0.0 || ev.time > self.horizon {
                return Err(SimulatorError::BadScenario(format!(
                    "event at t = {} outside horizon {}",
                    ev.time, self.horizon
                )));
            }
            if ev.time < last {
                return Err(SimulatorError::BadScenario(
                    "events must be sorted by time".into(),
                ));
            }
            last = ev.time;
        }
        Ok(())
    }
}

/// Sampled response of the interconnected system. Series are indexed
/// `[machine][sample]` and aligned with `times`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Buses carrying the recorded machines.
    pub machine_buses: Vec<usize>,
    /// Rotor speed deviations, rad/s.
    pub d_omega: Vec<Vec<f64>>,
    /// Terminal voltage magnitudes, pu.
    pub v_mag: Vec<Vec<f64>>,
    /// Rotor angles, rad.
    pub delta: Vec<Vec<f64>>,
    /// Net injected current a-components, pu.
    pub i_a: Vec<Vec<f64>>,
    /// Net injected current b-components, pu.
    pub i_b: Vec<Vec<f64>>,
}

/// Bus voltages and net injected currents consistent with both the bus
/// output equations and the network relation.
#[derive(Debug, Clone)]
pub struct InterfaceSolution {
    pub v: Vec<ComplexPhasor>,
    pub i: Vec<ComplexPhasor>,
}

/// Converts a power step at the event-time voltage into a shunt admittance
/// increment `ΔY = (ΔP − jΔQ)/|V|²` on the augmentation diagonal.
pub fn apply_load_step(
    augmentation: &mut AdmittancePair,
    bus: usize,
    delta_p: f64,
    delta_q: f64,
    v_at_event: f64,
) -> Result<(), SimulatorError> {
    let n = augmentation.n_buses();
    if bus >= n {
        return Err(NetworkError::IndexOutOfRange {
            index: bus,
            n_buses: n,
        }
        .into());
    }
    if v_at_event.abs() <= VOLTAGE_FLOOR {
        return Err(SimulatorError::VoltageCollapseAtEvent {
            bus,
            v_mag: v_at_event.abs(),
        });
    }
    let v_sq = v_at_event * v_at_event;
    augmentation.g[(bus, bus)] += delta_p / v_sq;
    augmentation.b[(bus, bus)] += -delta_q / v_sq;
    Ok(())
}

/// Stator impedance of one machine rotated into the system frame,
/// `T(δ)⁻¹·[[R, −X'_d],[X'_q, R]]·T(δ)`.
fn stator_impedance_system_frame(model: &BusModel, delta: f64) -> [[f64; 2]; 2] {
    let p = &model.generator;
    let (s, c) = delta.sin_cos();
    // T⁻¹·Z with Z = [[r, -xd'],[xq', r]].
    let m00 = c * p.r_s - s * p.xq_t;
    let m01 = -c * p.xd_t - s * p.r_s;
    let m10 = s * p.r_s + c * p.xq_t;
    let m11 = -s * p.xd_t + c * p.r_s;
    // (T⁻¹·Z)·T.
    [
        [m00 * c - m01 * s, m00 * s + m01 * c],
        [m10 * c - m11 * s, m10 * s + m11 * c],
    ]
}

/// Resolves the algebraic loop between the bus outputs and the network map.
///
/// Machine buses contribute rows `V + Z_sys·(H·V) = E_sys`; all other buses
/// contribute the zero-injection rows `(H·V) = 0`. One LU solve yields the
/// voltages, after which `I = H·V`.
pub fn solve_interface(
    models: &[BusModel],
    machine_buses: &[usize],
    states: &[Vec<f64>],
    h_aug: &NetworkBlockMatrix,
) -> Result<InterfaceSolution, SimulatorError> {
    let n = h_aug.n_buses();
    let dim = 2 * n;
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);

    let mut is_machine = vec![false; n];
    for (idx, (&bus, model)) in machine_buses.iter().zip(models).enumerate() {
        is_machine[bus] = true;
        let ms = model.machine_state(&states[idx]);
        let z = stator_impedance_system_frame(model, ms.delta);
        let e = to_system_frame(ms.eq_t, ms.ed_t, FrameAngle::new(ms.delta));
        let rows = [bus, n + bus];
        for (r, &row) in rows.iter().enumerate() {
            m[(row, row)] += 1.0;
            for col in 0..dim {
                m[(row, col)] +=
                    z[r][0] * h_aug.h[(bus, col)] + z[r][1] * h_aug.h[(n + bus, col)];
            }
        }
        rhs[bus] = e.re;
        rhs[n + bus] = e.im;
    }
    for bus in 0..n {
        if !is_machine[bus] {
            for col in 0..dim {
                m[(bus, col)] = h_aug.h[(bus, col)];
                m[(n + bus, col)] = h_aug.h[(n + bus, col)];
            }
        }
    }

    let scale = m.amax();
    let lu = m.lu();
    // Reciprocal-condition guard: a pivot collapsing relative to the matrix
    // scale means the interconnection does not determine the voltages.
    let min_pivot = (0..dim)
        .map(|i| lu.u()[(i, i)].abs())
        .fold(f64::INFINITY, f64::min);
    if scale <= 0.0 || min_pivot < 1e-12 * scale {
        return Err(SimulatorError::IllPosedInterconnection);
    }
    let v_stacked = lu
        .solve(&rhs)
        .ok_or(SimulatorError::IllPosedInterconnection)?;
    if v_stacked.iter().any(|v| !v.is_finite()) {
        return Err(SimulatorError::IllPosedInterconnection);
    }
    let i_stacked = &h_aug.h * &v_stacked;
    Ok(InterfaceSolution {
        v: (0..n)
            .map(|k| ComplexPhasor::new(v_stacked[k], v_stacked[n + k]))
            .collect(),
        i: (0..n)
            .map(|k| ComplexPhasor::new(i_stacked[k], i_stacked[n + k]))
            .collect(),
    })
}

/// Derivative of the flattened state stack under the interface solution.
fn stacked_derivatives(
    models: &[BusModel],
    machine_buses: &[usize],
    offsets: &[usize],
    x: &[f64],
    h_aug: &NetworkBlockMatrix,
) -> Result<Vec<f64>, SimulatorError> {
    let states: Vec<Vec<f64>> = models
        .iter()
        .enumerate()
        .map(|(i, m)| x[offsets[i]..offsets[i] + m.state_dim()].to_vec())
        .collect();
    let interface = solve_interface(models, machine_buses, &states, h_aug)?;
    let mut dx = vec![0.0; x.len()];
    for (i, model) in models.iter().enumerate() {
        let bus = machine_buses[i];
        let u = [-interface.i[bus].re, -interface.i[bus].im];
        let d = model.derivatives(&states[i], u);
        dx[offsets[i]..offsets[i] + d.len()].copy_from_slice(&d);
    }
    Ok(dx)
}

/// Integrates the interconnected system with classical fixed-step RK4.
///
/// Events are snapped to the nearest step boundary (at most `dt/2` timing
/// error) and modify the load augmentation before the step is taken. The
/// trajectory is sampled at every step. Divergence surfaces as
/// [`SimulatorError::NonFiniteState`] with the time of blowup — a
/// legitimate outcome for non-passive configurations.
pub fn simulate(
    models: &[BusModel],
    machine_buses: &[usize],
    augmentation: &AdmittancePair,
    x0: &[Vec<f64>],
    scenario: &Scenario,
) -> Result<Trajectory, SimulatorError> {
    scenario.validate()?;
    let dt = scenario.dt;
    let n_steps = (scenario.horizon / dt).round() as usize;
    let offsets: Vec<usize> = models
        .iter()
        .scan(0usize, |acc, m| {
            let off = *acc;
            *acc += m.state_dim();
            Some(off)
        })
        .collect();
    let mut x: Vec<f64> = x0.iter().flatten().copied().collect();
    let mut aug = augmentation.clone();
    let mut h_aug = assemble_block(&aug)?;

    // Map each event to its step boundary.
    let mut event_steps: Vec<(usize, LoadStepEvent)> = scenario
        .events
        .iter()
        .map(|ev| (((ev.time / dt).round() as usize).min(n_steps), *ev))
        .collect();
    event_steps.sort_by_key(|(s, _)| *s);
    let mut next_event = 0usize;

    let n_machines = models.len();
    let mut traj = Trajectory {
        times: Vec::with_capacity(n_steps + 1),
        machine_buses: machine_buses.to_vec(),
        d_omega: vec![Vec::with_capacity(n_steps + 1); n_machines],
        v_mag: vec![Vec::with_capacity(n_steps + 1); n_machines],
        delta: vec![Vec::with_capacity(n_steps + 1); n_machines],
        i_a: vec![Vec::with_capacity(n_steps + 1); n_machines],
        i_b: vec![Vec::with_capacity(n_steps + 1); n_machines],
    };

    let record = |traj: &mut Trajectory,
                      t: f64,
                      x: &[f64],
                      interface: &InterfaceSolution|
     -> Result<(), SimulatorError> {
        traj.times.push(t);
        for (i, &bus) in machine_buses.iter().enumerate() {
            let xi = &x[offsets[i]..offsets[i] + models[i].state_dim()];
            let v_mag = interface.v[bus].magnitude();
            if v_mag < VOLTAGE_FLOOR {
                return Err(SimulatorError::VoltageCollapse { time: t, bus });
            }
            traj.delta[i].push(xi[0]);
            traj.d_omega[i].push(xi[1]);
            traj.v_mag[i].push(v_mag);
            traj.i_a[i].push(interface.i[bus].re);
            traj.i_b[i].push(interface.i[bus].im);
        }
        Ok(())
    };

    let split = |x: &[f64]| -> Vec<Vec<f64>> {
        models
            .iter()
            .enumerate()
            .map(|(i, m)| x[offsets[i]..offsets[i] + m.state_dim()].to_vec())
            .collect()
    };

    let interface = solve_interface(models, machine_buses, &split(&x), &h_aug)?;
    record(&mut traj, 0.0, &x, &interface)?;

    for step in 0..n_steps {
        let t = step as f64 * dt;

        // Apply any events snapped to this boundary using the pre-event
        // voltages.
        while next_event < event_steps.len() && event_steps[next_event].0 == step {
            let (_, ev) = event_steps[next_event];
            let pre = solve_interface(models, machine_buses, &split(&x), &h_aug)?;
            apply_load_step(
                &mut aug,
                ev.bus,
                ev.delta_p,
                ev.delta_q,
                pre.v[ev.bus].magnitude(),
            )?;
            h_aug = assemble_block(&aug)?;
            next_event += 1;
        }

        let deriv = |x: &[f64]| stacked_derivatives(models, machine_buses, &offsets, x, &h_aug);
        let add = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> {
            x.iter().zip(k).map(|(a, b)| a + h * b).collect()
        };
        let k1 = deriv(&x)?;
        let k2 = deriv(&add(&x, &k1, dt / 2.0))?;
        let k3 = deriv(&add(&x, &k2, dt / 2.0))?;
        let k4 = deriv(&add(&x, &k3, dt))?;
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t_next = t + dt;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SimulatorError::NonFiniteState { time: t_next });
        }
        let interface = solve_interface(models, machine_buses, &split(&x), &h_aug)?;
        record(&mut traj, t_next, &x, &interface)?;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus_models::{ControllerParams, GeneratorParams, MachineState};
    use crate::network::{build_admittance, BranchSpec};
    use num_complex::Complex64;

    fn round_generator() -> GeneratorParams {
        // Equal transient reactances make the stator impedance a complex
        // scalar, which the closed-form oracles below rely on.
        GeneratorParams {
            m: 0.31,
            d: 0.05,
            xd: 0.2,
            xq: 0.2,
            xd_t: 0.05,
            xq_t: 0.05,
            td0_t: 8.0,
            tq0_t: 0.4,
            r_s: 0.001,
            p_ref: 0.0,
        }
    }

    fn machine_pair() -> (Vec<BusModel>, Vec<usize>) {
        let m0 = BusModel::new(round_generator(), ControllerParams::none())
            .with_fixed_field_voltage(1.1);
        let m1 = BusModel::new(round_generator(), ControllerParams::none())
            .with_fixed_field_voltage(1.0);
        (vec![m0, m1], vec![0, 1])
    }

    #[test]
    fn open_network_gives_zero_current_and_rotated_emf() {
        let (models, buses) = machine_pair();
        let h = NetworkBlockMatrix {
            h: DMatrix::zeros(4, 4),
        };
        let states = vec![vec![0.4, 0.0, 1.1, -0.1], vec![-0.2, 0.0, 1.0, 0.05]];
        let sol = solve_interface(&models, &buses, &states, &h).unwrap();
        for (idx, &bus) in buses.iter().enumerate() {
            assert!(sol.i[bus].magnitude() < 1e-12);
            let ms = models[idx].machine_state(&states[idx]);
            let e = to_system_frame(ms.eq_t, ms.ed_t, FrameAngle::new(ms.delta));
            assert!((sol.v[bus].re - e.re).abs() < 1e-12);
            assert!((sol.v[bus].im - e.im).abs() < 1e-12);
        }
    }

    #[test]
    fn two_node_interface_matches_complex_algebra_oracle() {
        // Machine behind a complex-scalar stator impedance against a stiff
        // source (a machine with zero impedance) over one lossless line.
        let y = build_admittance(&[BranchSpec::line(0, 1, 0.0, 0.4, 0.0)], 2).unwrap();
        let h = assemble_block(&y).unwrap();
        let gen = round_generator();
        let mut stiff = round_generator();
        stiff.r_s = 0.0;
        stiff.xd_t = 1e-9;
        stiff.xq_t = 1e-9;
        let models = vec![
            BusModel::new(gen.clone(), ControllerParams::none()),
            BusModel::new(stiff, ControllerParams::none()),
        ];
        let buses = vec![0usize, 1usize];
        let states = vec![vec![0.3, 0.0, 1.1, 0.0], vec![0.0, 0.0, 1.0, 0.0]];
        let sol = solve_interface(&models, &buses, &states, &h).unwrap();

        // Oracle: V0 = (E0 − Z0·Y01·E1)/(1 + Z0·Y00) with complex scalars.
        let z0 = Complex64::new(gen.r_s, gen.xd_t);
        let e0 = {
            let ms = MachineState {
                delta: 0.3,
                d_omega: 0.0,
                eq_t: 1.1,
                ed_t: 0.0,
            };
            to_system_frame(ms.eq_t, ms.ed_t, FrameAngle::new(ms.delta)).as_complex()
        };
        let e1 = Complex64::new(1.0, 0.0);
        let yc = y.to_complex();
        let v0 = (e0 - z0 * yc[(0, 1)] * e1) / (Complex64::new(1.0, 0.0) + z0 * yc[(0, 0)]);
        let i0 = yc[(0, 0)] * v0 + yc[(0, 1)] * e1;
        assert!((sol.v[0].as_complex() - v0).norm() < 1e-7);
        assert!((sol.i[0].as_complex() - i0).norm() < 1e-7);
        assert!((sol.v[1].as_complex() - e1).norm() < 1e-7);
    }

    #[test]
    fn interface_consistency_with_network_relation() {
        let y = build_admittance(
            &[
                BranchSpec::line(0, 2, 0.02, 0.3, 0.01),
                BranchSpec::line(1, 2, 0.03, 0.25, 0.01),
            ],
            3,
        )
        .unwrap();
        let h = assemble_block(&y).unwrap();
        let (models, buses) = machine_pair();
        let states = vec![vec![0.5, 0.0, 1.05, -0.02], vec![0.1, 0.0, 1.0, 0.01]];
        let sol = solve_interface(&models, &buses, &states, &h).unwrap();
        // ‖I − H·V‖∞ at the solution.
        let n = 3;
        let mut v = DVector::<f64>::zeros(2 * n);
        for k in 0..n {
            v[k] = sol.v[k].re;
            v[n + k] = sol.v[k].im;
        }
        let i_check = &h.h * v;
        for k in 0..n {
            assert!((sol.i[k].re - i_check[k]).abs() < 1e-9);
            assert!((sol.i[k].im - i_check[n + k]).abs() < 1e-9);
        }
        // Zero injection at the pure load bus.
        assert!(sol.i[2].magnitude() < 1e-9);
        // Machine outputs agree with the stator equations.
        for (idx, &bus) in buses.iter().enumerate() {
            let u = [-sol.i[bus].re, -sol.i[bus].im];
            let out = models[idx].output(&states[idx], u);
            assert!((out[0] - sol.v[bus].re).abs() < 1e-9);
            assert!((out[1] - sol.v[bus].im).abs() < 1e-9);
        }
    }

    #[test]
    fn load_step_conversion_examples() {
        let y = build_admittance(&[BranchSpec::line(0, 1, 0.1, 0.3, 0.0)], 2).unwrap();
        let mut aug = y.clone();
        apply_load_step(&mut aug, 0, 1.0, 0.0, 1.0).unwrap();
        assert!((aug.g[(0, 0)] - y.g[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((aug.b[(0, 0)] - y.b[(0, 0)]).abs() < 1e-12);

        let mut unchanged = y.clone();
        apply_load_step(&mut unchanged, 1, 0.0, 0.0, 0.9).unwrap();
        assert_eq!(unchanged, y);

        let mut sagged = y.clone();
        apply_load_step(&mut sagged, 0, 1.0, 0.0, 0.95).unwrap();
        assert!((sagged.g[(0, 0)] - y.g[(0, 0)] - 1.0 / 0.9025).abs() < 1e-9);

        assert!(matches!(
            apply_load_step(&mut sagged, 0, 1.0, 0.0, 1e-9),
            Err(SimulatorError::VoltageCollapseAtEvent { .. })
        ));
    }

    #[test]
    fn bad_scenarios_are_rejected() {
        assert!(Scenario::quiet(10.0, 0.0).validate().is_err());
        let mut sc = Scenario::quiet(1.0, 0.01);
        sc.events.push(LoadStepEvent {
            time: 2.0,
            bus: 0,
            delta_p: 1.0,
            delta_q: 0.0,
        });
        assert!(sc.validate().is_err());
    }

    /// A hand-built stationary pair: two identical machines, symmetric line,
    /// both at open circuit (no flow).
    fn stationary_system() -> (Vec<BusModel>, Vec<usize>, AdmittancePair, Vec<Vec<f64>>) {
        let y = build_admittance(&[BranchSpec::line(0, 1, 0.0, 0.5, 0.0)], 2).unwrap();
        let gen = round_generator();
        let models = vec![
            BusModel::new(gen.clone(), ControllerParams::none()).with_fixed_field_voltage(1.0),
            BusModel::new(gen, ControllerParams::none()).with_fixed_field_voltage(1.0),
        ];
        // Identical emfs and angles: no current flows, every derivative is
        // zero with p_ref = 0.
        let x0 = vec![vec![0.2, 0.0, 1.0, 0.0], vec![0.2, 0.0, 1.0, 0.0]];
        (models, vec![0, 1], y, x0)
    }

    #[test]
    fn quiet_scenario_holds_equilibrium() {
        let (models, buses, y, x0) = stationary_system();
        let sc = Scenario::quiet(2.0, 0.005);
        let traj = simulate(&models, &buses, &y, &x0, &sc).unwrap();
        let drift = traj
            .d_omega
            .iter()
            .flat_map(|series| series.iter())
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(drift < 1e-9, "speed drift {drift}");
        let last = traj.times.len() - 1;
        for m in 0..2 {
            assert!((traj.delta[m][last] - 0.2).abs() < 1e-9);
            assert!((traj.v_mag[m][last] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn load_step_perturbs_then_damps() {
        let (models, buses, y, x0) = stationary_system();
        let sc = Scenario {
            horizon: 4.0,
            dt: 0.005,
            events: vec![LoadStepEvent {
                time: 0.5,
                bus: 1,
                delta_p: 0.2,
                delta_q: 0.0,
            }],
        };
        let traj = simulate(&models, &buses, &y, &x0, &sc).unwrap();
        let peak = traj.d_omega[0]
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(peak > 1e-3, "the step must actually disturb the system");
        // All samples finite even through the transient.
        assert!(traj
            .d_omega
            .iter()
            .flat_map(|s| s.iter())
            .all(|v| v.is_finite()));
    }

    #[test]
    fn integrator_is_fourth_order() {
        // Start away from equilibrium, integrate a fixed span smooth run at
        // dt and dt/2 against a dt/8 reference; the endpoint error ratio
        // must sit near 2⁴.
        let (models, buses, y, _) = stationary_system();
        let x0 = vec![vec![0.3, 0.1, 1.0, 0.0], vec![0.2, -0.1, 1.0, 0.0]];
        let run = |dt: f64| {
            let sc = Scenario::quiet(1.0, dt);
            let traj = simulate(&models, &buses, &y, &x0, &sc).unwrap();
            let last = traj.times.len() - 1;
            (0..2)
                .flat_map(|m| {
                    [
                        traj.delta[m][last],
                        traj.d_omega[m][last],
                        traj.v_mag[m][last],
                    ]
                })
                .collect::<Vec<f64>>()
        };
        let coarse = run(0.02);
        let fine = run(0.01);
        let reference = run(0.0025);
        let err = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(&coarse, &reference) / err(&fine, &reference);
        assert!(
            (12.0..=20.0).contains(&ratio),
            "convergence ratio {ratio} outside 4th-order window"
        );
    }
}
