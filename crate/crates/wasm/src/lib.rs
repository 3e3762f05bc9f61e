//! Browser demo: the Kundur two-area case compiled in, with three
//! interactive operations exposed to JavaScript — a per-bus passivity sweep
//! under adjustable lag constants, the automatic lag tuner, and a
//! load-step time-domain simulation. Results cross the boundary as JSON
//! strings; the page in `www/` renders them on plain canvases.

use wasm_bindgen::prelude::*;

use passnet::io::{parse_case_str, RunConfig};
use passnet::pipeline::{
    self, linearize_with_lag, prepare, simulate_scenario, tune_machine, SystemModel,
};
use passnet::linear_analysis::passivity_sweep;
use passnet::simulator::{LoadStepEvent, Scenario};

const KUNDUR_CASE: &str = include_str!("../../../cases/kundur2area.toml");

fn build_system() -> Result<SystemModel, JsError> {
    let case = parse_case_str(KUNDUR_CASE, std::path::Path::new("kundur2area.toml"))
        .map_err(|e| JsError::new(&e.to_string()))?;
    let indexed = case.index().map_err(|e| JsError::new(&e.to_string()))?;
    prepare(&indexed, &RunConfig::default()).map_err(|e| JsError::new(&e.to_string()))
}

thread_local! {
    static SYSTEM: std::cell::OnceCell<SystemModel> = const { std::cell::OnceCell::new() };
}

fn with_system<T>(f: impl FnOnce(&SystemModel) -> Result<T, JsError>) -> Result<T, JsError> {
    SYSTEM.with(|cell| {
        if cell.get().is_none() {
            let sys = build_system()?;
            let _ = cell.set(sys);
        }
        f(cell.get().expect("system initialized above"))
    })
}

/// Machine bus ids of the bundled case.
#[wasm_bindgen]
pub fn machine_buses() -> Result<String, JsError> {
    with_system(|sys| {
        let ids: Vec<u32> = sys
            .ep
            .machine_buses
            .iter()
            .map(|&b| sys.case.bus_ids[b])
            .collect();
        Ok(serde_json::to_string(&ids).expect("ids serialize"))
    })
}

/// Passivity sweep of one machine bus with the exciter lag stage replaced
/// by `(t_b, t_c)`; pass zeros for the plain exciter. Returns the grid, the
/// smallest eigenvalue curve and the verdict as JSON.
#[wasm_bindgen]
pub fn sweep_bus(bus_id: u32, t_b: f64, t_c: f64) -> Result<String, JsError> {
    with_system(|sys| {
        let m = machine_index(sys, bus_id)?;
        let cfg = RunConfig::default();
        let lm = linearize_with_lag(sys, m, t_b, t_c).map_err(|e| JsError::new(&e.to_string()))?;
        let report = passivity_sweep(&lm, &cfg.frequency_grid(), cfg.tolerances.passivity_eps)
            .map_err(|e| JsError::new(&e.to_string()))?;
        let json = serde_json::json!({
            "bus": bus_id,
            "t_b": t_b,
            "t_c": t_c,
            "omega": report.grid,
            "min_eig": report.min_eig,
            "hurwitz": report.hurwitz,
            "passive": report.passive,
            "band": report.violation_band,
        });
        Ok(json.to_string())
    })
}

/// Runs the lag tuner on one machine bus and returns the verified pair.
#[wasm_bindgen]
pub fn tune_bus(bus_id: u32) -> Result<String, JsError> {
    with_system(|sys| {
        let m = machine_index(sys, bus_id)?;
        let cfg = RunConfig::default();
        let outcome =
            tune_machine(sys, &cfg, m).map_err(|e| JsError::new(&e.to_string()))?;
        let json = serde_json::json!({
            "bus": bus_id,
            "pair": outcome.pair,
            "already_passive": outcome.already_passive,
            "error": outcome.error,
        });
        Ok(json.to_string())
    })
}

/// Simulates a load step at bus 9 (`delta_p` pu at t = 1 s) over `horizon`
/// seconds. With `tuned` set, every machine's exciter first gets the lag
/// constants found by the tuner. Returns per-machine speed-deviation and
/// voltage series as JSON.
#[wasm_bindgen]
pub fn simulate_step(delta_p: f64, horizon: f64, tuned: bool) -> Result<String, JsError> {
    let base = build_system().map_err(|e| e)?;
    let cfg = RunConfig::default();
    let sys = if tuned {
        let case = parse_case_str(KUNDUR_CASE, std::path::Path::new("kundur2area.toml"))
            .map_err(|e| JsError::new(&e.to_string()))?;
        let mut case = case;
        for m in 0..base.models.len() {
            let outcome =
                tune_machine(&base, &cfg, m).map_err(|e| JsError::new(&e.to_string()))?;
            if let Some((t_b, t_c)) = outcome.pair {
                let entry = case
                    .machines
                    .iter_mut()
                    .find(|e| e.bus == outcome.bus_id)
                    .expect("machine exists");
                if let Some(ref mut ex) = entry.exciter {
                    ex.t_b = t_b;
                    ex.t_c = t_c;
                }
            }
        }
        let indexed = case.index().map_err(|e| JsError::new(&e.to_string()))?;
        prepare(&indexed, &cfg).map_err(|e| JsError::new(&e.to_string()))?
    } else {
        base
    };
    let step_bus = sys
        .case
        .dense_index(9)
        .ok_or_else(|| JsError::new("bundled case lost bus 9"))?;
    let scenario = Scenario {
        horizon,
        dt: 0.005,
        events: vec![LoadStepEvent {
            time: 1.0,
            bus: step_bus,
            delta_p,
            delta_q: 0.0,
        }],
    };
    match simulate_scenario(&sys, &scenario) {
        Ok(traj) => {
            let buses: Vec<u32> = traj
                .machine_buses
                .iter()
                .map(|&b| sys.case.bus_ids[b])
                .collect();
            let json = serde_json::json!({
                "times": traj.times,
                "buses": buses,
                "d_omega": traj.d_omega,
                "v_mag": traj.v_mag,
                "diverged": false,
            });
            Ok(json.to_string())
        }
        Err(pipeline::PipelineError::Simulator(e)) => {
            let json = serde_json::json!({
                "diverged": true,
                "reason": e.to_string(),
            });
            Ok(json.to_string())
        }
        Err(e) => Err(JsError::new(&e.to_string())),
    }
}

fn machine_index(sys: &SystemModel, bus_id: u32) -> Result<usize, JsError> {
    let dense = sys
        .case
        .dense_index(bus_id)
        .ok_or_else(|| JsError::new(&format!("unknown bus id {bus_id}")))?;
    sys.ep
        .machine_buses
        .iter()
        .position(|&b| b == dense)
        .ok_or_else(|| JsError::new(&format!("bus {bus_id} has no machine")))
}
