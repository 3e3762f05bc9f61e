//! Decentralized passivation of a violating bus: locate the frequency band
//! where the positive-realness sweep fails and search lag-compensator
//! constants `(T_b, T_c)` for the exciter until the re-linearized bus
//! passes the sweep.
//!
//! The search is strictly local: it only ever sees the bus's own linearized
//! model, never the rest of the network.

use thiserror::Error;

use crate::bus_models::GeneratorParams;
use crate::linear_analysis::{
    passivity_sweep, violation_band_of, FrequencyGrid, LinearAnalysisError, LinearBusModel,
    PassivitySweepReport,
};

#[derive(Debug, Error)]
pub enum TunerError {
    #[error(
        "no lag pair passivates the bus (band {band_lo:.3}..{band_hi:.3} rad/s, tried {tried} candidates)"
    )]
    TuningFailed {
        band_lo: f64,
        band_hi: f64,
        tried: usize,
    },
    #[error("reactance bump violates parameter ordering: {0}")]
    OrderingViolated(String),
    #[error("bump factor {0} outside (0, 0.5]")]
    BadFactor(f64),
    #[error(transparent)]
    Linear(#[from] LinearAnalysisError),
}

/// Fixed exciter constants plus the search envelope for the lag stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningConstraints {
    pub k_a: f64,
    pub t_a: f64,
    /// How far below the lowest violating frequency the lag pole is placed
    /// (`1/t_b ≤ ω_lo / margin`). Must exceed 1.
    pub margin: f64,
    /// Cap on the lag time constant, seconds.
    pub max_tb: f64,
}

impl TuningConstraints {
    pub fn new(k_a: f64, t_a: f64) -> Self {
        Self {
            k_a,
            t_a,
            margin: 3.0,
            max_tb: 20.0,
        }
    }
}

/// Smallest and largest grid frequencies at which the sweep dips below the
/// tolerance, or `None` for a passive report. Disjoint violating intervals
/// are reported by their convex hull; the report's `multi_band` flag marks
/// that case.
pub fn find_violation_band(report: &PassivitySweepReport) -> Option<(f64, f64)> {
    violation_band_of(&report.grid, &report.min_eig, crate::network::PASSIVITY_EPS).0
}

/// Number of `t_c` candidates examined per tuning run.
const TC_GRID_POINTS: usize = 20;

/// Searches lag constants that passivate the bus.
///
/// `factory` must rebuild and re-linearize the bus for a candidate
/// `(t_b, t_c)` pair (the machine equilibrium is unaffected because the lag
/// stage has unity dc gain). `t_b` is pinned a factor `margin` below the
/// lowest violating frequency (capped at `max_tb`); `t_c` is searched
/// downward over a log grid in `(1.5·t_a, t_b/2]`, preferring the largest
/// value that passes, which keeps phase distortion minimal. Every returned
/// pair has been verified by a fresh sweep.
///
/// A bus whose band is `None` is already passive and gets the bypass pair
/// `(0, 0)`.
pub fn tune_lag<F>(
    factory: F,
    band: Option<(f64, f64)>,
    constraints: &TuningConstraints,
    grid: &FrequencyGrid,
    eps: f64,
) -> Result<(f64, f64), TunerError>
where
    F: Fn(f64, f64) -> Result<LinearBusModel, LinearAnalysisError>,
{
    let Some((band_lo, band_hi)) = band else {
        return Ok((0.0, 0.0));
    };
    let t_b = (constraints.margin / band_lo).min(constraints.max_tb);
    let tc_hi = t_b / 2.0;
    let tc_lo = 1.5 * constraints.t_a;
    let mut tried = 0usize;
    if tc_hi > tc_lo {
        let ratio = (tc_hi / tc_lo).ln();
        // Largest t_c first: least phase distortion wins.
        for i in 0..TC_GRID_POINTS {
            let t_c = tc_hi * (-ratio * i as f64 / (TC_GRID_POINTS - 1) as f64).exp();
            tried += 1;
            let lm = factory(t_b, t_c)?;
            let report = passivity_sweep(&lm, grid, eps)?;
            if report.passive {
                return Ok((t_b, t_c));
            }
        }
    }
    Err(TunerError::TuningFailed {
        band_lo,
        band_hi,
        tried,
    })
}

/// Scales both transient reactances by `(1 + factor)`, the fallback for
/// buses the lag stage cannot passivate.
pub fn suggest_reactance_bump(
    p: &GeneratorParams,
    factor: f64,
) -> Result<GeneratorParams, TunerError> {
    if !(factor >= 0.0 && factor <= 0.5) {
        return Err(TunerError::BadFactor(factor));
    }
    let mut out = p.clone();
    out.xd_t = p.xd_t * (1.0 + factor);
    out.xq_t = p.xq_t * (1.0 + factor);
    if out.xd_t > out.xd || out.xq_t > out.xq {
        return Err(TunerError::OrderingViolated(format!(
            "bumped xd_t = {:.4} (xd = {:.4}), xq_t = {:.4} (xq = {:.4})",
            out.xd_t, out.xd, out.xq_t, out.xq
        )));
    }
    Ok(out)
}
