//! Linearization of bus models about an equilibrium, the decentralized
//! passivity test (open-loop stability plus a positive-realness frequency
//! sweep of the Hermitian part of the transfer matrix), and full-network
//! eigenanalysis with damping ratios.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::bus_models::DynamicModel;
use crate::network::NetworkBlockMatrix;

#[derive(Debug, Error)]
pub enum LinearAnalysisError {
    #[error("non-finite derivative while linearizing state {index}")]
    NonFiniteDerivative { index: usize },
    #[error("resolvent singular at omega = {omega} rad/s")]
    ResolventSingular { omega: f64 },
    #[error("interconnection is ill-posed: (I + H·D) is singular")]
    IllPosedInterconnection,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Linear time-invariant model of one bus about an equilibrium:
/// `dx = A·x + B·u`, `y = C·x + D·u` in deviation variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBusModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl LinearBusModel {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Transfer matrix `G(jω) = C·(jωI − A)⁻¹·B + D`.
    pub fn transfer_at(&self, omega: f64) -> Result<DMatrix<Complex64>, LinearAnalysisError> {
        let k = self.state_dim();
        let d_c = self.d.map(|v| Complex64::new(v, 0.0));
        if k == 0 {
            return Ok(d_c);
        }
        let mut resolvent = self.a.map(|v| Complex64::new(-v, 0.0));
        for i in 0..k {
            resolvent[(i, i)] += Complex64::new(0.0, omega);
        }
        let b_c = self.b.map(|v| Complex64::new(v, 0.0));
        let x = resolvent
            .lu()
            .solve(&b_c)
            .ok_or(LinearAnalysisError::ResolventSingular { omega })?;
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinearAnalysisError::ResolventSingular { omega });
        }
        let c_c = self.c.map(|v| Complex64::new(v, 0.0));
        Ok(c_c * x + d_c)
    }
}

/// Central-difference linearization of a bus model about `(x_hat, u_hat)`.
///
/// The step is scaled per coordinate as `h·(1 + |x̂_j|)` so that states of
/// very different magnitude are differenced at comparable relative accuracy.
pub fn linearize_bus(
    model: &dyn DynamicModel,
    x_hat: &[f64],
    u_hat: [f64; 2],
    h: f64,
) -> Result<LinearBusModel, LinearAnalysisError> {
    let k = model.state_dim();
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut b = DMatrix::<f64>::zeros(k, 2);
    let mut c = DMatrix::<f64>::zeros(2, k);
    let mut d = DMatrix::<f64>::zeros(2, 2);

    let mut x_plus = x_hat.to_vec();
    let mut x_minus = x_hat.to_vec();
    for j in 0..k {
        let step = h * (1.0 + x_hat[j].abs());
        x_plus[j] = x_hat[j] + step;
        x_minus[j] = x_hat[j] - step;
        let f_plus = model.derivatives(&x_plus, u_hat);
        let f_minus = model.derivatives(&x_minus, u_hat);
        let g_plus = model.output(&x_plus, u_hat);
        let g_minus = model.output(&x_minus, u_hat);
        for i in 0..k {
            a[(i, j)] = (f_plus[i] - f_minus[i]) / (2.0 * step);
        }
        for i in 0..2 {
            c[(i, j)] = (g_plus[i] - g_minus[i]) / (2.0 * step);
        }
        x_plus[j] = x_hat[j];
        x_minus[j] = x_hat[j];
    }
    for j in 0..2 {
        let step = h * (1.0 + u_hat[j].abs());
        let mut u_plus = u_hat;
        let mut u_minus = u_hat;
        u_plus[j] += step;
        u_minus[j] -= step;
        let f_plus = model.derivatives(x_hat, u_plus);
        let f_minus = model.derivatives(x_hat, u_minus);
        let g_plus = model.output(x_hat, u_plus);
        let g_minus = model.output(x_hat, u_minus);
        for i in 0..k {
            b[(i, j)] = (f_plus[i] - f_minus[i]) / (2.0 * step);
        }
        for i in 0..2 {
            d[(i, j)] = (g_plus[i] - g_minus[i]) / (2.0 * step);
        }
    }
    for (index, v) in a.iter().chain(b.iter()).chain(c.iter()).chain(d.iter()).enumerate() {
        if !v.is_finite() {
            return Err(LinearAnalysisError::NonFiniteDerivative { index });
        }
    }
    Ok(LinearBusModel { a, b, c, d })
}

/// Frequency grid for the positive-realness sweep, rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub points: Vec<f64>,
}

impl FrequencyGrid {
    pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Self {
        assert!(lo > 0.0 && hi > lo && n >= 2);
        let ratio = (hi / lo).ln();
        Self {
            points: (0..n)
                .map(|i| lo * (ratio * i as f64 / (n - 1) as f64).exp())
                .collect(),
        }
    }
}

impl Default for FrequencyGrid {
    /// 400 logarithmically spaced points over [1e-2, 1e3] rad/s, bracketing
    /// both the electromechanical and the exciter frequency ranges.
    fn default() -> Self {
        Self::log_spaced(1e-2, 1e3, 400)
    }
}

/// Outcome of the per-bus passivity sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PassivitySweepReport {
    /// Frequencies actually evaluated (includes 0 when the state matrix is
    /// nonsingular).
    pub grid: Vec<f64>,
    /// Smallest eigenvalue of `G(jω) + Gᴴ(jω)` per grid point.
    pub min_eig: Vec<f64>,
    /// Whether the open-loop state matrix is Hurwitz.
    pub hurwitz: bool,
    /// `hurwitz` and no grid point dips below `−eps`.
    pub passive: bool,
    /// Smallest and largest violating frequencies, if any.
    pub violation_band: Option<(f64, f64)>,
    /// Whether the violating set is non-contiguous on the grid.
    pub multi_band: bool,
}

/// Scans min-eigenvalue samples for the violating range. Returns the convex
/// hull of the violating frequencies plus a flag for disjoint bands.
pub(crate) fn violation_band_of(
    grid: &[f64],
    min_eig: &[f64],
    eps: f64,
) -> (Option<(f64, f64)>, bool) {
    let mut lo = None;
    let mut hi = None;
    let mut bands = 0usize;
    let mut in_band = false;
    for (w, &e) in grid.iter().zip(min_eig) {
        if e < -eps {
            if !in_band {
                bands += 1;
                in_band = true;
            }
            if lo.is_none() {
                lo = Some(*w);
            }
            hi = Some(*w);
        } else {
            in_band = false;
        }
    }
    (lo.zip(hi), bands > 1)
}

/// Spectral abscissa of the state matrix: the largest eigenvalue real part.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Asymptotic stability of the isolated bus: true iff every eigenvalue of
/// the state matrix has real part below `−1e-9`.
pub fn check_open_loop_stability(lm: &LinearBusModel) -> (bool, f64) {
    let abscissa = spectral_abscissa(&lm.a);
    (abscissa < -1e-9, abscissa)
}

/// Eigenvalues of the 2×2 Hermitian matrix `m`, ascending. The imaginary
/// residue of the diagonal is reported back for the symmetry invariant.
fn hermitian_2x2_eigenvalues(m: &DMatrix<Complex64>) -> ([f64; 2], f64) {
    let s11 = m[(0, 0)];
    let s22 = m[(1, 1)];
    let mean = (s11.re + s22.re) / 2.0;
    let half_diff = (s11.re - s22.re) / 2.0;
    let off = (m[(0, 1)] + m[(1, 0)].conj()) / 2.0;
    let radius = (half_diff * half_diff + off.norm_sqr()).sqrt();
    let residue = s11.im.abs().max(s22.im.abs());
    ([mean - radius, mean + radius], residue)
}

/// Runs the positive-realness sweep: at each grid frequency the Hermitian
/// part of the transfer matrix is formed and its smallest eigenvalue
/// recorded. The bus is input-strictly passive about the equilibrium when
/// the state matrix is Hurwitz and no eigenvalue drops below `−eps`.
///
/// `ω = 0` is evaluated in addition to the grid whenever the state matrix
/// is nonsingular.
pub fn passivity_sweep(
    lm: &LinearBusModel,
    grid: &FrequencyGrid,
    eps: f64,
) -> Result<PassivitySweepReport, LinearAnalysisError> {
    if grid.points.is_empty() {
        return Err(LinearAnalysisError::DimensionMismatch(
            "frequency grid is empty".into(),
        ));
    }
    let (hurwitz, _) = check_open_loop_stability(lm);
    let zero_ok = lm.state_dim() == 0
        || lm
            .a
            .clone()
            .lu()
            .is_invertible();
    let mut freqs = Vec::with_capacity(grid.points.len() + 1);
    if zero_ok {
        freqs.push(0.0);
    }
    freqs.extend_from_slice(&grid.points);

    let mut min_eig = Vec::with_capacity(freqs.len());
    for &omega in &freqs {
        let g = lm.transfer_at(omega)?;
        let herm = &g + g.adjoint();
        let (eigs, residue) = hermitian_2x2_eigenvalues(&herm);
        debug_assert!(residue < 1e-10, "Hermitian sum has imaginary diagonal");
        min_eig.push(eigs[0]);
    }
    let (violation_band, multi_band) = violation_band_of(&freqs, &min_eig, eps);
    let passive = hurwitz && violation_band.is_none();
    Ok(PassivitySweepReport {
        grid: freqs,
        min_eig,
        hurwitz,
        passive,
        violation_band,
        multi_band,
    })
}

/// Damping ratio of an eigenvalue `λ = a + jβ`: `ζ = −a/√(a² + β²)`.
pub fn damping_ratio(lambda: Complex64) -> f64 {
    let norm = lambda.norm();
    if norm == 0.0 {
        return 0.0;
    }
    -lambda.re / norm
}

/// Closed-loop spectrum of the interconnected linearized system.
#[derive(Debug, Clone)]
pub struct EigenReport {
    pub eigenvalues: Vec<Complex64>,
    pub damping_ratios: Vec<f64>,
}

impl EigenReport {
    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Closes the loop between the per-bus linear models and the network map
/// and returns the eigenvalues of the resulting state matrix.
///
/// Every bus of the network must carry a model (pure load buses are
/// expected to have been eliminated from `h` beforehand). The feedback is
/// `u = −[I_a; I_b]` with `[I_a; I_b] = H·[V_a; V_b]`; the algebraic loop
/// through the feedthrough terms is eliminated exactly.
pub fn full_system_eigenanalysis(
    models: &[LinearBusModel],
    h: &NetworkBlockMatrix,
) -> Result<EigenReport, LinearAnalysisError> {
    let n = h.n_buses();
    if models.len() != n {
        return Err(LinearAnalysisError::DimensionMismatch(format!(
            "{} bus models for a {}-bus network",
            models.len(),
            n
        )));
    }
    let total: usize = models.iter().map(|m| m.state_dim()).sum();
    let mut a_blk = DMatrix::<f64>::zeros(total, total);
    let mut b_sc = DMatrix::<f64>::zeros(total, 2 * n);
    let mut c_sc = DMatrix::<f64>::zeros(2 * n, total);
    let mut d_sc = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let mut offset = 0;
    for (i, m) in models.iter().enumerate() {
        let k = m.state_dim();
        a_blk.view_mut((offset, offset), (k, k)).copy_from(&m.a);
        // Bus i owns network rows i (a-component) and n+i (b-component).
        for s in 0..k {
            b_sc[(offset + s, i)] = m.b[(s, 0)];
            b_sc[(offset + s, n + i)] = m.b[(s, 1)];
            c_sc[(i, offset + s)] = m.c[(0, s)];
            c_sc[(n + i, offset + s)] = m.c[(1, s)];
        }
        d_sc[(i, i)] = m.d[(0, 0)];
        d_sc[(i, n + i)] = m.d[(0, 1)];
        d_sc[(n + i, i)] = m.d[(1, 0)];
        d_sc[(n + i, n + i)] = m.d[(1, 1)];
        offset += k;
    }

    // u = -(I + H·D)⁻¹·H·C·x closes the loop.
    let closure = DMatrix::<f64>::identity(2 * n, 2 * n) + &h.h * &d_sc;
    let lu = closure.lu();
    if !lu.is_invertible() {
        return Err(LinearAnalysisError::IllPosedInterconnection);
    }
    let hc = &h.h * &c_sc;
    let gain = lu
        .solve(&hc)
        .ok_or(LinearAnalysisError::IllPosedInterconnection)?;
    let a_closed = a_blk - b_sc * gain;

    let mut eigenvalues: Vec<Complex64> = a_closed.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|x, y| {
        x.re.partial_cmp(&y.re)
            .unwrap()
            .then(x.im.partial_cmp(&y.im).unwrap())
    });
    let damping_ratios = eigenvalues.iter().map(|&z| damping_ratio(z)).collect();
    Ok(EigenReport {
        eigenvalues,
        damping_ratios,
    })
}
