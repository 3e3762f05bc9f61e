//! Admittance-matrix construction from branch data and the static network
//! input/output map built from it.
//!
//! The network is treated as a memoryless multivariable system: stacking the
//! rectangular voltage components of all `n` buses as `[v_a; v_b]` and the
//! net injected current components as `[i_a; i_b]`, the map is the real
//! `2n×2n` block matrix `[[G, -B], [B, G]]`. Its symmetric part is
//! `blockdiag(G, G)`, so positive semidefiniteness of the conductance matrix
//! alone certifies passivity of the whole network, losses included; a
//! lossless network (`G = 0`) makes the map skew-symmetric and lossless in
//! the inner-product sense.
//!
//! Throughout, stacked vectors put all a-components first: bus `i` owns rows
//! `i` and `n + i`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::frames::FrameAngle;

/// Tolerance below which symmetric-part eigenvalues are treated as zero.
pub const PASSIVITY_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("branch {from_bus}-{to_bus} has zero series impedance")]
    ZeroImpedanceBranch { from_bus: usize, to_bus: usize },
    #[error("bus index {index} out of range for {n_buses} buses")]
    IndexOutOfRange { index: usize, n_buses: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("interior block is singular, cannot reduce")]
    SingularReduction,
}

/// One transmission line or transformer, π-equivalent.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSpec {
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series resistance, per-unit.
    pub series_resistance: f64,
    /// Series reactance, per-unit.
    pub series_reactance: f64,
    /// Total line-charging susceptance, per-unit (half at each end).
    pub shunt_susceptance_total: f64,
    /// Off-nominal turns ratio on the `from` side; 1.0 means no transformer.
    pub tap_ratio: f64,
}

impl BranchSpec {
    pub fn line(from_bus: usize, to_bus: usize, r: f64, x: f64, b_shunt: f64) -> Self {
        Self {
            from_bus,
            to_bus,
            series_resistance: r,
            series_reactance: x,
            shunt_susceptance_total: b_shunt,
            tap_ratio: 1.0,
        }
    }
}

/// Real and imaginary parts of the nodal admittance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittancePair {
    /// Conductance matrix, per-unit.
    pub g: DMatrix<f64>,
    /// Susceptance matrix, per-unit.
    pub b: DMatrix<f64>,
}

impl AdmittancePair {
    pub fn n_buses(&self) -> usize {
        self.g.nrows()
    }

    pub fn to_complex(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.g.nrows(), self.g.ncols(), |i, j| {
            Complex64::new(self.g[(i, j)], self.b[(i, j)])
        })
    }

    pub fn from_complex(y: &DMatrix<Complex64>) -> Self {
        Self {
            g: y.map(|z| z.re),
            b: y.map(|z| z.im),
        }
    }
}

/// The `2n×2n` real matrix `[[G, -B], [B, G]]` relating stacked voltage
/// components to stacked net injected current components.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkBlockMatrix {
    pub h: DMatrix<f64>,
}

impl NetworkBlockMatrix {
    pub fn n_buses(&self) -> usize {
        self.h.nrows() / 2
    }
}

/// Builds the nodal admittance matrix from branch data.
///
/// Each branch contributes its series admittance `y = 1/(r + jx)` to the
/// off-diagonals (scaled by the turns ratio for transformers) and half of
/// its charging susceptance to each terminal diagonal. Loads are not part
/// of this matrix; they stay with the power flow and the simulator.
pub fn build_admittance(
    branches: &[BranchSpec],
    n_buses: usize,
) -> Result<AdmittancePair, NetworkError> {
    let mut y = DMatrix::<Complex64>::zeros(n_buses, n_buses);
    for br in branches {
        for &idx in &[br.from_bus, br.to_bus] {
            if idx >= n_buses {
                return Err(NetworkError::IndexOutOfRange {
                    index: idx,
                    n_buses,
                });
            }
        }
        if br.series_resistance == 0.0 && br.series_reactance == 0.0 {
            return Err(NetworkError::ZeroImpedanceBranch {
                from_bus: br.from_bus,
                to_bus: br.to_bus,
            });
        }
        let y_series = Complex64::new(br.series_resistance, br.series_reactance).inv();
        let y_shunt = Complex64::new(0.0, br.shunt_susceptance_total / 2.0);
        let tap = if br.tap_ratio > 0.0 { br.tap_ratio } else { 1.0 };
        let (f, t) = (br.from_bus, br.to_bus);
        y[(f, f)] += y_series / (tap * tap) + y_shunt;
        y[(t, t)] += y_series + y_shunt;
        y[(f, t)] -= y_series / tap;
        y[(t, f)] -= y_series / tap;
    }
    Ok(AdmittancePair::from_complex(&y))
}

/// Assembles the real block map `[[G, -B], [B, G]]` from an admittance pair.
pub fn assemble_block(y: &AdmittancePair) -> Result<NetworkBlockMatrix, NetworkError> {
    let n = y.g.nrows();
    if !y.g.is_square() || y.b.nrows() != n || y.b.ncols() != n {
        return Err(NetworkError::DimensionMismatch(format!(
            "g is {}x{}, b is {}x{}",
            y.g.nrows(),
            y.g.ncols(),
            y.b.nrows(),
            y.b.ncols()
        )));
    }
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = y.g[(i, j)];
            h[(i, n + j)] = -y.b[(i, j)];
            h[(n + i, j)] = y.b[(i, j)];
            h[(n + i, n + j)] = y.g[(i, j)];
        }
    }
    Ok(NetworkBlockMatrix { h })
}

/// Evaluates the network map: `i_a = G·v_a − B·v_b`, `i_b = B·v_a + G·v_b`.
pub fn network_map(
    h: &NetworkBlockMatrix,
    va: &[f64],
    vb: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), NetworkError> {
    let n = h.n_buses();
    if va.len() != n || vb.len() != n {
        return Err(NetworkError::DimensionMismatch(format!(
            "expected voltage vectors of length {n}, got {} and {}",
            va.len(),
            vb.len()
        )));
    }
    let mut v = nalgebra::DVector::<f64>::zeros(2 * n);
    for i in 0..n {
        v[i] = va[i];
        v[n + i] = vb[i];
    }
    let i_vec = &h.h * v;
    Ok((
        i_vec.as_slice()[..n].to_vec(),
        i_vec.as_slice()[n..].to_vec(),
    ))
}

/// Net injected currents expressed in each machine's own frame, evaluated
/// directly from the trigonometric double sum over angle differences
/// `η_ij = δ_i − δ_j`.
///
/// Inputs and outputs are `(q, d)` pairs per bus. Agrees with rotating each
/// bus voltage into the system frame, applying [`network_map`] and rotating
/// the currents back.
pub fn machine_frame_currents(
    y: &AdmittancePair,
    vdq: &[(f64, f64)],
    deltas: &[FrameAngle],
) -> Result<Vec<(f64, f64)>, NetworkError> {
    let n = y.n_buses();
    if vdq.len() != n || deltas.len() != n {
        return Err(NetworkError::DimensionMismatch(format!(
            "expected {n} per-bus entries, got {} voltages and {} angles",
            vdq.len(),
            deltas.len()
        )));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut iq = 0.0;
        let mut id = 0.0;
        for j in 0..n {
            let eta = deltas[i].radians() - deltas[j].radians();
            let (sin_e, cos_e) = eta.sin_cos();
            let (g, b) = (y.g[(i, j)], y.b[(i, j)]);
            let (vq, vd) = vdq[j];
            iq += vq * (g * cos_e + b * sin_e) + vd * (g * sin_e - b * cos_e);
            id += vq * (-g * sin_e + b * cos_e) + vd * (g * cos_e + b * sin_e);
        }
        out.push((iq, id));
    }
    Ok(out)
}

/// One Gershgorin disc of the conductance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GershgorinDisc {
    pub bus: usize,
    /// Diagonal entry `G_ii`.
    pub center: f64,
    /// Off-diagonal absolute row sum.
    pub radius: f64,
    /// Whether the disc cannot cross into the open left half plane.
    pub nonnegative: bool,
}

/// Result of the network passivity check.
///
/// The disc report is the structural argument (valid for shunt-free lossy
/// networks, where `G` is exactly diagonally dominant); the eigenvalue of
/// the symmetric part of the block map is the authoritative test and covers
/// shunts and transformer taps as well.
#[derive(Debug, Clone, PartialEq)]
pub struct PassivityCertificate {
    pub discs: Vec<GershgorinDisc>,
    pub min_symmetric_eigenvalue: f64,
    pub all_discs_nonnegative: bool,
    pub passes: bool,
}

/// Certifies passivity of the network map built from `y`.
pub fn certify_network_passivity(y: &AdmittancePair) -> PassivityCertificate {
    let n = y.n_buses();
    let mut discs = Vec::with_capacity(n);
    for i in 0..n {
        let center = y.g[(i, i)];
        let radius: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| y.g[(i, j)].abs())
            .sum();
        discs.push(GershgorinDisc {
            bus: i,
            center,
            radius,
            nonnegative: center >= radius - PASSIVITY_EPS,
        });
    }
    let h = assemble_block(y).expect("admittance pair is square by construction");
    let sym = (&h.h + h.h.transpose()) * 0.5;
    let min_symmetric_eigenvalue = sym
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let all_discs_nonnegative = discs.iter().all(|d| d.nonnegative);
    PassivityCertificate {
        discs,
        min_symmetric_eigenvalue,
        all_discs_nonnegative,
        passes: min_symmetric_eigenvalue >= -PASSIVITY_EPS,
    }
}

/// Folds constant-impedance load equivalents into the admittance diagonal.
///
/// Each load `(bus, p, q)` is converted at the given bus voltage into the
/// shunt admittance `(p − jq)/|v|²`, so that the augmented map returns
/// machine injection currents at machine buses and zero at pure load buses.
pub fn augment_with_loads(
    y: &AdmittancePair,
    loads: &[(usize, f64, f64)],
    v: &[crate::frames::ComplexPhasor],
) -> Result<AdmittancePair, NetworkError> {
    let n = y.n_buses();
    if v.len() != n {
        return Err(NetworkError::DimensionMismatch(format!(
            "expected {n} bus voltages, got {}",
            v.len()
        )));
    }
    let mut out = y.clone();
    for &(bus, p, q) in loads {
        if bus >= n {
            return Err(NetworkError::IndexOutOfRange {
                index: bus,
                n_buses: n,
            });
        }
        let v_sq = v[bus].magnitude().powi(2);
        if v_sq < 1e-12 {
            return Err(NetworkError::DimensionMismatch(format!(
                "load bus {bus} has near-zero voltage, cannot convert load to impedance"
            )));
        }
        out.g[(bus, bus)] += p / v_sq;
        out.b[(bus, bus)] += -q / v_sq;
    }
    Ok(out)
}

/// Eliminates the buses not listed in `keep` from a complex admittance
/// matrix under the assumption that they carry zero net current injection
/// (Schur complement of the interior block).
pub fn reduce_admittance(
    y: &DMatrix<Complex64>,
    keep: &[usize],
) -> Result<DMatrix<Complex64>, NetworkError> {
    let n = y.nrows();
    for &k in keep {
        if k >= n {
            return Err(NetworkError::IndexOutOfRange {
                index: k,
                n_buses: n,
            });
        }
    }
    let drop: Vec<usize> = (0..n).filter(|i| !keep.contains(i)).collect();
    if drop.is_empty() {
        return Ok(y.clone());
    }
    let take = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| y[(rows[i], cols[j])])
    };
    let y_kk = take(keep, keep);
    let y_kd = take(keep, &drop);
    let y_dk = take(&drop, keep);
    let y_dd = take(&drop, &drop);
    let lu = y_dd.lu();
    let solved = lu.solve(&y_dk).ok_or(NetworkError::SingularReduction)?;
    Ok(y_kk - y_kd * solved)
}
