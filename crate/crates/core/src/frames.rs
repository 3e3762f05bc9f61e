//! Reference-frame machinery: balanced three-phase signals, the orthogonal
//! (0,d,q) projection, rectangular phasors, and rotation between the system
//! reference frame and each machine's local frame.
//!
//! Conventions used throughout the crate:
//!
//! * the system reference frame rotates at synchronous speed; phasors in it
//!   are stored rectangular as [`ComplexPhasor`] `(re, im)` = `(a, b)`
//!   components,
//! * a machine frame sits at angle `delta` ahead of the system frame;
//!   [`to_machine_frame`] maps `(a, b)` components to `(q, d)` components,
//! * all angles are radians, all magnitudes per-unit.

use std::f64::consts::{FRAC_PI_3, TAU};

/// Instantaneous values of a three-phase signal, per-unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreePhaseSample {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Rectangular-form phasor in the system reference frame.
///
/// `re` is the a-component and `im` the b-component of the signal it
/// represents; both are per-unit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComplexPhasor {
    pub re: f64,
    pub im: f64,
}

impl ComplexPhasor {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn from_polar(magnitude: f64, angle: f64) -> Self {
        Self {
            re: magnitude * angle.cos(),
            im: magnitude * angle.sin(),
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn angle(&self) -> f64 {
        self.im.atan2(self.re)
    }

    pub fn as_complex(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.re, self.im)
    }

    pub fn from_complex(z: num_complex::Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

/// Phase difference between a local machine reference frame and the system
/// reference frame, stored normalized to `[0, 2π)`.
///
/// Normalization happens on construction only; arithmetic on the raw value
/// is left to callers so that Jacobians never see a hidden wrap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameAngle {
    delta: f64,
}

impl FrameAngle {
    pub fn new(delta: f64) -> Self {
        Self {
            delta: delta.rem_euclid(TAU),
        }
    }

    pub fn radians(&self) -> f64 {
        self.delta
    }
}

/// Builds the balanced three-phase waveform sample with the given amplitude
/// and phase: `√2·|x|·(cos γ, cos(γ − 2π/3), cos(γ + 2π/3))`.
///
/// The components of a balanced signal sum to zero.
pub fn balanced_waveform(amplitude: f64, gamma: f64) -> ThreePhaseSample {
    assert!(amplitude >= 0.0, "waveform amplitude must be nonnegative");
    let scale = std::f64::consts::SQRT_2 * amplitude;
    ThreePhaseSample {
        a: scale * gamma.cos(),
        b: scale * (gamma - 2.0 * FRAC_PI_3).cos(),
        c: scale * (gamma + 2.0 * FRAC_PI_3).cos(),
    }
}

/// The scaled projection matrix rows used by [`park_transform`]; row order
/// is (0, d, q).
fn park_matrix(rho: f64) -> [[f64; 3]; 3] {
    let k = (2.0f64 / 3.0).sqrt();
    let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
    [
        [k * inv_sqrt2, k * inv_sqrt2, k * inv_sqrt2],
        [
            k * rho.cos(),
            k * (rho - 2.0 * FRAC_PI_3).cos(),
            k * (rho + 2.0 * FRAC_PI_3).cos(),
        ],
        [
            k * rho.sin(),
            k * (rho - 2.0 * FRAC_PI_3).sin(),
            k * (rho + 2.0 * FRAC_PI_3).sin(),
        ],
    ]
}

/// Orthogonal (0,d,q) projection of a three-phase sample onto axes rotating
/// with phase `rho`. Returns `(x0, xd, xq)`.
pub fn park_transform(sample: ThreePhaseSample, rho: f64) -> (f64, f64, f64) {
    let m = park_matrix(rho);
    let v = [sample.a, sample.b, sample.c];
    let row = |r: &[f64; 3]| r[0] * v[0] + r[1] * v[1] + r[2] * v[2];
    (row(&m[0]), row(&m[1]), row(&m[2]))
}

/// Inverse of [`park_transform`]: the transpose of the orthogonal projection
/// matrix maps `(x0, xd, xq)` back to instantaneous phase values.
pub fn inverse_park_transform(x0: f64, xd: f64, xq: f64, rho: f64) -> ThreePhaseSample {
    let m = park_matrix(rho);
    let col = |j: usize| m[0][j] * x0 + m[1][j] * xd + m[2][j] * xq;
    ThreePhaseSample {
        a: col(0),
        b: col(1),
        c: col(2),
    }
}

/// Rotates system-frame phasor components `(a, b)` into the machine frame at
/// angle `delta`, returning `(q, d)` components.
pub fn to_machine_frame(v: ComplexPhasor, delta: FrameAngle) -> (f64, f64) {
    let (sin_d, cos_d) = delta.radians().sin_cos();
    (cos_d * v.re + sin_d * v.im, -sin_d * v.re + cos_d * v.im)
}

/// Exact algebraic inverse of [`to_machine_frame`]: rotates machine-frame
/// `(q, d)` components back into the system frame.
pub fn to_system_frame(q: f64, d: f64, delta: FrameAngle) -> ComplexPhasor {
    let (sin_d, cos_d) = delta.radians().sin_cos();
    ComplexPhasor {
        re: cos_d * q - sin_d * d,
        im: sin_d * q + cos_d * d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-12;

    #[test]
    fn balanced_waveform_at_zero_phase() {
        let s = balanced_waveform(1.0, 0.0);
        let sqrt2 = std::f64::consts::SQRT_2;
        assert!((s.a - sqrt2).abs() < TOL);
        assert!((s.b + sqrt2 / 2.0).abs() < TOL);
        assert!((s.c + sqrt2 / 2.0).abs() < TOL);
    }

    #[test]
    fn balanced_waveform_zero_amplitude() {
        let s = balanced_waveform(0.0, 1.3);
        assert_eq!((s.a, s.b, s.c), (0.0, 0.0, 0.0));
    }

    #[test]
    fn balanced_waveform_matches_cosine_oracle() {
        // Independent oracle: evaluate the three cosines one by one.
        let (amp, gamma) = (0.7, 0.4);
        let s = balanced_waveform(amp, gamma);
        let sqrt2 = std::f64::consts::SQRT_2;
        let expect = [
            sqrt2 * amp * gamma.cos(),
            sqrt2 * amp * (gamma - 2.0 * std::f64::consts::PI / 3.0).cos(),
            sqrt2 * amp * (gamma + 2.0 * std::f64::consts::PI / 3.0).cos(),
        ];
        assert!((s.a - expect[0]).abs() < TOL);
        assert!((s.b - expect[1]).abs() < TOL);
        assert!((s.c - expect[2]).abs() < TOL);
    }

    #[test]
    fn balanced_components_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let amp: f64 = rng.random_range(0.0..2.0);
            let gamma: f64 = rng.random_range(-10.0..10.0);
            let s = balanced_waveform(amp, gamma);
            assert!((s.a + s.b + s.c).abs() < TOL);
        }
    }

    #[test]
    fn park_of_aligned_waveform_lands_on_d_axis() {
        // With rho = gamma the projection is √3·|x| on the d-axis and the
        // 0-component vanishes.
        let (amp, gamma) = (0.85, 1.1);
        let (x0, xd, xq) = park_transform(balanced_waveform(amp, gamma), gamma);
        assert!(x0.abs() < TOL);
        assert!((xd - 3.0f64.sqrt() * amp).abs() < TOL);
        assert!(xq.abs() < TOL);
    }

    #[test]
    fn park_of_zero_sample_is_zero() {
        let z = ThreePhaseSample {
            a: 0.0,
            b: 0.0,
            c: 0.0,
        };
        assert_eq!(park_transform(z, 0.37), (0.0, 0.0, 0.0));
    }

    #[test]
    fn park_matches_literal_matrix_product() {
        // Independent oracle: write the 3x3 product out longhand.
        let rho = 0.9f64;
        let (a, b, c) = (0.3, -1.2, 0.7);
        let k = (2.0f64 / 3.0).sqrt();
        let x0 = k * (a + b + c) / std::f64::consts::SQRT_2;
        let xd = k
            * (rho.cos() * a
                + (rho - 2.0 * std::f64::consts::PI / 3.0).cos() * b
                + (rho + 2.0 * std::f64::consts::PI / 3.0).cos() * c);
        let xq = k
            * (rho.sin() * a
                + (rho - 2.0 * std::f64::consts::PI / 3.0).sin() * b
                + (rho + 2.0 * std::f64::consts::PI / 3.0).sin() * c);
        let got = park_transform(ThreePhaseSample { a, b, c }, rho);
        assert!((got.0 - x0).abs() < TOL);
        assert!((got.1 - xd).abs() < TOL);
        assert!((got.2 - xq).abs() < TOL);
    }

    #[test]
    fn park_matrix_is_orthogonal() {
        for &rho in &[0.0, 0.3, 1.7, 4.4] {
            let m = park_matrix(rho);
            for i in 0..3 {
                for j in 0..3 {
                    let dot: f64 = (0..3).map(|k| m[i][k] * m[j][k]).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < TOL, "rows {i},{j} at rho={rho}");
                }
            }
        }
    }

    #[test]
    fn quarter_turn_rotation() {
        let delta = FrameAngle::new(std::f64::consts::FRAC_PI_2);
        let (q, d) = to_machine_frame(ComplexPhasor::new(1.0, 0.0), delta);
        assert!(q.abs() < TOL);
        assert!((d + 1.0).abs() < TOL);
        let back = to_system_frame(0.0, -1.0, delta);
        assert!((back.re - 1.0).abs() < TOL);
        assert!(back.im.abs() < TOL);
    }

    #[test]
    fn zero_angle_is_identity() {
        let delta = FrameAngle::new(0.0);
        let v = ComplexPhasor::new(0.42, -0.9);
        let (q, d) = to_machine_frame(v, delta);
        assert_eq!((q, d), (v.re, v.im));
        assert_eq!(to_system_frame(v.re, v.im, delta), v);
    }

    #[test]
    fn frame_angle_normalization_is_idempotent() {
        let raw = -5.0 * std::f64::consts::PI + 0.25;
        let once = FrameAngle::new(raw);
        let twice = FrameAngle::new(once.radians());
        assert!(once.radians() >= 0.0 && once.radians() < TAU);
        assert!((once.radians() - twice.radians()).abs() < TOL);
    }

    #[test]
    fn phasor_polar_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let mag: f64 = rng.random_range(1e-3..10.0);
            let ang: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let p = ComplexPhasor::from_polar(mag, ang);
            assert!((p.magnitude() - mag).abs() < TOL);
            assert!((p.angle() - ang).abs() < TOL);
        }
    }

    proptest! {
        #[test]
        fn machine_frame_round_trip(re in -10.0..10.0f64, im in -10.0..10.0f64, raw in -20.0..20.0f64) {
            let delta = FrameAngle::new(raw);
            let v = ComplexPhasor::new(re, im);
            let (q, d) = to_machine_frame(v, delta);
            let back = to_system_frame(q, d, delta);
            prop_assert!((back.re - v.re).abs() < TOL);
            prop_assert!((back.im - v.im).abs() < TOL);
            // Rotation preserves the norm.
            prop_assert!((q.hypot(d) - v.magnitude()).abs() < TOL);
        }

        #[test]
        fn park_round_trip(a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64, rho in -20.0..20.0f64) {
            let s = ThreePhaseSample { a, b, c };
            let (x0, xd, xq) = park_transform(s, rho);
            let back = inverse_park_transform(x0, xd, xq, rho);
            prop_assert!((back.a - a).abs() < TOL);
            prop_assert!((back.b - b).abs() < TOL);
            prop_assert!((back.c - c).abs() < TOL);
        }

        #[test]
        fn balanced_signals_have_no_zero_sequence(amp in 0.0..3.0f64, gamma in -20.0..20.0f64, rho in -20.0..20.0f64) {
            let (x0, _, _) = park_transform(balanced_waveform(amp, gamma), rho);
            prop_assert!(x0.abs() < TOL);
        }
    }
}
