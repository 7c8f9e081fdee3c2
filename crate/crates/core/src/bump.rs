//! Compactly supported bump `φ(ξ) = A χ(|ξ|/ρ)` in `ℝ^d` and its Fourier
//! transform `φ̂(x) = ∫ φ(ξ) e^{−2πi x·ξ} dξ`.
//!
//! The radial transform of `χ(u) = exp(−1/(1−u²))` is tabulated once per
//! dimension: project `χ` onto a line (Abel transform), then take a 1-D
//! cosine transform by FFT of the trapezoid sums.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::FftPlanner;
use statrs::function::gamma::gamma;
use thiserror::Error;

/// Samples of the projected profile per unit length.
const SAMPLES_PER_UNIT: usize = 1024;
const FFT_LEN: usize = 65536;
/// Spacing of the tabulated frequencies.
pub const OMEGA_STEP: f64 = SAMPLES_PER_UNIT as f64 / FFT_LEN as f64;
const INTERP_POINTS: usize = 10;
/// Frequencies beyond this are dominated by rounding in the table.
const ENVELOPE_OMEGA_MAX: f64 = 150.0;
const ENVELOPE_POWER: i32 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BumpError {
    #[error("support radius must lie in (0, 1], got {0}")]
    InvalidRadius(f64),
    #[error("dimension must be between 1 and 6, got {0}")]
    InvalidDimension(usize),
    #[error("transform lower bound not certified: min {min:.6e}, error estimate {err:.3e}")]
    CertificationFailed { min: f64, err: f64 },
}

/// `χ(u) = exp(−1/(1−u²))` for `|u| < 1`, zero otherwise.
#[inline]
pub fn chi(u: f64) -> f64 {
    let s = 1.0 - u * u;
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// Area of the unit sphere `S^{m−1} ⊂ ℝ^m`.
fn sphere_area(m: usize) -> f64 {
    2.0 * PI.powf(m as f64 / 2.0) / gamma(m as f64 / 2.0)
}

/// Tanh-sinh nodes and weights on `[0, 1]`, returned as `(s, 1 − s, w)`.
fn tanh_sinh_nodes() -> Vec<(f64, f64, f64)> {
    let h = 1.0 / 64.0;
    let mut out = Vec::new();
    for i in -256i32..=256 {
        let t = i as f64 * h;
        let arg = 0.5 * PI * t.sinh();
        let one_minus = 1.0 / (1.0 + (2.0 * arg).exp());
        let s = 1.0 - one_minus;
        let w = h * 0.5 * PI * t.cosh() / (2.0 * arg.cosh().powi(2));
        if w > 0.0 && w.is_finite() && one_minus > 0.0 {
            out.push((s, one_minus, w));
        }
    }
    out
}

/// Integral of `χ(|(u, v)|)` over `v ∈ ℝ^{d−1}`.
pub fn projected_profile(d: usize, u: f64) -> f64 {
    thread_local! {
        static NODES: Vec<(f64, f64, f64)> = tanh_sinh_nodes();
    }
    if d == 1 {
        return chi(u);
    }
    let a = 1.0 - u * u;
    if a <= 0.0 {
        return 0.0;
    }
    let inner = NODES.with(|nodes| {
        let mut acc = 0.0;
        for &(s, one_minus, w) in nodes {
            let q = a * one_minus * (1.0 + s);
            acc += w * (-1.0 / q).exp() * s.powi(d as i32 - 2);
        }
        acc
    });
    sphere_area(d - 1) * a.powf((d as f64 - 1.0) / 2.0) * inner
}

/// Radial transform `χ̂_d(ω)` on the grid `ω_j = j·OMEGA_STEP`.
#[derive(Debug)]
pub struct UnitTransform {
    d: usize,
    values: Vec<f64>,
    /// Pointwise difference to the table built with twice the sample step.
    step_error: Vec<f64>,
    derivative_bound: f64,
}

fn cosine_table(samples: &[f64], du: f64, len: usize) -> Vec<f64> {
    // samples[j] = P(j du), j ≥ 0, with P even.
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    buf[0] = Complex64::new(samples[0], 0.0);
    for (j, &v) in samples.iter().enumerate().skip(1) {
        buf[j] = Complex64::new(v, 0.0);
        buf[len - j] = Complex64::new(v, 0.0);
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    buf[..=len / 2].iter().map(|z| z.re * du).collect()
}

impl UnitTransform {
    fn build(d: usize) -> Self {
        let du = 1.0 / SAMPLES_PER_UNIT as f64;
        let samples: Vec<f64> = (0..=SAMPLES_PER_UNIT).map(|j| projected_profile(d, j as f64 * du)).collect();
        let values = cosine_table(&samples, du, FFT_LEN);
        let coarse: Vec<f64> = samples.iter().step_by(2).copied().collect();
        let coarse_values = cosine_table(&coarse, 2.0 * du, FFT_LEN / 2);
        let step_error = values
            .iter()
            .zip(coarse_values.iter().chain(std::iter::repeat(&0.0)))
            .map(|(a, b)| (a - b).abs())
            .collect();
        // |χ̂'| ≤ 2π ∫ |u| P(u) du.
        let first_moment: f64 = samples.iter().enumerate().map(|(j, p)| 2.0 * j as f64 * du * p * du).sum();
        Self { d, values, step_error, derivative_bound: 2.0 * PI * first_moment }
    }

    /// Shared table for dimension `d`.
    pub fn get(d: usize) -> Arc<UnitTransform> {
        static CACHE: OnceLock<Mutex<Vec<Option<Arc<UnitTransform>>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(vec![None; 8]));
        let mut guard = cache.lock().expect("transform cache poisoned");
        guard[d].get_or_insert_with(|| Arc::new(UnitTransform::build(d))).clone()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Largest tabulated frequency.
    pub fn omega_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * OMEGA_STEP
    }

    pub fn grid_value(&self, j: usize) -> f64 {
        self.values[j]
    }

    pub fn grid_len(&self) -> usize {
        self.values.len()
    }

    fn sample(&self, j: i64) -> f64 {
        let j = j.unsigned_abs() as usize;
        self.values.get(j).copied().unwrap_or(0.0)
    }

    fn interpolate(&self, omega: f64, points: usize) -> f64 {
        let t = omega.abs() / OMEGA_STEP;
        let base = t.floor() as i64;
        let start = base - (points as i64 / 2 - 1);
        let mut acc = 0.0;
        for a in 0..points as i64 {
            let ja = start + a;
            let mut w = 1.0;
            for b in 0..points as i64 {
                if a != b {
                    let jb = start + b;
                    w *= (t - jb as f64) / (ja - jb) as f64;
                }
            }
            acc += w * self.sample(ja);
        }
        acc
    }

    /// `χ̂_d(ω)`; zero beyond the table.
    pub fn eval(&self, omega: f64) -> f64 {
        let w = omega.abs();
        if w > self.omega_max() - INTERP_POINTS as f64 * OMEGA_STEP {
            return 0.0;
        }
        let t = w / OMEGA_STEP;
        if (t - t.round()).abs() < 1e-12 {
            return self.sample(t.round() as i64);
        }
        self.interpolate(w, INTERP_POINTS)
    }

    /// Estimated error of [`eval`](Self::eval) at `omega`.
    pub fn error_estimate(&self, omega: f64) -> f64 {
        let j = (omega.abs() / OMEGA_STEP).round() as usize;
        let lo = j.saturating_sub(INTERP_POINTS);
        let hi = (j + INTERP_POINTS).min(self.step_error.len() - 1);
        let step = self.step_error[lo..=hi].iter().fold(0.0f64, |m, &v| m.max(v));
        let interp = (self.interpolate(omega, INTERP_POINTS) - self.interpolate(omega, INTERP_POINTS - 2)).abs();
        step + interp
    }

    /// Bound on `|dχ̂_d/dω|`.
    pub fn derivative_bound(&self) -> f64 {
        self.derivative_bound
    }
}

/// `φ(ξ) = A χ(|ξ|/ρ)` with a certified lower bound `φ̂ ≥ L̂ > 1` on the
/// unit ball.
#[derive(Debug, Clone)]
pub struct BumpProfile {
    d: usize,
    rho: f64,
    amplitude: f64,
    transform: Arc<UnitTransform>,
    lower_bound: f64,
    certification_error: f64,
    tail_envelope: f64,
}

impl BumpProfile {
    pub fn new(d: usize, rho: f64) -> Result<Self, BumpError> {
        if !(1..=6).contains(&d) {
            return Err(BumpError::InvalidDimension(d));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(BumpError::InvalidRadius(rho));
        }
        let transform = UnitTransform::get(d);

        // Minimum of χ̂_d over [0, ρ], sampled finer than the table.
        let samples = 4096;
        let h = rho / samples as f64;
        let mut min = f64::INFINITY;
        let mut at = 0.0;
        for i in 0..=samples {
            let w = i as f64 * h;
            let v = transform.eval(w);
            if v < min {
                min = v;
                at = w;
            }
        }
        let err = transform.error_estimate(at) + transform.derivative_bound() * h / 2.0;
        if min <= 0.0 {
            return Err(BumpError::CertificationFailed { min, err });
        }
        let scale = rho.powi(d as i32);
        let amplitude = 1.01 / (scale * min);
        let lower_bound = amplitude * scale * min;
        let certification_error = amplitude * scale * err;
        if certification_error >= lower_bound - 1.0 {
            return Err(BumpError::CertificationFailed { min: lower_bound, err: certification_error });
        }

        let mut tail_envelope = 0.0f64;
        let top = (ENVELOPE_OMEGA_MAX / OMEGA_STEP) as usize;
        for j in 0..=top.min(transform.grid_len() - 1) {
            let r = j as f64 * OMEGA_STEP / rho;
            let v = amplitude * scale * transform.grid_value(j).abs();
            tail_envelope = tail_envelope.max(v * (1.0 + r).powi(ENVELOPE_POWER));
        }

        Ok(Self {
            d,
            rho,
            amplitude,
            transform,
            lower_bound,
            certification_error,
            tail_envelope,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Certified `min_{|x|≤1} φ̂(x)`.
    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn certification_error(&self) -> f64 {
        self.certification_error
    }

    /// `T = max |φ̂(x)| (1 + |x|)^8`.
    pub fn tail_envelope(&self) -> f64 {
        self.tail_envelope
    }

    pub fn envelope_power(&self) -> i32 {
        ENVELOPE_POWER
    }

    /// Bound `T (1 + r)^{−8}` on `|φ̂(x)|` at `|x| = r`.
    pub fn tail_bound(&self, r: f64) -> f64 {
        self.tail_envelope * (1.0 + r).powi(-ENVELOPE_POWER)
    }

    #[inline]
    pub fn phi_radial(&self, r: f64) -> f64 {
        self.amplitude * chi(r / self.rho)
    }

    pub fn phi(&self, xi: &[f64]) -> f64 {
        self.phi_radial(xi.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    #[inline]
    pub fn phi_hat_radial(&self, r: f64) -> f64 {
        self.amplitude * self.rho.powi(self.d as i32) * self.transform.eval(self.rho * r)
    }

    pub fn phi_hat(&self, x: &[f64]) -> f64 {
        self.phi_hat_radial(x.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// Largest `|x|` at which `φ̂` is tabulated.
    pub fn phi_hat_range(&self) -> f64 {
        self.transform.omega_max() / self.rho
    }

    /// Radius `X` such that the lattice sum `Σ_η |φ̂(σ(z − η))|` over
    /// `σ|z − η| > X` is below `budget`, with a safety factor of 100 on the
    /// envelope.
    pub fn truncation_radius(&self, sigma: f64, budget: f64) -> f64 {
        let d = self.d as f64;
        let p = ENVELOPE_POWER as f64;
        let c = 100.0 * self.tail_envelope * lattice_tail_factor(self.d, sigma, sigma * d.sqrt() / 2.0);
        let x0 = (c / budget).powf(1.0 / (p - d)) - 1.0;
        x0.max(0.0) + sigma * d.sqrt() / 2.0
    }
}

/// Bound on `Σ_{η ∈ ℤ^d, σ|z−η| > X} (1 + σ|z − η|)^{−8}`.
///
/// Each lattice point owns a unit cell within `√d/2` of it, so the sum is at
/// most `∫_{|w| > R − √d/2} (1 + σ|w|)^{−8} dw` with `R = X/σ`, which is
/// `|S^{d−1}| / (σ^d (8 − d)) · (1 + X − σ√d/2)^{d−8}`.
pub fn lattice_tail_factor(d: usize, sigma: f64, x: f64) -> f64 {
    let df = d as f64;
    let p = ENVELOPE_POWER as f64;
    let x0 = (x - sigma * df.sqrt() / 2.0).max(0.0);
    sphere_area(d) / (sigma.powf(df) * (p - df)) * (1.0 + x0).powf(df - p)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference transforms from independent Hankel-transform quadrature.
    const INT_CHI: f64 = 0.443993816168079437823;
    const D1: [(f64, f64); 4] = [
        (0.25, 0.363144447750437627622),
        (0.5, 0.180504895088572580540),
        (1.0, -0.0428575388855629280892),
        (2.0, 0.000290814380100542153418),
    ];
    const D2: [(f64, f64); 4] = [
        (0.0, 0.466512393178330068880),
        (0.25, 0.395706468524958177264),
        (0.5, 0.229624323378219406715),
        (1.0, -0.0181314824580562378582),
    ];
    const D3: [(f64, f64); 3] = [
        (0.0, 0.441088887276604400456),
        (0.25, 0.383477052826725821072),
        (0.5, 0.244473950351773592454),
    ];

    #[test]
    fn unit_transform_matches_reference_values() {
        let t1 = UnitTransform::get(1);
        assert!((t1.eval(0.0) - INT_CHI).abs() < 1e-13);
        assert!((t1.eval(0.0) - 0.443994).abs() < 1e-6);
        for (w, v) in D1 {
            assert!((t1.eval(w) - v).abs() < 1e-13, "d=1 ω={w}");
        }
        let t2 = UnitTransform::get(2);
        for (w, v) in D2 {
            assert!((t2.eval(w) - v).abs() < 1e-12, "d=2 ω={w}: {}", t2.eval(w));
        }
        let t3 = UnitTransform::get(3);
        for (w, v) in D3 {
            assert!((t3.eval(w) - v).abs() < 1e-12, "d=3 ω={w}");
        }
    }

    #[test]
    fn interpolation_between_grid_points() {
        let t = UnitTransform::get(1);
        let w = 0.3 + OMEGA_STEP / 3.0;
        // Direct trapezoid transform at an off-grid frequency.
        let n = 20000;
        let h = 1.0 / n as f64;
        let direct: f64 = (1..n).map(|j| 2.0 * h * chi(j as f64 * h) * (2.0 * PI * j as f64 * h * w).cos()).sum::<f64>()
            + h * chi(0.0);
        assert!((t.eval(w) - direct).abs() < 1e-12);
        assert!(t.error_estimate(w) < 1e-12);
    }

    #[test]
    fn unit_radius_fails_certification() {
        assert!(matches!(BumpProfile::new(1, 1.0), Err(BumpError::CertificationFailed { .. })));
    }

    #[test]
    fn half_radius_is_certified() {
        let b = BumpProfile::new(1, 0.5).unwrap();
        assert!((b.lower_bound() - 1.01).abs() < 1e-12);
        assert!(b.certification_error() < 1e-3);
        assert!(b.lower_bound() - b.certification_error() > 1.0);
        let phi_hat_0 = b.amplitude() * INT_CHI * 0.5;
        assert!((b.phi_hat(&[0.0]) - phi_hat_0).abs() < 1e-12);
        assert!((b.amplitude() - 11.1908).abs() < 1e-3);
        for i in 0..=100 {
            assert!(b.phi_hat(&[i as f64 / 100.0]) >= 1.0);
        }
    }

    #[test]
    fn support_and_evenness() {
        let b = BumpProfile::new(2, 0.5).unwrap();
        assert_eq!(b.phi(&[0.5 + 1e-12, 0.0]), 0.0);
        assert!(b.phi(&[0.49, 0.0]) > 0.0);
        assert_eq!(b.phi_hat(&[1.3, -0.4]), b.phi_hat(&[-1.3, 0.4]));
    }

    #[test]
    fn envelope_dominates_transform() {
        let b = BumpProfile::new(1, 0.5).unwrap();
        for i in 0..3000 {
            let r = i as f64 * 0.1;
            assert!(b.phi_hat_radial(r).abs() <= b.tail_bound(r) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn truncation_radius_meets_budget() {
        let b = BumpProfile::new(1, 0.5).unwrap();
        let sigma = 13f64.sqrt();
        let x = b.truncation_radius(sigma, 1e-10);
        // Brute-force tail of the envelope sum for z = 0.
        let tail: f64 = (1..100_000)
            .map(|eta| sigma * eta as f64)
            .filter(|&r| r > x)
            .map(|r| 2.0 * b.tail_bound(r))
            .sum();
        assert!(100.0 * tail < 1e-10, "{tail:e}");
        assert!(x > 100.0 && x < b.phi_hat_range());
    }
}
