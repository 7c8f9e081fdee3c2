//! Highest-weight spherical harmonics `Q_k(x) = k^{(n−1)/4}(x₁ + i x₂)^k` and
//! their averages over deck groups.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::{EquatorStabilizer, SphereQuotient};
use crate::sum::ComplexSum;

/// Degrees above this use log-space magnitudes.
const LOG_MAGNITUDE_ABOVE: u64 = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SphereModeError {
    #[error("point is not on the unit sphere (| |x| - 1 | = {0:.3e})")]
    NotOnSphere(f64),
    #[error("point has {got} coordinates, expected {expected}")]
    WrongDimension { expected: usize, got: usize },
    #[error("degree {k} is not a multiple of the stabilizer order {m}")]
    KNotMultipleOfM { k: u64, m: usize },
    #[error("degree must be at least 1")]
    ZeroDegree,
}

/// `λ_k = √(k(k + n − 1))`.
pub fn sphere_eigenvalue(n: usize, k: u64) -> f64 {
    let k = k as f64;
    (k * (k + n as f64 - 1.0)).sqrt()
}

/// `z^k` by repeated squaring.
///
/// Negating `z` negates every odd power bit for bit, which keeps the
/// antipodal cancellation on `RP^n` exact.
fn powi_complex(z: Complex64, mut k: u64) -> Complex64 {
    let mut base = z;
    let mut acc = Complex64::new(1.0, 0.0);
    while k > 0 {
        if k & 1 == 1 {
            acc *= base;
        }
        k >>= 1;
        if k > 0 {
            base = base * base;
        }
    }
    acc
}

/// `Q_k(x)` without checking `|x| = 1`.
#[inline]
pub fn highest_weight_unchecked(n: usize, k: u64, x: &[f64]) -> Complex64 {
    let r = x[0].hypot(x[1]);
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let kf = k as f64;
    let exponent = (n as f64 - 1.0) / 4.0;
    let magnitude = if k > LOG_MAGNITUDE_ABOVE {
        (kf * r.min(1.0).ln() + exponent * kf.ln()).exp()
    } else {
        kf.powf(exponent) * r.min(1.0).powi(k as i32)
    };
    let phase = powi_complex(Complex64::new(x[0] / r, x[1] / r), k);
    phase * magnitude
}

/// `Q_k(x)` for `x ∈ S^n ⊂ ℝ^{n+1}`.
pub fn highest_weight(n: usize, k: u64, x: &[f64]) -> Result<Complex64, SphereModeError> {
    if x.len() != n + 1 {
        return Err(SphereModeError::WrongDimension { expected: n + 1, got: x.len() });
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(SphereModeError::NotOnSphere((norm - 1.0).abs()));
    }
    if k == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    Ok(highest_weight_unchecked(n, k, x))
}

/// Geodesic distance from `x` to the circle `{(cos θ, sin θ, 0, …)}`.
pub fn distance_to_equator(x: &[f64]) -> f64 {
    x[0].hypot(x[1]).min(1.0).acos()
}

fn apply(g: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for r in 0..d {
        let mut acc = 0.0;
        for c in 0..d {
            acc += g[(r, c)] * x[c];
        }
        out[r] = acc;
    }
}

/// `Σ_{g∈Γ} Q_k(g x)` for any degree, summed in group order.
pub fn raw_deck_sum(quotient: &SphereQuotient, k: u64, x: &[f64]) -> Complex64 {
    let n = quotient.dim();
    let mut buf = vec![0.0; n + 1];
    let mut acc = ComplexSum::new();
    for g in quotient.elements() {
        apply(g, x, &mut buf);
        acc.add(highest_weight_unchecked(n, k, &buf));
    }
    acc.value()
}

/// `Q_k` on the sphere, or its deck sum on a quotient.
#[derive(Debug, Clone)]
pub struct SphereMode {
    n: usize,
    k: u64,
    lambda: f64,
    group: Option<Arc<SphereQuotient>>,
    stabilizer_order: usize,
    equator_multiple: Option<f64>,
}

impl SphereMode {
    /// `Q_k` on `S^n`.
    pub fn plain(n: usize, k: u64) -> Result<Self, SphereModeError> {
        if k == 0 {
            return Err(SphereModeError::ZeroDegree);
        }
        Ok(Self {
            n,
            k,
            lambda: sphere_eigenvalue(n, k),
            group: None,
            stabilizer_order: 1,
            equator_multiple: Some(1.0),
        })
    }

    /// Deck sum of `Q_k` with `k = ℓ m`.
    pub fn deck_sum(
        quotient: Arc<SphereQuotient>,
        stabilizer: &EquatorStabilizer,
        ell: u64,
    ) -> Result<Self, SphereModeError> {
        let k = ell * stabilizer.order() as u64;
        Self::with_degree(quotient, stabilizer, k)
    }

    /// Deck sum for an explicit degree, which must be a multiple of `m`.
    pub fn with_degree(
        quotient: Arc<SphereQuotient>,
        stabilizer: &EquatorStabilizer,
        k: u64,
    ) -> Result<Self, SphereModeError> {
        if k == 0 {
            return Err(SphereModeError::ZeroDegree);
        }
        let m = stabilizer.order();
        if k % m as u64 != 0 {
            return Err(SphereModeError::KNotMultipleOfM { k, m });
        }
        // When every element rotates the reference circle within its own
        // plane, each summand equals Q_k and the sum is |Γ| Q_k.
        let equator_multiple =
            (stabilizer.order() == quotient.order()).then_some(quotient.order() as f64);
        Ok(Self {
            n: quotient.dim(),
            k,
            lambda: sphere_eigenvalue(quotient.dim(), k),
            group: Some(quotient),
            stabilizer_order: m,
            equator_multiple,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> u64 {
        self.k
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn stabilizer_order(&self) -> usize {
        self.stabilizer_order
    }

    /// Order of the deck group (1 on the plain sphere).
    pub fn group_order(&self) -> usize {
        self.group.as_ref().map_or(1, |g| g.order())
    }

    pub fn group(&self) -> Option<&SphereQuotient> {
        self.group.as_deref()
    }

    /// `c` with `e = c · Q_k` identically, when such a constant exists.
    pub fn equator_multiple(&self) -> Option<f64> {
        self.equator_multiple
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        match &self.group {
            None => highest_weight_unchecked(self.n, self.k, x),
            Some(g) => raw_deck_sum(g, self.k, x),
        }
    }
}

/// Laplace-Beltrami operator at `x ∈ S^n` by central differences.
///
/// Uses the degree-0 homogeneous extension `F(y) = f(y/|y|)`, for which the
/// spherical Laplacian equals the ambient one on the unit sphere.
pub fn laplace_beltrami_fd<F>(f: F, x: &[f64], h: f64) -> Complex64
where
    F: Fn(&[f64]) -> Complex64,
{
    let d = x.len();
    let ext = |y: &[f64]| {
        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let p: Vec<f64> = y.iter().map(|v| v / r).collect();
        f(&p)
    };
    let center = ext(x);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut y = x.to_vec();
    for i in 0..d {
        y[i] = x[i] + h;
        let plus = ext(&y);
        y[i] = x[i] - h;
        let minus = ext(&y);
        y[i] = x[i];
        acc += plus + minus - center * 2.0;
    }
    acc / (h * h)
}
