//! Knapp-type quasimodes on flat space forms.
//!
//! The torus mode lives in lattice coordinates `y = B⁻¹x`:
//!
//! `φ_λ(y) = (λδ)^{−d/4} e^{2πi k y_n} Σ_{ξ′} φ((ξ′ − λξ₀′)/√(λδ)) e^{2πi ξ′·(y′ − y₀′)}`
//!
//! with `d = n − 1`, and the space-form mode is `ψ(x) = Σ_i φ_λ(B⁻¹α_i(x))`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::bump::{BumpError, BumpProfile};
use crate::geometry::{AxisChoice, FlatQuotient, GeometryError, RigidMotion};
use crate::sum::{ComplexSum, NeumaierSum};

/// Dropped-mass budget for the Poisson-side lattice sum.
pub const POISSON_BUDGET: f64 = 1e-10;
/// Budget for the off-diagonal deck terms on the tube.
pub const OFF_DIAGONAL_BUDGET: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlatModeError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Bump(#[from] BumpError),
    #[error("lattice is degenerate: (ξ₀)_n = {0:.3e}")]
    DegenerateLattice(f64),
    #[error("δ = {delta} outside the admissible range [{low:.6}, 1] at λ = {lambda}")]
    DeltaOutOfRange { lambda: f64, delta: f64, low: f64 },
    #[error("spectral window violated by {} frequencies (margin {margin:.3e})", offending.len())]
    WindowViolated { offending: Vec<Vec<i64>>, margin: f64 },
    #[error("mode vanishes identically (all combined Fourier coefficients cancel)")]
    VanishingMode,
    #[error("coset data of the two frames differ at coset {0}")]
    FrameMismatch(usize),
    #[error("separation not reached: λδ = {lambda_delta:.3e} < {required:.3e}")]
    SeparationNotReached { lambda_delta: f64, required: f64 },
    #[error("degree must be at least 1")]
    ZeroDegree,
}

/// `e^{2πi t}` with `t` reduced to `[−1/2, 1/2]` first.
#[inline]
pub fn cis_turns(t: f64) -> Complex64 {
    let r = t - t.round();
    let (s, c) = (TAU * r).sin_cos();
    Complex64::new(c, s)
}

/// `G = (BᵀB)⁻¹`, the quadratic form with `|∇ e^{2πi ξ·B⁻¹x}|² = 4π² ξᵀGξ`.
pub fn quadratic_form(basis: &DMatrix<f64>) -> DMatrix<f64> {
    (basis.transpose() * basis)
        .try_inverse()
        .expect("basis validated as invertible")
}

/// `λ_k` and the point `ξ₀ = Bᵀb_n/|b_n|` of the ellipse `Q = 1` whose
/// normal is `e_n`. Then `(ξ₀)_n = |b_n|` and `λ_k (ξ₀)_n = k`.
pub fn select_frequency(f: &FlatQuotient, k: u64) -> Result<(f64, DVector<f64>), FlatModeError> {
    if k == 0 {
        return Err(FlatModeError::ZeroDegree);
    }
    let n = f.dim();
    let b_n = f.basis().column(n - 1).into_owned();
    let s = b_n.norm();
    if s <= f.tol() {
        return Err(FlatModeError::DegenerateLattice(s));
    }
    let xi0 = f.basis().transpose() * &b_n / s;
    Ok((k as f64 / xi0[n - 1], xi0))
}

/// Which lower bound on `δ` is enforced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaFloor {
    /// `δ ≥ 1/log λ`.
    Log,
    /// `δ ≥ λ^{−1+ε}`.
    Power(f64),
}

impl DeltaFloor {
    pub fn lower(&self, lambda: f64) -> f64 {
        match *self {
            DeltaFloor::Log => 1.0 / lambda.ln(),
            DeltaFloor::Power(eps) => lambda.powf(-1.0 + eps),
        }
    }
}

pub fn check_delta(lambda: f64, delta: f64, floor: DeltaFloor) -> Result<(), FlatModeError> {
    let low = floor.lower(lambda);
    let slack = 1e-12;
    if !(lambda > 1.0) || !(delta >= low * (1.0 - slack)) || delta > 1.0 + slack {
        return Err(FlatModeError::DeltaOutOfRange { lambda, delta, low });
    }
    Ok(())
}

/// Integer points `ξ′` with `|ξ′ − center| < radius`, in lexicographic order.
pub fn active_frequencies(center: &[f64], radius: f64) -> Vec<Vec<i64>> {
    let d = center.len();
    let lo: Vec<i64> = center.iter().map(|c| (c - radius).floor() as i64).collect();
    let hi: Vec<i64> = center.iter().map(|c| (c + radius).ceil() as i64).collect();
    let mut out = Vec::new();
    let mut cur = lo.clone();
    loop {
        let r2: f64 = cur.iter().zip(center).map(|(&x, c)| (x as f64 - c).powi(2)).sum();
        if r2 < radius * radius {
            out.push(cur.clone());
        }
        let mut i = d;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < hi[i] {
                cur[i] += 1;
                for j in i + 1..d {
                    cur[j] = lo[j];
                }
                break;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowCertificate {
    /// `min` over active frequencies of the distance of `√Q(ξ)` to the
    /// window edges; positive when every frequency lies strictly inside.
    pub margin: f64,
    pub active: usize,
    /// Largest `|√Q(ξ) − λ|`.
    pub max_offset: f64,
}

/// `√Q(ξ′, k) − λ = ζᵀG′ζ / (√Q + λ)` with `ζ = ξ′ − λξ₀′`.
fn frequency_offset(g_prime: &DMatrix<f64>, lambda: f64, zeta: &[f64]) -> f64 {
    let d = zeta.len();
    let mut q = 0.0;
    for a in 0..d {
        for b in 0..d {
            q += zeta[a] * g_prime[(a, b)] * zeta[b];
        }
    }
    q / ((lambda * lambda + q).sqrt() + lambda)
}

/// Checks `λ − δ/2 ≤ √Q(ξ) ≤ λ + δ/2` for `ξ = (ξ′, λ(ξ₀)_n)`.
///
/// Uses `Q(λξ₀′ + ζ, k) = λ² + ζᵀG′ζ` where `G′ = AAᵀ` for the aligned block
/// `B⁻¹ = [[A, 0], [a, 1/s]]`.
pub fn spectral_window_check(
    g_prime: &DMatrix<f64>,
    lambda: f64,
    delta: f64,
    center: &[f64],
    active: &[Vec<i64>],
) -> Result<WindowCertificate, FlatModeError> {
    let mut margin = f64::INFINITY;
    let mut max_offset = 0.0f64;
    let mut offending = Vec::new();
    for xi in active {
        let zeta: Vec<f64> = xi.iter().zip(center).map(|(&x, c)| x as f64 - c).collect();
        let off = frequency_offset(g_prime, lambda, &zeta);
        max_offset = max_offset.max(off.abs());
        let m = (delta / 2.0 - off).min(delta / 2.0 + off);
        if m < 0.0 {
            offending.push(xi.clone());
        }
        margin = margin.min(m);
    }
    if !offending.is_empty() {
        return Err(FlatModeError::WindowViolated { offending, margin });
    }
    Ok(WindowCertificate { margin, active: active.len(), max_offset })
}

/// Evaluation route for the torus mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Finite sum over active frequencies.
    Frequency,
    /// Poisson-dual lattice sum of `φ̂`.
    Poisson,
}

/// The shifted torus mode `φ_λ(y)`.
#[derive(Debug, Clone)]
pub struct TorusMode {
    k: u64,
    lambda: f64,
    delta: f64,
    sigma: f64,
    /// `λ ξ₀′`.
    center: Vec<f64>,
    y0_prime: Vec<f64>,
    bump: BumpProfile,
    active: Vec<Vec<i64>>,
    coefficients: Vec<f64>,
    normalization: f64,
    poisson_radius: f64,
    poisson_shifts: Vec<Vec<i64>>,
}

impl TorusMode {
    pub fn new(
        k: u64,
        lambda: f64,
        delta: f64,
        xi0_prime: &[f64],
        y0_prime: &[f64],
        bump: BumpProfile,
    ) -> Self {
        let d = xi0_prime.len();
        assert_eq!(d, bump.dim());
        let sigma = (lambda * delta).sqrt();
        let center: Vec<f64> = xi0_prime.iter().map(|x| lambda * x).collect();
        let active = active_frequencies(&center, bump.rho() * sigma);
        let coefficients = active
            .iter()
            .map(|xi| {
                let r2: f64 = xi.iter().zip(&center).map(|(&x, c)| (x as f64 - c).powi(2)).sum();
                bump.phi_radial(r2.sqrt() / sigma)
            })
            .collect();
        let normalization = sigma.powf(-(d as f64) / 2.0);
        let poisson_radius = bump.truncation_radius(sigma, POISSON_BUDGET).min(bump.phi_hat_range());
        let reach = poisson_radius / sigma + 1.0;
        let poisson_shifts = active_frequencies(&vec![0.0; d], reach);
        Self {
            k,
            lambda,
            delta,
            sigma,
            center,
            y0_prime: y0_prime.to_vec(),
            bump,
            active,
            coefficients,
            normalization,
            poisson_radius,
            poisson_shifts,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len() + 1
    }

    pub fn degree(&self) -> u64 {
        self.k
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `√(λδ)`.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn bump(&self) -> &BumpProfile {
        &self.bump
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn y0_prime(&self) -> &[f64] {
        &self.y0_prime
    }

    pub fn active(&self) -> &[Vec<i64>] {
        &self.active
    }

    /// `φ((ξ′ − λξ₀′)/√(λδ))` for each active frequency.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `(λδ)^{−d/4}`.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Cutoff `X` on `√(λδ)|z − η|` in the Poisson sum.
    pub fn poisson_radius(&self) -> f64 {
        self.poisson_radius
    }

    pub fn eval(&self, y: &[f64], method: Method) -> Complex64 {
        match method {
            Method::Frequency => self.eval_frequency(y),
            Method::Poisson => self.eval_poisson(y),
        }
    }

    pub fn eval_frequency(&self, y: &[f64]) -> Complex64 {
        let d = self.center.len();
        let z: Vec<f64> = (0..d).map(|j| y[j] - self.y0_prime[j]).collect();
        let mut acc = ComplexSum::new();
        for (xi, &c) in self.active.iter().zip(&self.coefficients) {
            let t: f64 = xi.iter().zip(&z).map(|(&x, zj)| x as f64 * zj).sum();
            acc.add(cis_turns(t) * c);
        }
        acc.value() * cis_turns(self.k as f64 * y[d]) * self.normalization
    }

    pub fn eval_poisson(&self, y: &[f64]) -> Complex64 {
        let d = self.center.len();
        let z: Vec<f64> = (0..d)
            .map(|j| {
                let v = y[j] - self.y0_prime[j];
                v - v.round()
            })
            .collect();
        let mut acc = ComplexSum::new();
        let mut w = vec![0.0; d];
        for eta in &self.poisson_shifts {
            let mut r2 = 0.0;
            for j in 0..d {
                w[j] = z[j] - eta[j] as f64;
                r2 += w[j] * w[j];
            }
            let r = self.sigma * r2.sqrt();
            if r > self.poisson_radius {
                continue;
            }
            let t: f64 = self.center.iter().zip(&w).map(|(c, wj)| c * wj).sum();
            acc.add(cis_turns(t) * self.bump.phi_hat_radial(r));
        }
        acc.value() * cis_turns(self.k as f64 * y[d]) * (1.0 / self.normalization)
    }
}

/// A plane wave `a e^{2πi v·y}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Wave {
    pub v: Vec<i64>,
    pub a: Complex64,
}

/// Exact Fourier expansion `ψ(By) = Σ_v a_v e^{2πi v·y}` with distinct `v`.
#[derive(Debug, Clone)]
pub struct FourierContent {
    dim: usize,
    waves: Vec<Wave>,
}

impl FourierContent {
    /// Combines waves with equal frequency; output sorted by frequency.
    pub fn from_waves(dim: usize, waves: impl IntoIterator<Item = Wave>) -> Self {
        let mut map: BTreeMap<Vec<i64>, ComplexSum> = BTreeMap::new();
        for w in waves {
            map.entry(w.v).or_default().add(w.a);
        }
        let waves = map.into_iter().map(|(v, a)| Wave { v, a: a.value() }).collect();
        Self { dim, waves }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn waves(&self) -> &[Wave] {
        &self.waves
    }

    /// `Σ |a_v|²`, the mean square over one lattice cell.
    pub fn energy(&self) -> f64 {
        self.waves.iter().map(|w| w.a.norm_sqr()).collect::<NeumaierSum>().value()
    }

    pub fn eval_y(&self, y: &[f64]) -> Complex64 {
        let mut acc = ComplexSum::new();
        for w in &self.waves {
            let t: f64 = w.v.iter().zip(y).map(|(&v, yj)| v as f64 * yj).sum();
            acc.add(w.a * cis_turns(t));
        }
        acc.value()
    }

    /// Largest `|v_j|` per coordinate.
    pub fn max_frequency(&self) -> Vec<i64> {
        let mut out = vec![0i64; self.dim];
        for w in &self.waves {
            for (o, &v) in out.iter_mut().zip(&w.v) {
                *o = (*o).max(v.abs());
            }
        }
        out
    }
}

/// `‖(Δ + Λ²)ψ‖₂ / ‖ψ‖₂` in both conventions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectReport {
    /// With eigenvalue `Q(v)` per wave and target `λ²`.
    pub spectral: f64,
    /// With eigenvalue `4π²Q(v)` and target `(2πλ)²`; equals `4π²·spectral`.
    pub physical: f64,
    /// `λδ(1 + δ/(2λ))`.
    pub bound_spectral: f64,
    /// `ΛΔ(1 + Δ/(2Λ))` with `Λ = 2πλ`, `Δ = 2πδ`.
    pub bound_physical: f64,
}

impl DefectReport {
    pub fn passes(&self) -> bool {
        self.physical <= self.bound_physical
    }

    /// `(λδ)^{−1}‖(Δ+λ²)ψ‖/‖ψ‖` in the physical convention.
    pub fn normalized(&self, lambda: f64, delta: f64) -> f64 {
        self.physical / (4.0 * PI * PI * lambda * delta)
    }
}

/// Defect of a Fourier expansion against the target `λ`.
pub fn content_defect(content: &FourierContent, g: &DMatrix<f64>, lambda: f64, delta: f64) -> DefectReport {
    let mut num = NeumaierSum::new();
    let mut den = NeumaierSum::new();
    let n = content.dim();
    for w in &content.waves {
        let mut q = 0.0;
        for a in 0..n {
            for b in 0..n {
                q += w.v[a] as f64 * g[(a, b)] * w.v[b] as f64;
            }
        }
        let e = w.a.norm_sqr();
        num.add(e * (lambda * lambda - q).powi(2));
        den.add(e);
    }
    let spectral = (num.value() / den.value()).sqrt();
    let four_pi2 = 4.0 * PI * PI;
    let bound_spectral = lambda * delta * (1.0 + delta / (2.0 * lambda));
    DefectReport {
        spectral,
        physical: four_pi2 * spectral,
        bound_spectral,
        bound_physical: four_pi2 * bound_spectral,
    }
}

#[derive(Debug, Clone)]
pub struct FlatModeOptions {
    /// Initial support radius of the bump.
    pub rho: f64,
    /// How many times `ρ` may be halved when the window check fails.
    pub max_shrinks: u32,
    pub delta_floor: DeltaFloor,
}

impl Default for FlatModeOptions {
    fn default() -> Self {
        Self { rho: 0.5, max_shrinks: 5, delta_floor: DeltaFloor::Log }
    }
}

#[derive(Debug, Clone)]
struct CosetData {
    u: DMatrix<i64>,
    t: Vec<f64>,
}

/// `ψ(x) = Σ_i φ_λ(B⁻¹α_i(x))` on a flat space form.
#[derive(Debug, Clone)]
pub struct FlatMode {
    torus: Arc<TorusMode>,
    n: usize,
    cosets: Vec<CosetData>,
    motions: Vec<RigidMotion>,
    basis: DMatrix<f64>,
    basis_inv: DMatrix<f64>,
    covolume: f64,
    g: DMatrix<f64>,
    xi0: DVector<f64>,
    content: Arc<FourierContent>,
    window: WindowCertificate,
    axis: AxisChoice,
}

/// Builds the mode on an aligned quotient, shrinking `ρ` until the window
/// certificate passes.
pub fn spaceform_mode(
    f: &FlatQuotient,
    k: u64,
    delta: f64,
    axis: &AxisChoice,
    opts: &FlatModeOptions,
) -> Result<FlatMode, FlatModeError> {
    if !f.is_aligned() {
        return Err(GeometryError::NotAligned.into());
    }
    let n = f.dim();
    let d = n - 1;
    let (lambda, xi0) = select_frequency(f, k)?;
    check_delta(lambda, delta, opts.delta_floor)?;
    let a = f.block_a()?;
    let g_prime = &a * a.transpose();
    let xi0_prime: Vec<f64> = xi0.rows(0, d).iter().copied().collect();
    let center: Vec<f64> = xi0_prime.iter().map(|x| lambda * x).collect();
    let sigma = (lambda * delta).sqrt();

    let mut rho = opts.rho;
    let mut last_err = None;
    for _ in 0..=opts.max_shrinks {
        let bump = BumpProfile::new(d, rho)?;
        let active = active_frequencies(&center, rho * sigma);
        match spectral_window_check(&g_prime, lambda, delta, &center, &active) {
            Ok(window) => {
                let y0: Vec<f64> = axis.y0_prime.iter().copied().collect();
                let torus = TorusMode::new(k, lambda, delta, &xi0_prime, &y0, bump);
                return FlatMode::assemble(f, torus, xi0, window, axis.clone());
            }
            Err(e) => {
                last_err = Some(e);
                rho /= 2.0;
            }
        }
    }
    Err(last_err.expect("at least one attempt"))
}

impl FlatMode {
    fn assemble(
        f: &FlatQuotient,
        torus: TorusMode,
        xi0: DVector<f64>,
        window: WindowCertificate,
        axis: AxisChoice,
    ) -> Result<Self, FlatModeError> {
        let n = f.dim();
        let d = n - 1;
        let cosets: Vec<CosetData> = f
            .cosets()
            .iter()
            .map(|c| CosetData { u: c.lattice_action.clone(), t: c.shift_y.iter().copied().collect() })
            .collect();

        let mut waves = Vec::new();
        let k = torus.degree() as i64;
        for c in &cosets {
            for (xi, &coef) in torus.active().iter().zip(torus.coefficients()) {
                let mut full = xi.clone();
                full.push(k);
                // φ_λ(Uy + t) contributes e^{2πi (Uᵀξ)·y} with the phase of ξ·t − ξ′·y₀′.
                let v: Vec<i64> = (0..n).map(|col| (0..n).map(|row| c.u[(row, col)] * full[row]).sum()).collect();
                let mut turns = 0.0;
                for j in 0..n {
                    turns += full[j] as f64 * c.t[j];
                }
                for j in 0..d {
                    turns -= xi[j] as f64 * torus.y0_prime()[j];
                }
                waves.push(Wave { v, a: cis_turns(turns) * (coef * torus.normalization()) });
            }
        }
        let content = FourierContent::from_waves(n, waves);
        let raw: f64 = torus.coefficients().iter().map(|c| (c * torus.normalization()).powi(2)).sum::<f64>()
            * cosets.len() as f64;
        if content.energy() <= 1e-24 * raw {
            return Err(FlatModeError::VanishingMode);
        }

        Ok(Self {
            torus: Arc::new(torus),
            n,
            cosets,
            motions: f.cosets().iter().map(|c| c.motion.clone()).collect(),
            basis: f.basis().clone(),
            basis_inv: f.basis_inv().clone(),
            covolume: f.covolume(),
            g: quadratic_form(f.basis()),
            xi0,
            content: Arc::new(content),
            window,
            axis,
        })
    }

    /// The same function expressed on a rotated copy of the quotient.
    ///
    /// `original` must have the same coset data in lattice coordinates, as
    /// produced by [`align_lattice`](crate::geometry::align_lattice).
    pub fn in_frame(&self, original: &FlatQuotient) -> Result<FlatMode, FlatModeError> {
        if original.index() != self.cosets.len() {
            return Err(FlatModeError::FrameMismatch(0));
        }
        for (i, (c, o)) in self.cosets.iter().zip(original.cosets()).enumerate() {
            let same_t = c.t.iter().zip(o.shift_y.iter()).all(|(a, b)| (a - b).abs() < 1e-9);
            if c.u != o.lattice_action || !same_t {
                return Err(FlatModeError::FrameMismatch(i));
            }
        }
        let mut out = self.clone();
        out.motions = original.cosets().iter().map(|c| c.motion.clone()).collect();
        out.basis = original.basis().clone();
        out.basis_inv = original.basis_inv().clone();
        out.covolume = original.covolume();
        out.g = quadratic_form(original.basis());
        let n = self.n;
        let b_n = original.basis().column(n - 1).into_owned();
        out.xi0 = original.basis().transpose() * &b_n / b_n.norm();
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn torus(&self) -> &TorusMode {
        &self.torus
    }

    pub fn degree(&self) -> u64 {
        self.torus.degree()
    }

    pub fn lambda(&self) -> f64 {
        self.torus.lambda()
    }

    pub fn delta(&self) -> f64 {
        self.torus.delta()
    }

    /// `λδ`.
    pub fn lambda_delta(&self) -> f64 {
        self.torus.sigma().powi(2)
    }

    pub fn xi0(&self) -> &DVector<f64> {
        &self.xi0
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn basis_inv(&self) -> &DMatrix<f64> {
        &self.basis_inv
    }

    pub fn covolume(&self) -> f64 {
        self.covolume
    }

    /// Index `N` of the lattice in the deck group.
    pub fn index(&self) -> usize {
        self.cosets.len()
    }

    pub fn quadratic_form(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn content(&self) -> &FourierContent {
        &self.content
    }

    pub fn window(&self) -> &WindowCertificate {
        &self.window
    }

    pub fn axis(&self) -> &AxisChoice {
        &self.axis
    }

    /// `ψ(By)` by summing the torus mode over the coset actions `Uy + t`.
    pub fn eval_y(&self, y: &[f64], method: Method) -> Complex64 {
        let n = self.n;
        let mut acc = ComplexSum::new();
        let mut w = vec![0.0; n];
        for c in &self.cosets {
            for r in 0..n {
                let mut s = c.t[r];
                for col in 0..n {
                    s += c.u[(r, col)] as f64 * y[col];
                }
                w[r] = s;
            }
            acc.add(self.torus.eval(&w, method));
        }
        acc.value()
    }

    /// `ψ(x) = Σ_i φ_λ(B⁻¹α_i(x))` evaluated literally.
    pub fn eval_x(&self, x: &[f64], method: Method) -> Complex64 {
        let xv = DVector::from_column_slice(x);
        let mut acc = ComplexSum::new();
        for m in &self.motions {
            let w = &self.basis_inv * m.apply(&xv);
            acc.add(self.torus.eval(w.as_slice(), method));
        }
        acc.value()
    }

    /// Exact `‖ψ‖_{L²(D_Γ)} = ((1/N)|det B| Σ|a_v|²)^{1/2}`.
    pub fn parseval_l2(&self) -> f64 {
        (self.covolume / self.index() as f64 * self.content.energy()).sqrt()
    }

    pub fn defect(&self) -> DefectReport {
        content_defect(&self.content, &self.g, self.lambda(), self.delta())
    }
}

/// The set `{|x′ − x₀′| ≤ c₁(λδ)^{−1/2}, |x_n − (x₀)_n| ≤ c₂}` in the aligned
/// frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KnappTube {
    pub x0_prime: Vec<f64>,
    pub x0_n: f64,
    pub radius: f64,
    pub half_length: f64,
}

impl KnappTube {
    pub fn for_mode(mode: &FlatMode) -> Self {
        let axis = mode.axis();
        Self {
            x0_prime: axis.x0_prime.iter().copied().collect(),
            x0_n: axis.x0_n,
            radius: axis.c1 / mode.torus().sigma(),
            half_length: axis.c2,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let d = self.x0_prime.len();
        let r2: f64 = (0..d).map(|j| (x[j] - self.x0_prime[j]).powi(2)).sum();
        r2 <= self.radius * self.radius && (x[d] - self.x0_n).abs() <= self.half_length
    }

    /// `2c₂ · vol(B^{d}) · r^d`.
    pub fn volume(&self) -> f64 {
        let d = self.x0_prime.len();
        2.0 * self.half_length * unit_ball_volume(d) * self.radius.powi(d as i32)
    }
}

pub fn unit_ball_volume(d: usize) -> f64 {
    PI.powf(d as f64 / 2.0) / statrs::function::gamma::gamma(d as f64 / 2.0 + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationCertificate {
    pub lambda_delta: f64,
    /// `(4/δ₁)²`.
    pub required: f64,
    /// `√(λδ)·δ₁/4 − 1`; non-negative when the separation holds.
    pub margin: f64,
}

impl SeparationCertificate {
    pub fn new(mode: &FlatMode) -> Self {
        let clearance = mode.axis().clearance;
        let lambda_delta = mode.lambda_delta();
        if clearance.is_infinite() {
            return Self { lambda_delta, required: 0.0, margin: f64::INFINITY };
        }
        Self {
            lambda_delta,
            required: (4.0 / clearance).powi(2),
            margin: lambda_delta.sqrt() * clearance / 4.0 - 1.0,
        }
    }

    pub fn passes(&self) -> bool {
        self.margin >= 0.0
    }
}

/// Size of the deck terms `i ≥ 2` of the Poisson form on the tube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffDiagonal {
    /// Envelope bound `max_x Σ_{i≥2} Σ_η T(1 + √(λδ)|z_i(x) − η|)^{−8}`.
    pub envelope_bound: f64,
    /// `max_x Σ_{i≥2} Σ_η |φ̂(√(λδ)(z_i(x) − η))|` from the tabulated transform.
    pub sampled: f64,
}

impl OffDiagonal {
    pub fn passes(&self) -> bool {
        self.envelope_bound < OFF_DIAGONAL_BUDGET
    }
}

/// Sample points of the tube: `radial × angular × axial` in the aligned frame.
pub fn tube_samples(tube: &KnappTube, per_axis: usize) -> Vec<Vec<f64>> {
    let d = tube.x0_prime.len();
    let mut out = Vec::new();
    let steps = per_axis.max(2);
    let offsets: Vec<Vec<f64>> = match d {
        1 => (0..steps)
            .map(|i| vec![-1.0 + 2.0 * i as f64 / (steps - 1) as f64])
            .collect(),
        _ => {
            let mut v = vec![vec![0.0; d]];
            for r in 1..steps {
                let rr = r as f64 / (steps - 1) as f64;
                for j in 0..d {
                    for s in [-1.0, 1.0] {
                        let mut p = vec![0.0; d];
                        p[j] = s * rr;
                        v.push(p);
                    }
                }
            }
            v
        }
    };
    for a in 0..steps {
        let h = -1.0 + 2.0 * a as f64 / (steps - 1) as f64;
        for o in &offsets {
            let mut x: Vec<f64> = (0..d).map(|j| tube.x0_prime[j] + tube.radius * o[j]).collect();
            x.push(tube.x0_n + tube.half_length * h);
            out.push(x);
        }
    }
    out
}

/// Off-diagonal smallness of the deck terms on the tube.
pub fn off_diagonal(mode: &FlatMode, tube: &KnappTube, per_axis: usize) -> OffDiagonal {
    let n = mode.dim();
    let d = n - 1;
    let torus = mode.torus();
    let bump = torus.bump();
    let sigma = torus.sigma();
    let mut worst_env = 0.0f64;
    let mut worst_sampled = 0.0f64;
    let shifts = active_frequencies(&vec![0.0; d], 3.5);
    // Remaining shifts lie at distance ≥ 3 from any reduced z.
    let tail = bump.tail_envelope() * crate::bump::lattice_tail_factor(d, sigma, 3.0 * sigma);
    for x in tube_samples(tube, per_axis) {
        let y = &mode.basis_inv * DVector::from_vec(x);
        let mut env = 0.0;
        let mut sampled = 0.0;
        for c in mode.cosets.iter().skip(1) {
            let w: Vec<f64> = (0..d)
                .map(|r| {
                    let mut s = c.t[r];
                    for col in 0..n {
                        s += c.u[(r, col)] as f64 * y[col];
                    }
                    let z = s - torus.y0_prime()[r];
                    z - z.round()
                })
                .collect();
            for eta in &shifts {
                let r = sigma * (0..d).map(|j| (w[j] - eta[j] as f64).powi(2)).sum::<f64>().sqrt();
                env += bump.tail_bound(r);
                sampled += bump.phi_hat_radial(r).abs();
            }
            env += tail;
        }
        worst_env = worst_env.max(env);
        worst_sampled = worst_sampled.max(sampled);
    }
    OffDiagonal { envelope_bound: worst_env, sampled: worst_sampled }
}
