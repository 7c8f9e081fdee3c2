//! `L^p` norms over sphere quotients, flat fundamental domains and geodesic
//! tubes by midpoint tensor quadrature.
//!
//! Every grid is traversed row by row; rows may run in parallel, but their
//! partial sums are reduced sequentially in row order, so results do not
//! depend on the number of worker threads.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::flat_mode::{FlatMode, KnappTube, Method};
use crate::sphere_mode::SphereMode;
use crate::sum::NeumaierSum;

/// Minimum number of nodes per wavelength.
pub const NODES_PER_WAVELENGTH: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormError {
    #[error("exponent p = {0} must be at least 1")]
    InvalidExponent(f64),
    #[error("{axis}: {nodes} nodes, at least {required} needed for 10 nodes per wavelength")]
    ResolutionTooCoarse { axis: &'static str, nodes: usize, required: usize },
    #[error("p = {p}: error estimate {estimate:.3e} exceeds tolerance {tol:.1e} (value {value:.6e})")]
    NotConverged { p: f64, value: f64, estimate: f64, tol: f64 },
    #[error("tube radius {radius:.3e} does not embed (limit {limit:.3e})")]
    TubeNotEmbedded { radius: f64, limit: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// A complex-valued function on the cover.
pub trait Field: Sync {
    fn eval(&self, x: &[f64]) -> Complex64;
}

impl Field for SphereMode {
    fn eval(&self, x: &[f64]) -> Complex64 {
        SphereMode::eval(self, x)
    }
}

/// Evaluates through the exact Fourier content at `y = B⁻¹x`.
impl Field for FlatMode {
    fn eval(&self, x: &[f64]) -> Complex64 {
        let y = self.basis_inv() * DVector::from_column_slice(x);
        self.content().eval_y(y.as_slice())
    }
}

/// Evaluates `Σ_i φ_λ(B⁻¹α_i(x))` term by term.
pub struct Pointwise<'a>(pub &'a FlatMode, pub Method);

impl Field for Pointwise<'_> {
    fn eval(&self, x: &[f64]) -> Complex64 {
        self.0.eval_x(x, self.1)
    }
}

pub struct FnField<F>(pub F);

impl<F: Fn(&[f64]) -> Complex64 + Sync> Field for FnField<F> {
    fn eval(&self, x: &[f64]) -> Complex64 {
        (self.0)(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub p: f64,
    pub value: f64,
    /// Two-grid estimate of the error in `value`.
    pub err_estimate: f64,
    pub nodes: usize,
    pub wall_ms: f64,
}

impl NormReport {
    pub fn relative_error(&self) -> f64 {
        if self.value == 0.0 {
            self.err_estimate
        } else {
            self.err_estimate / self.value
        }
    }
}

fn check_ps(ps: &[f64]) -> Result<(), NormError> {
    match ps.iter().find(|&&p| !(p >= 1.0)) {
        Some(&p) => Err(NormError::InvalidExponent(p)),
        None => Ok(()),
    }
}

/// Sums `row(i)` (a vector of per-exponent partial sums) over `rows`, with a
/// fixed reduction order.
fn reduce_rows<F>(rows: usize, width: usize, row: F) -> Vec<f64>
where
    F: Fn(usize) -> Vec<f64> + Sync + Send,
{
    let partial: Vec<Vec<f64>> = (0..rows).into_par_iter().map(row).collect();
    let mut acc = vec![NeumaierSum::new(); width];
    for r in &partial {
        for (a, v) in acc.iter_mut().zip(r) {
            a.add(*v);
        }
    }
    acc.iter().map(|a| a.value()).collect()
}

#[inline]
fn add_powers(acc: &mut [NeumaierSum], ps: &[f64], modulus: f64, weight: f64) {
    for (a, &p) in acc.iter_mut().zip(ps) {
        let v = if p == 1.0 {
            modulus
        } else if p == 2.0 {
            modulus * modulus
        } else if p == 4.0 {
            (modulus * modulus).powi(2)
        } else {
            modulus.powf(p)
        };
        a.add(weight * v);
    }
}

/// Largest number of quadrature nodes spent on one refinement level.
pub const MAX_LEVEL_NODES: usize = 1 << 26;

/// Richardson order for `|f|^p`: `|f|^p` of a smooth `f` is smooth only for
/// even integer `p`; otherwise kinks on the zero set cap the rule at order 2.
fn order_for(p: f64, order: i32) -> i32 {
    if p % 2.0 == 0.0 {
        order
    } else {
        order.min(2)
    }
}

/// Turns integrals of `|f|^p` on two grids (fine `h`, coarse `2h`) into
/// reports, scaling the integrals by `scale` first. `order` is the expected
/// convergence order of the rule for smooth integrands.
fn finish(
    ps: &[f64],
    fine: &[f64],
    coarse: &[f64],
    scale: f64,
    order: i32,
    nodes: usize,
    start: Instant,
) -> Vec<NormReport> {
    ps.iter()
        .zip(fine.iter().zip(coarse))
        .map(|(&p, (&f, &c))| {
            let richardson = 2f64.powi(order_for(p, order)) - 1.0;
            let fi = f * scale;
            let ci = c * scale;
            let int_err = (fi - ci).abs() / richardson;
            let value = fi.max(0.0).powf(1.0 / p);
            let err_estimate = if fi > 0.0 { value * int_err / (p * fi) } else { int_err.powf(1.0 / p) };
            NormReport { p, value, err_estimate, nodes, wall_ms: start.elapsed().as_secs_f64() * 1e3 }
        })
        .collect()
}

/// Runs `integrate(level)` at level 0 and 1 (coarse and fine), then keeps
/// halving the step while the estimate misses `tol` and the next level stays
/// within [`MAX_LEVEL_NODES`]. Level `l` must use about `2^l` times the nodes
/// per axis of level 0.
fn refine<F>(ps: &[f64], tol: f64, scale: f64, order: i32, integrate: F) -> Result<Vec<NormReport>, NormError>
where
    F: Fn(u32) -> (Vec<f64>, usize),
{
    let start = Instant::now();
    let (mut coarse, n0) = integrate(0);
    let (mut fine, mut last) = integrate(1);
    let mut nodes = n0 + last;
    let mut reports = finish(ps, &fine, &coarse, scale, order, nodes, start);
    let growth = (last as f64 / n0.max(1) as f64).max(2.0);
    let mut level = 1;
    while reports.iter().any(|r| r.relative_error() > tol) && (last as f64 * growth) <= MAX_LEVEL_NODES as f64 {
        level += 1;
        let (finer, n) = integrate(level);
        nodes += n;
        last = n;
        coarse = std::mem::replace(&mut fine, finer);
        reports = finish(ps, &fine, &coarse, scale, order, nodes, start);
    }
    if let Some(r) = reports.iter().find(|r| r.relative_error() > tol) {
        return Err(NormError::NotConverged { p: r.p, value: r.value, estimate: r.err_estimate, tol });
    }
    Ok(reports)
}

fn sphere_area(m: usize) -> f64 {
    2.0 * PI.powf(m as f64 / 2.0) / statrs::function::gamma::gamma(m as f64 / 2.0)
}

/// Quadrature nodes on `a ∈ [0, π/2]` (distance to the reference circle)
/// needed to resolve frequency `lambda`.
pub fn sphere_required_nodes(lambda: f64) -> usize {
    ((NODES_PER_WAVELENGTH * lambda / 4.0).ceil() as usize).max(8)
}

/// Sphere quotient `S^n/Γ` integrated as `(1/|Γ|) ∫_{S^n}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereDomain {
    pub n: usize,
    pub group_order: usize,
    /// Frequency used for the nodes-per-wavelength floor.
    pub lambda: f64,
}

/// Maps `t ∈ [0, 1]` to `[0, 1]` with vanishing first and second derivatives
/// at both ends, so the midpoint rule in `t` is fourth order for integrands
/// that are merely smooth on the closed interval.
#[inline]
fn periodize(t: f64) -> (f64, f64) {
    let (s, c) = (TAU * t).sin_cos();
    (t - s / TAU, 1.0 - c)
}

/// Full tensor grid on the sphere.
///
/// `n = 2` uses `x = (√(1−z²) cos θ, √(1−z²) sin θ, z)` with the uniform
/// measure `dz dθ`. `n = 3` uses `x = (cos a e^{iθ}, sin a e^{iφ})` with
/// `a` periodized. `nodes_a` counts nodes per quarter circle; `θ` and `φ`
/// get four times as many.
pub fn sphere_lp_norms<F: Field>(
    field: &F,
    dom: &SphereDomain,
    ps: &[f64],
    tol: f64,
    nodes_a: Option<usize>,
) -> Result<Vec<NormReport>, NormError> {
    check_ps(ps)?;
    let required = sphere_required_nodes(dom.lambda);
    let base = nodes_a.unwrap_or(2 * required);
    if base < required {
        return Err(NormError::ResolutionTooCoarse { axis: "sphere", nodes: base, required });
    }
    sphere_grid(field, dom, FRAC_PI_2, base, 4 * base, ps, tol)
}

/// Grid over `dist(x, γ̃₀) ≤ a_max` with `na` nodes across the distance
/// range and `nt` nodes on each circle (finest level counts).
fn sphere_grid<F: Field>(
    field: &F,
    dom: &SphereDomain,
    a_max: f64,
    na: usize,
    nt: usize,
    ps: &[f64],
    tol: f64,
) -> Result<Vec<NormReport>, NormError> {
    let n = dom.n;
    if n != 2 && n != 3 {
        return Err(NormError::Unsupported(format!("full sphere grid for n = {n}")));
    }
    let scale = 1.0 / dom.group_order as f64;
    let integrate = |level: u32| {
        let na = ((na << level) / 2).max(2);
        let nt = ((nt << level) / 2).max(4);
        let ht = TAU / nt as f64;
        match n {
            2 => {
                let z_max = a_max.sin();
                let hz = 2.0 * z_max / (2 * na) as f64;
                let sums = reduce_rows(2 * na, ps.len(), |i| {
                    let z = -z_max + (i as f64 + 0.5) * hz;
                    let rho = (1.0 - z * z).sqrt();
                    let mut acc = vec![NeumaierSum::new(); ps.len()];
                    for j in 0..nt {
                        let (st, ct) = ((j as f64 + 0.5) * ht).sin_cos();
                        let x = [rho * ct, rho * st, z];
                        add_powers(&mut acc, ps, field.eval(&x).norm(), hz * ht);
                    }
                    acc.iter().map(|s| s.value()).collect()
                });
                (sums, 2 * na * nt)
            }
            _ => {
                let h = 1.0 / na as f64;
                let sums = reduce_rows(na, ps.len(), |i| {
                    let (w, dw) = periodize((i as f64 + 0.5) * h);
                    let a = a_max * w;
                    let (sa, ca) = a.sin_cos();
                    let weight = ca * sa * a_max * dw * h * ht * ht;
                    let mut acc = vec![NeumaierSum::new(); ps.len()];
                    for j in 0..nt {
                        let (st, ct) = ((j as f64 + 0.5) * ht).sin_cos();
                        for l in 0..nt {
                            let (sp, cp) = ((l as f64 + 0.5) * ht).sin_cos();
                            let x = [ca * ct, ca * st, sa * cp, sa * sp];
                            add_powers(&mut acc, ps, field.eval(&x).norm(), weight);
                        }
                    }
                    acc.iter().map(|s| s.value()).collect()
                });
                (sums, na * nt * nt)
            }
        }
    };
    refine(ps, tol, scale, 2, integrate)
}

/// Reduced quadrature for integrands whose modulus depends only on the
/// distance `a` to the reference circle: `profile(a) = |f|` there.
///
/// `∫_{S^n} |f|^p = 2π |S^{n−2}| ∫_0^{π/2} profile(a)^p cos a sin^{n−2} a da`,
/// restricted to `a ≤ a_max`.
pub fn sphere_radial_lp_norms<P>(
    profile: P,
    dom: &SphereDomain,
    a_max: f64,
    ps: &[f64],
    tol: f64,
) -> Result<Vec<NormReport>, NormError>
where
    P: Fn(f64) -> f64 + Sync,
{
    check_ps(ps)?;
    let n = dom.n;
    let a_max = a_max.min(FRAC_PI_2);
    let required = ((sphere_required_nodes(dom.lambda) as f64 * a_max / FRAC_PI_2).ceil() as usize).max(8);
    let base = (2 * required).max(4096);
    let measure = TAU * sphere_area(n - 1);
    let scale = measure / dom.group_order as f64;
    let integrate = |level: u32| {
        let na = (base << level) / 2;
        let rows = 64.min(na);
        let per_row = na.div_ceil(rows);
        let h = 1.0 / na as f64;
        let sums = reduce_rows(rows, ps.len(), |r| {
            let mut acc = vec![NeumaierSum::new(); ps.len()];
            for i in r * per_row..((r + 1) * per_row).min(na) {
                let (w, dw) = periodize((i as f64 + 0.5) * h);
                let a = a_max * w;
                let (sa, ca) = a.sin_cos();
                let weight = ca * sa.powi(n as i32 - 2) * a_max * dw * h;
                add_powers(&mut acc, ps, profile(a), weight);
            }
            acc.iter().map(|s| s.value()).collect()
        });
        (sums, na)
    };
    refine(ps, tol, scale, 4, integrate)
}

fn radial_profile(mode: &SphereMode) -> impl Fn(f64) -> f64 + Sync + '_ {
    let n = mode.dim();
    move |a: f64| {
        let mut x = vec![0.0; n + 1];
        x[0] = a.cos();
        x[2] = a.sin();
        mode.eval(&x).norm()
    }
}

/// Norms of a sphere mode over its quotient, using the reduced rule when
/// the mode is a multiple of `Q_k`.
pub fn sphere_mode_lp_norms(mode: &SphereMode, ps: &[f64], tol: f64) -> Result<Vec<NormReport>, NormError> {
    let dom = SphereDomain { n: mode.dim(), group_order: mode.group_order(), lambda: mode.lambda() };
    if mode.equator_multiple().is_some() {
        sphere_radial_lp_norms(radial_profile(mode), &dom, FRAC_PI_2, ps, tol)
    } else {
        sphere_lp_norms(mode, &dom, ps, tol, None)
    }
}

/// `‖e‖_{L^p(T_{γ₀}(r))}` on the quotient: the tube around the reference
/// circle in `S^n`, divided by the stabilizer order `m`.
///
/// `embed_limit` is the largest admissible radius (the cap radius from the
/// base-point search).
pub fn sphere_tube_lp_norm(
    mode: &SphereMode,
    radius: f64,
    embed_limit: f64,
    p: f64,
    tol: f64,
) -> Result<NormReport, NormError> {
    if radius > embed_limit {
        return Err(NormError::TubeNotEmbedded { radius, limit: embed_limit });
    }
    check_ps(&[p])?;
    let m = mode.stabilizer_order();
    let dom = SphereDomain { n: mode.dim(), group_order: m, lambda: mode.lambda() };
    let mut r = if mode.equator_multiple().is_some() {
        sphere_radial_lp_norms(radial_profile(mode), &dom, radius, &[p], tol)?
    } else {
        let full = 2 * sphere_required_nodes(dom.lambda);
        let na = ((full as f64 * radius / FRAC_PI_2).ceil() as usize).max(32);
        sphere_grid(mode, &dom, radius, na, 4 * full, &[p], tol)?
    };
    Ok(r.remove(0))
}

/// Minimum of `|f|` over `dist(x, γ̃₀) ≤ radius`, sampled on a polar grid.
pub fn sphere_tube_min_abs<F: Field>(field: &F, n: usize, radius: f64, samples: usize) -> f64 {
    let steps = samples.max(2);
    let mut min = f64::INFINITY;
    let mut x = vec![0.0; n + 1];
    for i in 0..steps {
        let a = radius * i as f64 / (steps - 1) as f64;
        for j in 0..steps {
            let t = TAU * j as f64 / steps as f64;
            for sign in [-1.0, 1.0] {
                x.iter_mut().for_each(|v| *v = 0.0);
                x[0] = a.cos() * t.cos();
                x[1] = a.cos() * t.sin();
                x[2] = sign * a.sin();
                min = min.min(field.eval(&x).norm());
            }
        }
    }
    min
}

/// Per-axis grid counts in lattice coordinates: ten nodes per oscillation of
/// the fastest wave along each axis.
pub fn flat_required_counts(mode: &FlatMode) -> Vec<usize> {
    mode.content()
        .max_frequency()
        .iter()
        .map(|&v| ((NODES_PER_WAVELENGTH * v as f64).ceil() as usize).max(16))
        .collect()
}

/// `(1/N)|det B| ∫_{[0,1)^n} |f(By)|^p dy` on a midpoint grid with
/// `counts[j]` nodes along `y_j` (the finest level).
pub fn flat_lp_norms<F: Field>(
    field: &F,
    basis: &DMatrix<f64>,
    index: usize,
    counts: &[usize],
    ps: &[f64],
    tol: f64,
) -> Result<Vec<NormReport>, NormError> {
    check_ps(ps)?;
    let n = basis.nrows();
    if counts.len() != n {
        return Err(NormError::Unsupported("one grid count per axis required".into()));
    }
    let scale = basis.determinant().abs() / index as f64;
    let integrate = |level: u32| {
        let c: Vec<usize> = counts.iter().map(|&m| ((m << level) / 2).max(2)).collect();
        let total: usize = c.iter().product();
        let rows = c[0];
        let inner: usize = c[1..].iter().product();
        let w = 1.0 / total as f64;
        let sums = reduce_rows(rows, ps.len(), |i0| {
            let mut acc = vec![NeumaierSum::new(); ps.len()];
            let mut y = vec![0.0; n];
            y[0] = (i0 as f64 + 0.5) / c[0] as f64;
            for code in 0..inner {
                let mut rem = code;
                for j in 1..n {
                    y[j] = ((rem % c[j]) as f64 + 0.5) / c[j] as f64;
                    rem /= c[j];
                }
                let x = basis * DVector::from_column_slice(&y);
                add_powers(&mut acc, ps, field.eval(x.as_slice()).norm(), w);
            }
            acc.iter().map(|s| s.value()).collect()
        });
        (sums, total)
    };
    refine(ps, tol, scale, 4, integrate)
}

/// Fast path for flat modes: waves are grouped by their last coordinate,
/// so each `y′` node costs one pass over the waves and each `y_n` node one
/// pass over the groups.
pub fn flat_mode_lp_norms(mode: &FlatMode, ps: &[f64], tol: f64) -> Result<Vec<NormReport>, NormError> {
    check_ps(ps)?;
    let n = mode.dim();
    let d = n - 1;
    let counts = flat_required_counts(mode);
    let waves = mode.content().waves();
    let mut groups: Vec<i64> = waves.iter().map(|w| w.v[d]).collect();
    groups.sort_unstable();
    groups.dedup();
    let scale = mode.covolume() / mode.index() as f64;
    let integrate = |level: u32| {
        let c: Vec<usize> = counts.iter().map(|&m| ((m << level) / 2).max(2)).collect();
        // |ψ| does not depend on y_n when there is a single group.
        let cn = if groups.len() == 1 { 1 } else { c[d] };
        let rows = c[0];
        let inner: usize = c[1..d].iter().product();
        let w = 1.0 / (c[..d].iter().product::<usize>() * cn) as f64;
        let sums = reduce_rows(rows, ps.len(), |i0| {
            let mut acc = vec![NeumaierSum::new(); ps.len()];
            let mut y = vec![0.0; d];
            y[0] = (i0 as f64 + 0.5) / c[0] as f64;
            let mut slab = vec![Complex64::new(0.0, 0.0); groups.len()];
            for code in 0..inner {
                let mut rem = code;
                for j in 1..d {
                    y[j] = ((rem % c[j]) as f64 + 0.5) / c[j] as f64;
                    rem /= c[j];
                }
                let mut sums = vec![crate::sum::ComplexSum::new(); groups.len()];
                for wave in waves {
                    let g = groups.binary_search(&wave.v[d]).expect("group present");
                    let t: f64 = wave.v[..d].iter().zip(&y).map(|(&v, yj)| v as f64 * yj).sum();
                    sums[g].add(wave.a * crate::flat_mode::cis_turns(t));
                }
                for (s, acc_g) in slab.iter_mut().zip(&sums) {
                    *s = acc_g.value();
                }
                for l in 0..cn {
                    let yn = (l as f64 + 0.5) / cn as f64;
                    let mut total = crate::sum::ComplexSum::new();
                    for (g, s) in groups.iter().zip(&slab) {
                        total.add(*s * crate::flat_mode::cis_turns(*g as f64 * yn));
                    }
                    add_powers(&mut acc, ps, total.value().norm(), w);
                }
            }
            acc.iter().map(|s| s.value()).collect()
        });
        (sums, c[..d].iter().product::<usize>() * cn)
    };
    refine(ps, tol, scale, 4, integrate)
}

/// Exact `‖ψ‖_{L²(D_Γ)}` from the combined Fourier coefficients.
pub fn l2_exact_parseval(mode: &FlatMode) -> f64 {
    mode.parseval_l2()
}

/// Tube around the closed geodesic `{(x₀′, x₀_n + t) : 0 ≤ t < L}` in the
/// aligned frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatTubeAxis {
    pub x0_prime: Vec<f64>,
    pub x0_n: f64,
    /// Period `L` of the closed geodesic.
    pub period: f64,
}

/// Largest radius for which the tube around the axis embeds in the quotient:
/// half the distance to the nearest other lift of the axis.
pub fn flat_tube_limit(mode: &FlatMode) -> f64 {
    let n = mode.dim();
    let d = n - 1;
    let a = mode.basis_inv().view((0, 0), (d, d)).into_owned();
    let a_inv = a.try_inverse().expect("aligned block is invertible");
    let mut spacing = f64::INFINITY;
    for eta in crate::flat_mode::active_frequencies(&vec![0.0; d], 3.5) {
        if eta.iter().all(|&e| e == 0) {
            continue;
        }
        let v = DVector::from_iterator(d, eta.iter().map(|&e| e as f64));
        spacing = spacing.min((&a_inv * v).norm());
    }
    spacing.min(mode.axis().clearance) / 2.0
}

/// Oscillations per unit length of the fastest wave, along the axis and
/// across it.
fn flat_bandwidth(mode: &FlatMode) -> (f64, f64) {
    let n = mode.dim();
    let bt = mode.basis_inv().transpose();
    let mut axial = 0.0f64;
    let mut transverse = 0.0f64;
    for w in mode.content().waves() {
        let v = DVector::from_iterator(n, w.v.iter().map(|&x| x as f64));
        let k = &bt * v;
        axial = axial.max(k[n - 1].abs());
        transverse = transverse.max(k.rows(0, n - 1).norm());
    }
    (axial, transverse)
}

struct TubeGrid {
    axial: usize,
    radial: usize,
    angular: usize,
}

fn tube_grid(mode: &FlatMode, axis: &FlatTubeAxis, radius: f64) -> TubeGrid {
    let (axial_bw, trans_bw) = flat_bandwidth(mode);
    let axial = ((NODES_PER_WAVELENGTH * axial_bw * axis.period).ceil() as usize).max(16);
    let radial = ((NODES_PER_WAVELENGTH * trans_bw * radius).ceil() as usize).max(64);
    let angular = ((NODES_PER_WAVELENGTH * trans_bw * TAU * radius).ceil() as usize).max(32);
    TubeGrid { axial, radial, angular }
}

/// Integrates `|f|^p` over tubes of several radii on the grid of the largest
/// one, so the results are exactly nondecreasing in the radius.
fn tube_integrals<F: Field>(
    field: &F,
    axis: &FlatTubeAxis,
    radii: &[f64],
    p: f64,
    grid: &TubeGrid,
    level: u32,
) -> Result<(Vec<f64>, usize), NormError> {
    let d = axis.x0_prime.len();
    let r_max = radii.iter().fold(0.0f64, |m, &r| m.max(r));
    let na = (grid.axial << level) / 2;
    let nr = (grid.radial << level) / 2;
    let nphi = ((grid.angular << level) / 2).max(4);
    let ht = axis.period / na as f64;
    let hr = r_max / nr as f64;
    let w_sum: Vec<f64> = match d {
        1 => {
            // Cross-section [−r, r]; nodes sorted by |u| into radius bins.
            let sums = reduce_rows(na, radii.len(), |it| {
                let t = axis.x0_n + (it as f64 + 0.5) * ht;
                let mut acc = vec![NeumaierSum::new(); radii.len()];
                for i in 0..2 * nr {
                    let u = -r_max + (i as f64 + 0.5) * hr;
                    let x = [axis.x0_prime[0] + u, t];
                    let v = field.eval(&x).norm().powf(p) * hr * ht;
                    for (a, &r) in acc.iter_mut().zip(radii) {
                        if u.abs() <= r {
                            a.add(v);
                        }
                    }
                }
                acc.iter().map(|s| s.value()).collect()
            });
            return Ok((sums, na * 2 * nr));
        }
        2 => {
            let hphi = TAU / nphi as f64;
            reduce_rows(na, radii.len(), |it| {
                let t = axis.x0_n + (it as f64 + 0.5) * ht;
                let mut acc = vec![NeumaierSum::new(); radii.len()];
                for i in 0..nr {
                    let rho = (i as f64 + 0.5) * hr;
                    for j in 0..nphi {
                        let (s, c) = ((j as f64 + 0.5) * hphi).sin_cos();
                        let x = [axis.x0_prime[0] + rho * c, axis.x0_prime[1] + rho * s, t];
                        let v = field.eval(&x).norm().powf(p) * rho * hr * hphi * ht;
                        for (a, &r) in acc.iter_mut().zip(radii) {
                            if rho <= r {
                                a.add(v);
                            }
                        }
                    }
                }
                acc.iter().map(|s| s.value()).collect()
            })
        }
        _ => return Err(NormError::Unsupported(format!("tube cross-sections of dimension {d}"))),
    };
    Ok((w_sum, na * nr * nphi))
}

/// `‖f‖_{L^p}` over the tube of the given radius around the closed axis
/// geodesic. The grid and the embedding limit come from `mode`; `field` is
/// usually `mode` itself.
pub fn flat_tube_lp_norm<F: Field>(
    mode: &FlatMode,
    field: &F,
    axis: &FlatTubeAxis,
    radius: f64,
    p: f64,
    tol: f64,
) -> Result<NormReport, NormError> {
    check_ps(&[p])?;
    let limit = flat_tube_limit(mode);
    if radius > limit {
        return Err(NormError::TubeNotEmbedded { radius, limit });
    }
    let grid = tube_grid(mode, axis, radius);
    let err = std::cell::RefCell::new(None);
    let reports = refine(&[p], tol, 1.0, 2, |level| {
        match tube_integrals(field, axis, &[radius], p, &grid, level) {
            Ok(r) => r,
            Err(e) => {
                *err.borrow_mut() = Some(e);
                (vec![0.0], 0)
            }
        }
    });
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(reports?.remove(0))
}

/// `‖ψ‖_{L²}` over nested tubes, all on the grid of the largest radius.
pub fn flat_tube_profile(mode: &FlatMode, axis: &FlatTubeAxis, radii: &[f64]) -> Result<Vec<f64>, NormError> {
    let r_max = radii.iter().fold(0.0f64, |m, &r| m.max(r));
    let limit = flat_tube_limit(mode);
    if r_max > limit {
        return Err(NormError::TubeNotEmbedded { radius: r_max, limit });
    }
    let grid = tube_grid(mode, axis, r_max);
    let (sums, _) = tube_integrals(mode, axis, radii, 2.0, &grid, 1)?;
    Ok(sums.iter().map(|s| s.sqrt()).collect())
}

/// `‖ψ‖_{L²}` of the tube by an indicator function on a box grid around it;
/// a coarse, independent check of [`flat_tube_lp_norm`].
pub fn flat_tube_indicator_l2<F: Field>(field: &F, axis: &FlatTubeAxis, radius: f64, nodes: usize) -> f64 {
    let d = axis.x0_prime.len();
    let ht = axis.period / nodes as f64;
    let hb = 2.0 * radius / nodes as f64;
    let cross = nodes.pow(d as u32);
    let sums = reduce_rows(nodes, 1, |it| {
        let t = axis.x0_n + (it as f64 + 0.5) * ht;
        let mut acc = NeumaierSum::new();
        let mut x = vec![0.0; d + 1];
        x[d] = t;
        for code in 0..cross {
            let mut rem = code;
            let mut r2 = 0.0;
            for j in 0..d {
                let u = -radius + ((rem % nodes) as f64 + 0.5) * hb;
                rem /= nodes;
                x[j] = axis.x0_prime[j] + u;
                r2 += u * u;
            }
            if r2 <= radius * radius {
                acc.add(field.eval(&x).norm_sqr() * hb.powi(d as i32) * ht);
            }
        }
        vec![acc.value()]
    });
    sums[0].sqrt()
}

/// Minimum of `|ψ|` over the sample grid of the Knapp tube.
pub fn flat_tube_min_abs<F: Field>(field: &F, tube: &KnappTube, per_axis: usize) -> f64 {
    crate::flat_mode::tube_samples(tube, per_axis)
        .par_iter()
        .map(|x| field.eval(x).norm())
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{
        align_lattice, choose_axis_line, geodesic_period, AxisOptions, FlatQuotient, RigidMotion,
    };
    use crate::flat_mode::{spaceform_mode, FlatModeOptions};
    use statrs::function::gamma::ln_gamma;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    /// `2π^{3/2} √k Γ(k+1)/Γ(k+3/2)` from `∫_{−1}^{1}(1−t²)^k dt`.
    fn q_norm_sq_oracle(k: u64) -> f64 {
        let k = k as f64;
        2.0 * PI.powf(1.5) * k.sqrt() * (ln_gamma(k + 1.0) - ln_gamma(k + 1.5)).exp()
    }

    #[test]
    fn oracle_value_at_degree_four() {
        assert!((q_norm_sq_oracle(4) - 10.213).abs() < 1e-3);
    }

    #[test]
    fn constant_on_sphere_and_klein_bottle() {
        let one = FnField(|_: &[f64]| Complex64::new(1.0, 0.0));
        let dom = SphereDomain { n: 2, group_order: 1, lambda: 1.0 };
        let r = sphere_lp_norms(&one, &dom, &[2.0], 1e-10, None).unwrap();
        assert!((r[0].value - (4.0 * PI).sqrt()).abs() < 1e-12);
        let r = flat_lp_norms(&one, &DMatrix::identity(2, 2), 2, &[16, 16], &[2.0], 1e-12).unwrap();
        assert!((r[0].value - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn full_and_reduced_sphere_rules_match_oracle() {
        for k in [4u64, 20] {
            let q = SphereMode::plain(2, k).unwrap();
            let dom = SphereDomain { n: 2, group_order: 1, lambda: q.lambda() };
            let full = sphere_lp_norms(&q, &dom, &[2.0], 1e-8, None).unwrap();
            let reduced = sphere_mode_lp_norms(&q, &[2.0], 1e-8).unwrap();
            let oracle = q_norm_sq_oracle(k);
            assert!((full[0].value.powi(2) / oracle - 1.0).abs() < 1e-10, "k={k}");
            assert!((reduced[0].value.powi(2) / oracle - 1.0).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn lens_space_reduced_rule_matches_full_grid() {
        // L(3;1) acting on S^3 by simultaneous rotations.
        let c = (TAU / 3.0).cos();
        let s = (TAU / 3.0).sin();
        let g = DMatrix::from_row_slice(4, 4, &[c, -s, 0., 0., s, c, 0., 0., 0., 0., c, -s, 0., 0., s, c]);
        let quot = std::sync::Arc::new(crate::geometry::SphereQuotient::new(3, &[g], 1e-10).unwrap());
        let stab = crate::geometry::equator_stabilizer(&quot).unwrap();
        let mode = SphereMode::deck_sum(quot, &stab, 2).unwrap();
        let reduced = sphere_mode_lp_norms(&mode, &[1.0, 2.0], 1e-8).unwrap();
        let dom = SphereDomain { n: 3, group_order: 3, lambda: mode.lambda() };
        let full = sphere_lp_norms(&mode, &dom, &[1.0, 2.0], 1e-3, Some(64)).unwrap();
        for (a, b) in reduced.iter().zip(&full) {
            assert!((a.value / b.value - 1.0).abs() < 1e-3, "{} vs {}", a.value, b.value);
        }
    }

    #[test]
    fn resolution_floor_enforced() {
        let q = SphereMode::plain(2, 100).unwrap();
        let dom = SphereDomain { n: 2, group_order: 1, lambda: q.lambda() };
        assert!(matches!(
            sphere_lp_norms(&q, &dom, &[2.0], 1e-6, Some(50)),
            Err(NormError::ResolutionTooCoarse { .. })
        ));
    }

    #[test]
    fn sphere_tube_mass_ratio() {
        // Oracle: ∫_{|a|≤r} cos^{2k+1} a da / ∫_{|a|≤π/2} cos^{2k+1} a da.
        let k = 60u64;
        let q = SphereMode::plain(2, k).unwrap();
        let r = 1.0 / (k as f64).sqrt();
        let tube = sphere_tube_lp_norm(&q, r, FRAC_PI_4_, 2.0, 1e-8).unwrap();
        let total = sphere_mode_lp_norms(&q, &[2.0], 1e-8).unwrap();
        let ratio = (tube.value / total[0].value).powi(2);
        let f = |a: f64| a.cos().powi(2 * k as i32 + 1);
        let simpson = |lo: f64, hi: f64| {
            let m = 20000;
            let h = (hi - lo) / m as f64;
            (0..=m)
                .map(|i| {
                    let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    w * f(lo + i as f64 * h)
                })
                .sum::<f64>()
                * h
                / 3.0
        };
        let oracle = simpson(0.0, r) / simpson(0.0, FRAC_PI_2);
        assert!((ratio - oracle).abs() < 1e-7, "{ratio} vs {oracle}");
        assert!(ratio > 0.5);
    }

    #[test]
    fn tube_grid_matches_radial_rule() {
        let k = 24u64;
        let q = SphereMode::plain(3, k).unwrap();
        let r = 2.0 / (k as f64).sqrt();
        let radial = sphere_tube_lp_norm(&q, r, 1.0, 2.0, 1e-8).unwrap();
        let dom = SphereDomain { n: 3, group_order: 1, lambda: q.lambda() };
        let grid = sphere_grid(&q, &dom, r, 64, 4 * sphere_required_nodes(q.lambda()), &[2.0], 1e-5).unwrap();
        assert!((grid[0].value / radial.value - 1.0).abs() < 1e-6);
    }

    const FRAC_PI_4_: f64 = std::f64::consts::FRAC_PI_4;

    fn klein() -> FlatQuotient {
        let glide = RigidMotion::new(DMatrix::from_diagonal(&v(&[-1.0, 1.0])), v(&[0.0, 0.5]));
        FlatQuotient::new(
            DMatrix::identity(2, 2),
            vec![glide, RigidMotion::translation(v(&[1.0, 0.0]))],
            1e-10,
        )
        .unwrap()
    }

    #[test]
    fn klein_quadrature_matches_parseval() {
        let f = klein();
        let axis = choose_axis_line(&f, AxisOptions::default()).unwrap();
        let m = spaceform_mode(&f, 80, 1.0 / 80f64.ln(), &axis, &FlatModeOptions::default()).unwrap();
        let fast = flat_mode_lp_norms(&m, &[1.0, 2.0, 4.0], 1e-8).unwrap();
        let exact = l2_exact_parseval(&m);
        assert!((fast[1].value / exact - 1.0).abs() < 1e-10);
        let counts = flat_required_counts(&m);
        let slow = flat_lp_norms(&Pointwise(&m, Method::Frequency), m.basis(), 2, &counts, &[1.0, 2.0, 4.0], 1e-8)
            .unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a.value / b.value - 1.0).abs() < 1e-9, "p={}", a.p);
        }
    }

    #[test]
    fn sheared_torus_norms_are_frame_independent() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.2, 1.1]);
        let gens = (0..2).map(|j| RigidMotion::translation(b.column(j).into_owned())).collect();
        let f = FlatQuotient::new(b, gens, 1e-10).unwrap();
        let (_, fa) = align_lattice(&f).unwrap();
        let axis = choose_axis_line(&fa, AxisOptions::default()).unwrap();
        let m = spaceform_mode(&fa, 60, 0.5, &axis, &FlatModeOptions::default()).unwrap();
        let orig = m.in_frame(&f).unwrap();
        let fast = flat_mode_lp_norms(&m, &[1.0, 2.0, 4.0], 1e-4).unwrap();
        let counts = flat_required_counts(&m);
        let slow = flat_lp_norms(&Pointwise(&orig, Method::Frequency), f.basis(), 1, &counts, &[1.0, 2.0, 4.0], 1e-4)
            .unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a.value - b.value).abs() < 1e-8 * a.value);
        }
    }

    #[test]
    fn tube_profile_is_monotone_and_matches_direct_rule() {
        let f = klein();
        let axis = choose_axis_line(&f, AxisOptions::default()).unwrap();
        let m = spaceform_mode(&f, 100, 1.0 / 100f64.ln(), &axis, &FlatModeOptions::default()).unwrap();
        let period = geodesic_period(&f, &axis).unwrap().length;
        let tube_axis = FlatTubeAxis { x0_prime: vec![axis.x0_prime[0]], x0_n: axis.x0_n, period };
        let r = axis.c1 / m.lambda_delta().sqrt();
        let radii: Vec<f64> = (1..=5).map(|i| r * i as f64 / 5.0).collect();
        let prof = flat_tube_profile(&m, &tube_axis, &radii).unwrap();
        assert!(prof.windows(2).all(|w| w[1] >= w[0]));
        let direct = flat_tube_lp_norm(&m, &m, &tube_axis, r, 2.0, 1e-6).unwrap();
        assert!((direct.value / prof[4] - 1.0).abs() < 1e-6);
        let ind = flat_tube_indicator_l2(&m, &tube_axis, r, 200);
        assert!((ind / direct.value - 1.0).abs() < 2e-2);
        assert!(matches!(
            flat_tube_lp_norm(&m, &m, &tube_axis, 0.3, 2.0, 1e-6),
            Err(NormError::TubeNotEmbedded { .. })
        ));
    }

    #[test]
    fn reduction_is_thread_count_independent() {
        let q = SphereMode::plain(2, 30).unwrap();
        let dom = SphereDomain { n: 2, group_order: 1, lambda: q.lambda() };
        let a = sphere_lp_norms(&q, &dom, &[1.0, 2.0], 1e-8, None).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| sphere_lp_norms(&q, &dom, &[1.0, 2.0], 1e-8, None).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.value.to_bits(), y.value.to_bits());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn constants_integrate_to_volume(c in 0.1f64..5.0, p in 1.0f64..6.0, n in 2usize..4) {
                let f = FnField(move |_: &[f64]| Complex64::new(c, 0.0));
                let dom = SphereDomain { n, group_order: 2, lambda: 20.0 };
                let r = sphere_lp_norms(&f, &dom, &[p], 1e-8, None).unwrap();
                let vol = sphere_area(n + 1) / 2.0;
                prop_assert!((r[0].value / (c * vol.powf(1.0 / p)) - 1.0).abs() < 1e-8);
            }

            #[test]
            fn flat_constants_match_covolume(a in 0.5f64..2.0, b in 0.5f64..2.0, shear in -0.5f64..0.5, idx in 1usize..4) {
                let basis = DMatrix::from_row_slice(2, 2, &[a, shear, 0.0, b]);
                let one = FnField(|_: &[f64]| Complex64::new(1.0, 0.0));
                let r = flat_lp_norms(&one, &basis, idx, &[8, 8], &[1.0, 2.0], 1e-12).unwrap();
                let vol = a * b / idx as f64;
                prop_assert!((r[0].value - vol).abs() < 1e-12 * vol.max(1.0));
                prop_assert!((r[1].value - vol.sqrt()).abs() < 1e-12);
            }

            #[test]
            fn nested_tubes_are_monotone(k in 40u64..120, fracs in proptest::collection::vec(0.05f64..1.0, 2..6)) {
                let f = klein();
                let axis = choose_axis_line(&f, AxisOptions::default()).unwrap();
                let lambda = k as f64;
                let m = spaceform_mode(&f, k, 1.0 / lambda.ln(), &axis, &FlatModeOptions::default()).unwrap();
                let period = geodesic_period(&f, &axis).unwrap().length;
                let tube_axis = FlatTubeAxis { x0_prime: vec![axis.x0_prime[0]], x0_n: axis.x0_n, period };
                let limit = flat_tube_limit(&m);
                let mut radii: Vec<f64> = fracs.iter().map(|t| t * limit).collect();
                radii.sort_by(f64::total_cmp);
                let prof = flat_tube_profile(&m, &tube_axis, &radii).unwrap();
                prop_assert!(prof.windows(2).all(|w| w[1] >= w[0]));
                // The profile is a single-level rule, good to about 1e-7 when
                // the tube holds nearly all the mass.
                prop_assert!(prof[prof.len() - 1] <= l2_exact_parseval(&m) * (1.0 + 1e-6));
            }

            #[test]
            fn halving_step_shrinks_estimate(k in 2u64..12) {
                // Smooth, non-periodic integrand on a tube cross-section.
                let q = SphereMode::plain(2, k).unwrap();
                let dom = SphereDomain { n: 2, group_order: 1, lambda: q.lambda() };
                let prof = |a: f64| (1.0 + a).exp();
                let h1 = |base: f64| {
                    let r0 = sphere_radial_lp_norms(prof, &SphereDomain { lambda: base, ..dom }, 0.3, &[2.0], 1.0).unwrap();
                    r0[0].err_estimate
                };
                let e_coarse = h1(q.lambda());
                let e_fine = h1(2.0 * 4096.0);
                prop_assert!(e_fine * 3.0 <= e_coarse || e_coarse < 1e-14);
            }
        }
    }
}
