//! Flat space forms `ℝ^n / Γ` for Bieberbach groups `Γ`.
//!
//! Points are handled in two frames: physical `x` and lattice coordinates
//! `y = B⁻¹x`, in which `Λ` becomes `ℤ^n` and each coset representative acts
//! as `y ↦ U y + t` with `U` integer.

use nalgebra::{DMatrix, DVector};

use super::{GeometryError, DEFAULT_MAX_ORDER, DEFAULT_MAX_TRIALS};
use crate::halton::{halton_ball_point, radical_inverse};
use crate::linalg::{condition_number, max_abs_diff, orthogonality_defect, round_to_integer};

const LATTICE_RESIDUAL: f64 = 1e-8;

/// `x ↦ m x + j` with `m` orthogonal.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidMotion {
    pub linear: DMatrix<f64>,
    pub shift: DVector<f64>,
}

impl RigidMotion {
    pub fn new(linear: DMatrix<f64>, shift: DVector<f64>) -> Self {
        assert_eq!(linear.nrows(), shift.len());
        Self { linear, shift }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n), DVector::zeros(n))
    }

    pub fn translation(shift: DVector<f64>) -> Self {
        let n = shift.len();
        Self::new(DMatrix::identity(n, n), shift)
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear * x + &self.shift
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &RigidMotion) -> RigidMotion {
        RigidMotion::new(&self.linear * &other.linear, &self.linear * &other.shift + &self.shift)
    }

    pub fn inverse(&self) -> RigidMotion {
        let mt = self.linear.transpose();
        let shift = -(&mt * &self.shift);
        RigidMotion::new(mt, shift)
    }

    /// `Q ∘ self ∘ Qᵀ` for orthogonal `Q`.
    pub fn conjugate(&self, q: &DMatrix<f64>) -> RigidMotion {
        RigidMotion::new(q * &self.linear * q.transpose(), q * &self.shift)
    }
}

/// One representative per point-group element.
#[derive(Debug, Clone)]
pub struct CosetRep {
    /// The motion, with its translation reduced modulo `Λ`.
    pub motion: RigidMotion,
    /// `U = B⁻¹ m B`.
    pub lattice_action: DMatrix<i64>,
    /// `t = B⁻¹ j`, in `[0, 1)^n`.
    pub shift_y: DVector<f64>,
    /// Order of the linear part.
    pub order: usize,
}

impl CosetRep {
    pub fn lattice_action_f64(&self) -> DMatrix<f64> {
        self.lattice_action.map(|v| v as f64)
    }

    /// `y ↦ U y + t`.
    pub fn apply_y(&self, y: &[f64]) -> Vec<f64> {
        let n = y.len();
        (0..n)
            .map(|r| {
                let mut acc = self.shift_y[r];
                for c in 0..n {
                    acc += self.lattice_action[(r, c)] as f64 * y[c];
                }
                acc
            })
            .collect()
    }
}

/// Validated covering data of a compact flat manifold.
#[derive(Debug, Clone)]
pub struct FlatQuotient {
    n: usize,
    basis: DMatrix<f64>,
    basis_inv: DMatrix<f64>,
    det_abs: f64,
    condition: f64,
    generators: Vec<RigidMotion>,
    cosets: Vec<CosetRep>,
    tol: f64,
}

impl FlatQuotient {
    pub fn new(
        basis: DMatrix<f64>,
        generators: Vec<RigidMotion>,
        tol: f64,
    ) -> Result<Self, GeometryError> {
        Self::with_max_order(basis, generators, tol, DEFAULT_MAX_ORDER)
    }

    pub fn with_max_order(
        basis: DMatrix<f64>,
        generators: Vec<RigidMotion>,
        tol: f64,
        max_order: usize,
    ) -> Result<Self, GeometryError> {
        let n = basis.nrows();
        if basis.ncols() != n || n < 2 {
            return Err(GeometryError::DimensionMismatch(format!(
                "lattice basis must be square with n >= 2, got {:?}",
                basis.shape()
            )));
        }
        let condition = condition_number(&basis);
        if !condition.is_finite() || condition > 1e12 {
            return Err(GeometryError::SingularBasis { condition });
        }
        let basis_inv = basis
            .clone()
            .try_inverse()
            .ok_or(GeometryError::SingularBasis { condition })?;
        let det_abs = basis.determinant().abs();

        for (index, g) in generators.iter().enumerate() {
            if g.linear.shape() != (n, n) || g.shift.len() != n {
                return Err(GeometryError::DimensionMismatch(format!(
                    "generator {index} does not act on R^{n}"
                )));
            }
            let defect = orthogonality_defect(&g.linear);
            if defect > tol {
                return Err(GeometryError::NotOrthogonal { index, defect });
            }
            let u = &basis_inv * &g.linear * &basis;
            let residual = u.iter().fold(0.0f64, |m, v| m.max((v - v.round()).abs()));
            if residual > LATTICE_RESIDUAL {
                return Err(GeometryError::LatticeNotPreserved { index, residual });
            }
        }

        // Schreier transversal of Λ in Γ, grown by right multiplication.
        let dedup = 10.0 * tol;
        let mut reps = vec![RigidMotion::identity(n)];
        let mut schreier: Vec<Vec<i64>> = Vec::new();
        let mut cursor = 0;
        while cursor < reps.len() {
            let r = reps[cursor].clone();
            for g in &generators {
                let product = r.compose(g);
                match reps
                    .iter()
                    .position(|e| max_abs_diff(&e.linear, &product.linear) < dedup)
                {
                    Some(j) => {
                        let diff = &basis_inv * (&product.shift - &reps[j].shift);
                        schreier.push(integer_vector(&diff)?);
                    }
                    None => {
                        if reps.len() >= max_order {
                            return Err(GeometryError::ClosureNotReached { cap: max_order });
                        }
                        reps.push(product);
                    }
                }
            }
            cursor += 1;
        }
        check_generates_unit_lattice(n, &schreier)?;

        let mut cosets = Vec::with_capacity(reps.len());
        for (index, r) in reps.into_iter().enumerate() {
            let u_f = &basis_inv * &r.linear * &basis;
            let lattice_action = round_to_integer(&u_f, LATTICE_RESIDUAL).ok_or_else(|| {
                GeometryError::LatticeNotPreserved {
                    index,
                    residual: u_f.iter().fold(0.0f64, |m, v| m.max((v - v.round()).abs())),
                }
            })?;
            let raw = &basis_inv * &r.shift;
            let shift_y = raw.map(|v| {
                let f = v - v.floor();
                if f > 1.0 - 1e-12 {
                    0.0
                } else {
                    f
                }
            });
            let motion = RigidMotion::new(r.linear.clone(), &basis * &shift_y);
            let order = linear_order(&lattice_action, max_order)?;
            cosets.push(CosetRep { motion, lattice_action, shift_y, order });
        }

        for (index, rep) in cosets.iter().enumerate().skip(1) {
            if let Some(z) = torsion_witness(rep) {
                return Err(GeometryError::NotFreeAction(format!(
                    "coset {index} contains an element of finite order (lattice shift {z:?})"
                )));
            }
        }

        Ok(Self { n, basis, basis_inv, det_abs, condition, generators, cosets, tol })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Lattice basis `B` (columns generate `Λ`).
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn basis_inv(&self) -> &DMatrix<f64> {
        &self.basis_inv
    }

    /// `|det B|`, the covolume of `Λ`.
    pub fn covolume(&self) -> f64 {
        self.det_abs
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn generators(&self) -> &[RigidMotion] {
        &self.generators
    }

    /// Coset representatives; index 0 is the identity.
    pub fn cosets(&self) -> &[CosetRep] {
        &self.cosets
    }

    /// Index `N = [Γ : Λ]`.
    pub fn index(&self) -> usize {
        self.cosets.len()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Volume of the quotient, `|det B| / N`.
    pub fn volume(&self) -> f64 {
        self.det_abs / self.index() as f64
    }

    pub fn to_y(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.basis_inv * x
    }

    pub fn to_x(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.basis * y
    }

    /// Writes `α = λ ∘ α_i`, returning `i` and `B⁻¹λ ∈ ℤ^n`.
    pub fn decompose(&self, alpha: &RigidMotion) -> Option<(usize, Vec<i64>)> {
        let dedup = 10.0 * self.tol;
        let i = self
            .cosets
            .iter()
            .position(|c| max_abs_diff(&c.motion.linear, &alpha.linear) < dedup)?;
        let diff = &self.basis_inv * (&alpha.shift - &self.cosets[i].motion.shift);
        let z = integer_vector(&diff).ok()?;
        Some((i, z))
    }

    /// True when the last basis column is `(0, …, 0, s)` with `s > 0`.
    pub fn is_aligned(&self) -> bool {
        let n = self.n;
        let s = self.basis[(n - 1, n - 1)];
        s > 0.0 && (0..n - 1).all(|r| self.basis[(r, n - 1)] == 0.0)
    }

    /// `s = |b_n|`.
    pub fn last_scale(&self) -> f64 {
        self.basis.column(self.n - 1).norm()
    }

    /// Upper-left block `A` of `B⁻¹ = [[A, 0], [a, 1/s]]` (aligned lattices).
    pub fn block_a(&self) -> Result<DMatrix<f64>, GeometryError> {
        if !self.is_aligned() {
            return Err(GeometryError::NotAligned);
        }
        let m = self.n - 1;
        Ok(self.basis_inv.view((0, 0), (m, m)).into_owned())
    }
}

fn integer_vector(v: &DVector<f64>) -> Result<Vec<i64>, GeometryError> {
    let mut out = Vec::with_capacity(v.len());
    for &x in v.iter() {
        if (x - x.round()).abs() > LATTICE_RESIDUAL {
            return Err(GeometryError::TranslationOutsideLattice(v.iter().copied().collect()));
        }
        out.push(x.round() as i64);
    }
    Ok(out)
}

/// Checks that the translations found in the group span all of `ℤ^n`, i.e.
/// that the declared lattice is the full translation subgroup.
fn check_generates_unit_lattice(n: usize, vectors: &[Vec<i64>]) -> Result<(), GeometryError> {
    let mut rows: Vec<Vec<i128>> = vectors
        .iter()
        .filter(|v| v.iter().any(|&x| x != 0))
        .map(|v| v.iter().map(|&x| x as i128).collect())
        .collect();
    let mut det: i128 = 1;
    for col in 0..n {
        // Euclid on the column among the remaining rows.
        let start = col;
        loop {
            let pivot = (start..rows.len())
                .filter(|&r| rows[r][col] != 0)
                .min_by_key(|&r| rows[r][col].abs());
            let Some(p) = pivot else {
                return Err(lattice_deficit(format!("translations have rank {col} < {n}")));
            };
            rows.swap(start, p);
            let mut done = true;
            for r in start + 1..rows.len() {
                let q = rows[r][col] / rows[start][col];
                if q != 0 {
                    for c in 0..n {
                        rows[r][c] -= q * rows[start][c];
                    }
                }
                if rows[r][col] != 0 {
                    done = false;
                }
            }
            if done {
                break;
            }
        }
        det *= rows[start][col].abs();
        if det > 1 {
            return Err(lattice_deficit(format!(
                "translations generate a sublattice of index {det}"
            )));
        }
    }
    Ok(())
}

fn lattice_deficit(detail: String) -> GeometryError {
    GeometryError::NotFreeAction(format!(
        "the group is not a Bieberbach group over the given lattice: {detail}"
    ))
}

fn linear_order(u: &DMatrix<i64>, cap: usize) -> Result<usize, GeometryError> {
    let n = u.nrows();
    let id = DMatrix::<i64>::identity(n, n);
    let mut p = u.clone();
    for order in 1..=cap {
        if p == id {
            return Ok(order);
        }
        p = &p * u;
    }
    Err(GeometryError::ClosureNotReached { cap })
}

/// Looks for `z ∈ ℤ^n` such that `y ↦ U y + t + z` has a fixed point.
///
/// An affine map whose linear part has order `r` has a fixed point exactly
/// when its `r`-th power is the identity, i.e. when `Σ_q U^q (t + z) = 0`.
fn torsion_witness(rep: &CosetRep) -> Option<Vec<i64>> {
    let n = rep.shift_y.len();
    let u = rep.lattice_action_f64();
    let mut avg = DMatrix::<f64>::zeros(n, n);
    let mut p = DMatrix::<f64>::identity(n, n);
    for _ in 0..rep.order {
        avg += &p;
        p = &p * &u;
    }
    let bound = rep.order as i64;
    let width = (2 * bound + 1) as usize;
    let total = width.checked_pow(n as u32)?;
    let mut z = vec![0i64; n];
    for code in 0..total {
        let mut c = code;
        for zi in z.iter_mut() {
            *zi = (c % width) as i64 - bound;
            c /= width;
        }
        let v = DVector::from_iterator(n, (0..n).map(|i| rep.shift_y[i] + z[i] as f64));
        let s = &avg * v;
        if s.amax() < 1e-9 {
            return Some(z);
        }
    }
    None
}

/// Rotates the lattice so that `b_n` points along `e_n`.
///
/// Returns `Q` with `Q b_n = (0, …, 0, s)` and `det Q = +1`, and the
/// conjugated quotient with basis `QB` and generators `Q α Qᵀ`.
pub fn align_lattice(f: &FlatQuotient) -> Result<(DMatrix<f64>, FlatQuotient), GeometryError> {
    let n = f.dim();
    if f.is_aligned() {
        return Ok((DMatrix::identity(n, n), f.clone()));
    }
    let b = f.basis().column(n - 1).into_owned();
    let s = b.norm();
    let v = &b / s;
    let mut w = v.clone();
    w[n - 1] -= 1.0;
    let q = if w.norm() < 1e-15 {
        DMatrix::identity(n, n)
    } else {
        // Householder reflection v ↦ e_n, then flip e_1 to restore det = +1.
        let h = DMatrix::identity(n, n) - (&w * w.transpose()) * (2.0 / w.norm_squared());
        let mut d = DMatrix::identity(n, n);
        d[(0, 0)] = -1.0;
        d * h
    };
    let mut basis = &q * f.basis();
    let scale = basis.amax();
    for x in basis.iter_mut() {
        if x.abs() < 1e-14 * scale {
            *x = 0.0;
        }
    }
    for r in 0..n - 1 {
        basis[(r, n - 1)] = 0.0;
    }
    basis[(n - 1, n - 1)] = s;
    let gens = f.generators().iter().map(|g| g.conjugate(&q)).collect();
    let aligned = FlatQuotient::new(basis, gens, f.tol())?;
    Ok((q, aligned))
}

#[derive(Debug, Clone, Copy)]
pub struct AxisOptions {
    /// Radius of the ball searched for `x₀′`.
    pub c0: f64,
    pub max_trials: u64,
}

impl Default for AxisOptions {
    fn default() -> Self {
        Self { c0: 0.25, max_trials: DEFAULT_MAX_TRIALS }
    }
}

/// A lift `α_i⁻¹(ℓ₀^η)` of the axis, where `ℓ₀^η` is the axis line shifted
/// by the projected lattice vector `A⁻¹η`.
#[derive(Debug, Clone)]
pub struct ExcludedLine {
    pub coset: usize,
    pub eta: Vec<i64>,
    pub point: DVector<f64>,
    /// Unit direction `m_iᵀ e_n`.
    pub direction: DVector<f64>,
    /// Whether the line is parallel to `e_n`.
    pub parallel: bool,
}

impl ExcludedLine {
    pub fn distance(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.point;
        let along = d.dot(&self.direction);
        (d - &self.direction * along).norm()
    }
}

/// Axis line `ℓ₀ = {(x₀′, t)}` and base point for the flat construction.
#[derive(Debug, Clone)]
pub struct AxisChoice {
    pub x0_prime: DVector<f64>,
    /// Last coordinate of the base point.
    pub x0_n: f64,
    pub base_point: DVector<f64>,
    /// `y₀′ = A x₀′`.
    pub y0_prime: DVector<f64>,
    /// Distance from the base point to the nearest excluded line (`+∞` if
    /// there are none).
    pub clearance: f64,
    /// Distance from `ℓ₀` to the nearest parallel excluded line.
    pub parallel_clearance: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub lines: Vec<ExcludedLine>,
}

impl AxisChoice {
    /// `min(clearance / 4, 0.05)`.
    pub fn tube_constant(clearance: f64) -> f64 {
        (clearance / 4.0).min(0.05)
    }
}

fn excluded_lines(
    f: &FlatQuotient,
    x0_prime: &DVector<f64>,
    eta_radius: i64,
) -> Result<Vec<ExcludedLine>, GeometryError> {
    let n = f.dim();
    let a = f.block_a()?;
    let a_inv = a
        .clone()
        .try_inverse()
        .ok_or(GeometryError::SingularBasis { condition: f64::INFINITY })?;
    let m = n - 1;
    let width = (2 * eta_radius + 1) as usize;
    let total = width.pow(m as u32);
    let mut e_n = DVector::zeros(n);
    e_n[n - 1] = 1.0;
    let mut out = Vec::new();
    for (i, rep) in f.cosets().iter().enumerate().skip(1) {
        let mt = rep.motion.linear.transpose();
        let direction = &mt * &e_n;
        let parallel = (direction[n - 1].abs() - 1.0).abs() < 1e-9;
        for code in 0..total {
            let mut c = code;
            let eta: Vec<i64> = (0..m)
                .map(|_| {
                    let v = (c % width) as i64 - eta_radius;
                    c /= width;
                    v
                })
                .collect();
            let eta_f = DVector::from_iterator(m, eta.iter().map(|&v| v as f64));
            let shifted = x0_prime + &a_inv * eta_f;
            let mut target = DVector::zeros(n);
            target.rows_mut(0, m).copy_from(&shifted);
            let point = &mt * (target - &rep.motion.shift);
            out.push(ExcludedLine { coset: i, eta, point, direction: direction.clone(), parallel });
        }
    }
    Ok(out)
}

fn eta_radius(f: &FlatQuotient, c0: f64) -> Result<i64, GeometryError> {
    let a = f.block_a()?;
    let norm = a.clone().singular_values().amax();
    let reach = 4.0 * c0 + f.basis().amax() * f.dim() as f64;
    Ok(((norm * reach).ceil() as i64 + 1).clamp(1, 8))
}

fn min_distance(lines: &[ExcludedLine], x: &DVector<f64>, parallel_only: bool) -> f64 {
    lines
        .iter()
        .filter(|l| !parallel_only || l.parallel)
        .map(|l| l.distance(x))
        .fold(f64::INFINITY, f64::min)
}

fn assemble(
    f: &FlatQuotient,
    x0_prime: DVector<f64>,
    x0_n: f64,
    c0: f64,
    lines: Vec<ExcludedLine>,
) -> Result<AxisChoice, GeometryError> {
    let n = f.dim();
    let mut base_point = DVector::zeros(n);
    base_point.rows_mut(0, n - 1).copy_from(&x0_prime);
    base_point[n - 1] = x0_n;
    let clearance = min_distance(&lines, &base_point, false);
    let parallel_clearance = min_distance(&lines, &base_point, true);
    let c = AxisChoice::tube_constant(clearance);
    let y0_prime = f.block_a()? * &x0_prime;
    Ok(AxisChoice {
        x0_prime,
        x0_n,
        base_point,
        y0_prime,
        clearance,
        parallel_clearance,
        c0,
        c1: c,
        c2: c,
        lines,
    })
}

/// Evaluates the axis data for a prescribed `x₀′` and base height `x0_n`.
pub fn axis_at(
    f: &FlatQuotient,
    x0_prime: DVector<f64>,
    x0_n: f64,
    c0: f64,
) -> Result<AxisChoice, GeometryError> {
    let r = eta_radius(f, c0.max(x0_prime.norm()))?;
    let lines = excluded_lines(f, &x0_prime, r)?;
    assemble(f, x0_prime, x0_n, c0, lines)
}

/// Chooses `x₀′` with `|x₀′| ≤ c₀` maximizing the distance from the axis
/// line to every parallel excluded line, then a base height in `[−c₀, c₀]`
/// maximizing the distance to the transverse ones.
pub fn choose_axis_line(f: &FlatQuotient, opts: AxisOptions) -> Result<AxisChoice, GeometryError> {
    let n = f.dim();
    if !f.is_aligned() {
        return Err(GeometryError::NotAligned);
    }
    if f.index() == 1 {
        return axis_at(f, DVector::zeros(n - 1), 0.0, opts.c0);
    }
    let r = eta_radius(f, opts.c0)?;
    let mut best: Option<(DVector<f64>, f64)> = None;
    for i in 0..opts.max_trials {
        let Some(p) = halton_ball_point(i, n - 1, opts.c0) else { continue };
        let x0p = DVector::from_vec(p);
        let lines = excluded_lines(f, &x0p, r)?;
        let mut base = DVector::zeros(n);
        base.rows_mut(0, n - 1).copy_from(&x0p);
        let d = min_distance(&lines, &base, true);
        if best.as_ref().map_or(true, |(_, b)| d > *b) {
            best = Some((x0p, d));
        }
    }
    let Some((x0p, par)) = best else {
        return Err(GeometryError::SearchExhausted { trials: opts.max_trials });
    };
    if par <= f.tol() {
        return Err(GeometryError::SearchExhausted { trials: opts.max_trials });
    }
    let lines = excluded_lines(f, &x0p, r)?;
    if lines.iter().all(|l| l.parallel) {
        return assemble(f, x0p, 0.0, opts.c0, lines);
    }
    let trials = opts.max_trials.min(4096);
    let mut best_n = (0.0, f64::NEG_INFINITY);
    let mut base = DVector::zeros(n);
    base.rows_mut(0, n - 1).copy_from(&x0p);
    for i in 0..trials {
        let u = radical_inverse(i, 2);
        let h = if u < 0.5 { 2.0 * u } else { 2.0 * u - 2.0 } * opts.c0;
        base[n - 1] = h;
        let d = min_distance(&lines, &base, false);
        if d > best_n.1 {
            best_n = (h, d);
        }
    }
    if best_n.1 <= f.tol() {
        return Err(GeometryError::SearchExhausted { trials });
    }
    assemble(f, x0p, best_n.0, opts.c0, lines)
}

/// The closed geodesic traced by the axis line.
#[derive(Debug, Clone)]
pub struct GeodesicPeriod {
    /// Length `L` of the closed geodesic.
    pub length: f64,
    /// Coset of the closing element.
    pub coset: usize,
    /// Lattice part of the closing element, in `ℤ^n`.
    pub lattice_shift: Vec<i64>,
}

/// Smallest `t > 0` such that some `α ∈ Γ` with `m e_n = e_n` maps the base
/// point to the base point plus `t e_n`.
pub fn geodesic_period(f: &FlatQuotient, axis: &AxisChoice) -> Result<GeodesicPeriod, GeometryError> {
    if !f.is_aligned() {
        return Err(GeometryError::NotAligned);
    }
    let n = f.dim();
    let s = f.last_scale();
    let y0 = f.to_y(&axis.base_point);
    let mut best: Option<GeodesicPeriod> = None;
    for (i, rep) in f.cosets().iter().enumerate() {
        let m = &rep.motion.linear;
        let fixes_axis = (0..n).all(|r| {
            let target = if r == n - 1 { 1.0 } else { 0.0 };
            (m[(r, n - 1)] - target).abs() < 1e-9
        });
        if !fixes_axis {
            continue;
        }
        let uy: Vec<f64> = rep.apply_y(y0.as_slice());
        // z = y₀ − (U y₀ + t) + (t_axis / s) e_n must be integral.
        let w: Vec<f64> = (0..n).map(|r| y0[r] - uy[r]).collect();
        if w[..n - 1].iter().any(|v| (v - v.round()).abs() > 1e-9) {
            continue;
        }
        let wn = w[n - 1];
        let mut next = wn.floor() + 1.0;
        if next - wn < 1e-9 {
            next += 1.0;
        }
        let length = s * (next - wn);
        let mut z: Vec<i64> = w[..n - 1].iter().map(|v| v.round() as i64).collect();
        z.push(next as i64);
        if best.as_ref().map_or(true, |b| length < b.length - 1e-12) {
            best = Some(GeodesicPeriod { length, coset: i, lattice_shift: z });
        }
    }
    best.ok_or(GeometryError::NoPeriodFound)
}
