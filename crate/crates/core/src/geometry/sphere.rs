//! Sphere quotients `S^n / Γ` with `Γ` a finite subgroup of `O(n+1)`.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use nalgebra::{DMatrix, DVector};

use super::{GeometryError, DEFAULT_MAX_ORDER, DEFAULT_MAX_TRIALS};
use crate::halton::radical_inverse;
use crate::linalg::{max_abs_diff, min_singular_value, orthogonality_defect};

/// A finite group of orthogonal matrices acting freely on `S^n`.
#[derive(Debug, Clone)]
pub struct SphereQuotient {
    n: usize,
    elements: Vec<DMatrix<f64>>,
    tol: f64,
}

impl SphereQuotient {
    /// Generates the group from `generators` by closure.
    pub fn new(n: usize, generators: &[DMatrix<f64>], tol: f64) -> Result<Self, GeometryError> {
        Self::with_max_order(n, generators, tol, DEFAULT_MAX_ORDER)
    }

    pub fn with_max_order(
        n: usize,
        generators: &[DMatrix<f64>],
        tol: f64,
        max_order: usize,
    ) -> Result<Self, GeometryError> {
        if n < 2 {
            return Err(GeometryError::DimensionMismatch(format!(
                "sphere dimension must be at least 2, got {n}"
            )));
        }
        let size = n + 1;
        for (index, g) in generators.iter().enumerate() {
            if g.shape() != (size, size) {
                return Err(GeometryError::DimensionMismatch(format!(
                    "generator {index} has shape {:?}, expected {size}x{size}",
                    g.shape()
                )));
            }
            let defect = orthogonality_defect(g);
            if defect > tol {
                return Err(GeometryError::NotOrthogonal { index, defect });
            }
        }

        let dedup = 10.0 * tol;
        let mut elements = vec![DMatrix::identity(size, size)];
        let mut cursor = 0;
        while cursor < elements.len() {
            let current = elements[cursor].clone();
            for g in generators {
                let product = g * &current;
                if !elements.iter().any(|e| max_abs_diff(e, &product) < dedup) {
                    if elements.len() >= max_order {
                        return Err(GeometryError::ClosureNotReached { cap: max_order });
                    }
                    elements.push(product);
                }
            }
            cursor += 1;
        }

        let identity = DMatrix::identity(size, size);
        for (index, g) in elements.iter().enumerate().skip(1) {
            let sigma = min_singular_value(&(g - &identity));
            if sigma <= dedup {
                return Err(GeometryError::NotFreeAction(format!(
                    "element {index} has eigenvalue 1 (min |gx - x| = {sigma:.3e})"
                )));
            }
        }
        Ok(Self { n, elements, tol })
    }

    /// Dimension of the sphere `S^n`.
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    /// Group elements; index 0 is the identity.
    pub fn elements(&self) -> &[DMatrix<f64>] {
        &self.elements
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Index of the element matching `g` within the deduplication tolerance.
    pub fn find(&self, g: &DMatrix<f64>) -> Option<usize> {
        self.elements
            .iter()
            .position(|e| max_abs_diff(e, g) < 10.0 * self.tol)
    }
}

/// A great circle spanned by two orthonormal vectors.
#[derive(Debug, Clone)]
pub struct GreatCircle {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

impl GreatCircle {
    /// The reference circle `{(cos θ, sin θ, 0, …, 0)}` in `S^n`.
    pub fn equator(n: usize) -> Self {
        let mut u = DVector::zeros(n + 1);
        let mut v = DVector::zeros(n + 1);
        u[0] = 1.0;
        v[1] = 1.0;
        Self { u, v }
    }

    /// Geodesic distance from a unit vector to the circle.
    pub fn distance(&self, x: &DVector<f64>) -> f64 {
        let a = x.dot(&self.u);
        let b = x.dot(&self.v);
        (a * a + b * b).sqrt().min(1.0).acos()
    }
}

#[derive(Debug, Clone)]
pub struct StabilizerElement {
    /// Index into [`SphereQuotient::elements`].
    pub index: usize,
    /// The element rotates the reference circle by `2π step / m`.
    pub step: usize,
    /// Block acting on the last `n − 1` coordinates.
    pub fiber: DMatrix<f64>,
}

/// Elements of `Γ` mapping the reference circle to itself.
#[derive(Debug, Clone)]
pub struct EquatorStabilizer {
    order: usize,
    members: Vec<StabilizerElement>,
}

impl EquatorStabilizer {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Members sorted by rotation step; step 0 is the identity.
    pub fn members(&self) -> &[StabilizerElement] {
        &self.members
    }

    pub fn contains(&self, index: usize) -> bool {
        self.members.iter().any(|m| m.index == index)
    }
}

/// Finds the stabilizer of `{(cos θ, sin θ, 0, …)}` and checks that it acts on
/// the circle by the rotations `θ ↦ θ + 2πj/m`.
pub fn equator_stabilizer(quotient: &SphereQuotient) -> Result<EquatorStabilizer, GeometryError> {
    let n = quotient.dim();
    let tol = 10.0 * quotient.tol();
    let mut raw = Vec::new();
    for (index, g) in quotient.elements().iter().enumerate() {
        let leaves_plane = (2..=n).any(|r| g[(r, 0)].abs() > tol || g[(r, 1)].abs() > tol);
        if leaves_plane {
            continue;
        }
        if (2..=n).any(|c| g[(0, c)].abs() > tol || g[(1, c)].abs() > tol) {
            return Err(GeometryError::StabilizerNotCyclicRotations {
                index,
                reason: "off-diagonal block does not vanish".into(),
            });
        }
        let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
        if det < 0.0 {
            return Err(GeometryError::StabilizerNotCyclicRotations {
                index,
                reason: "acts on the circle by a reflection".into(),
            });
        }
        let angle = g[(1, 0)].atan2(g[(0, 0)]).rem_euclid(TAU);
        let fiber = g.view((2, 2), (n - 1, n - 1)).into_owned();
        raw.push((index, angle, fiber));
    }

    let m = raw.len();
    let mut members = Vec::with_capacity(m);
    for (index, angle, fiber) in raw {
        let exact = angle * m as f64 / TAU;
        let step = exact.round() as usize % m;
        let err = (exact - exact.round()).abs();
        if err > 1e-6 {
            return Err(GeometryError::StabilizerNotCyclicRotations {
                index,
                reason: format!("rotation angle {angle:.6} is not a multiple of 2π/{m}"),
            });
        }
        if members.iter().any(|s: &StabilizerElement| s.step == step) {
            return Err(GeometryError::StabilizerNotCyclicRotations {
                index,
                reason: format!("rotation step {step} occurs twice"),
            });
        }
        members.push(StabilizerElement { index, step, fiber });
    }
    members.sort_by_key(|s| s.step);
    Ok(EquatorStabilizer { order: m, members })
}

/// Base point on the reference circle together with the cap radius of a
/// neighborhood on which the non-stabilizer summands are negligible.
#[derive(Debug, Clone)]
pub struct BasePoint {
    pub theta: f64,
    pub point: DVector<f64>,
    /// Minimum distance to the excluded circles (`+∞` if there are none).
    pub clearance: f64,
    /// Neighborhood radius: half the clearance, capped at π/4.
    pub radius: f64,
}

/// Picks `x̃₀ ∈ γ̃₀` away from every circle `α⁻¹(γ̃₀)` with `α ∉ Γ₀`.
pub fn choose_base_point_sphere(
    quotient: &SphereQuotient,
    stabilizer: &EquatorStabilizer,
) -> Result<BasePoint, GeometryError> {
    let n = quotient.dim();
    let circles: Vec<GreatCircle> = quotient
        .elements()
        .iter()
        .enumerate()
        .filter(|(i, _)| !stabilizer.contains(*i))
        .map(|(_, g)| {
            let gt = g.transpose();
            GreatCircle {
                u: gt.column(0).into_owned(),
                v: gt.column(1).into_owned(),
            }
        })
        .collect();
    base_point_avoiding(n, &circles, DEFAULT_MAX_TRIALS, quotient.tol())
}

/// Searches angles along the reference circle (Halton base 2, starting at
/// θ = 0) for the point maximizing the distance to `circles`.
pub fn base_point_avoiding(
    n: usize,
    circles: &[GreatCircle],
    max_trials: u64,
    tol: f64,
) -> Result<BasePoint, GeometryError> {
    let point_at = |theta: f64| {
        let mut x = DVector::zeros(n + 1);
        x[0] = theta.cos();
        x[1] = theta.sin();
        x
    };
    if circles.is_empty() {
        return Ok(BasePoint {
            theta: 0.0,
            point: point_at(0.0),
            clearance: f64::INFINITY,
            radius: FRAC_PI_4,
        });
    }
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..max_trials {
        let theta = TAU * radical_inverse(i, 2);
        let x = point_at(theta);
        let d = circles
            .iter()
            .map(|c| c.distance(&x))
            .fold(f64::INFINITY, f64::min);
        if d > best.1 {
            best = (theta, d);
        }
        // The distance between great circles never exceeds π/2.
        if best.1 >= PI / 2.0 - 1e-12 {
            break;
        }
    }
    if best.1 <= tol {
        return Err(GeometryError::NoBasePoint { best: best.1 });
    }
    Ok(BasePoint {
        theta: best.0,
        point: point_at(best.0),
        clearance: best.1,
        radius: (best.1 / 2.0).min(FRAC_PI_4),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn left_mult(q: [f64; 4]) -> DMatrix<f64> {
        let [a, b, c, d] = q;
        DMatrix::from_row_slice(4, 4, &[a, -b, -c, -d, b, a, -d, c, c, d, a, -b, d, -c, b, a])
    }

    #[test]
    fn antipodal_group_on_s2() {
        let g = -DMatrix::<f64>::identity(3, 3);
        let s = SphereQuotient::new(2, &[g], 1e-10).unwrap();
        assert_eq!(s.order(), 2);
        let e = equator_stabilizer(&s).unwrap();
        assert_eq!(e.order(), 2);
        assert_eq!(e.members()[1].step, 1);
    }

    #[test]
    fn quaternion_group_has_order_eight() {
        let s = SphereQuotient::new(4 - 1, &[left_mult([0., 1., 0., 0.]), left_mult([0., 0., 1., 0.])], 1e-10)
            .unwrap();
        assert_eq!(s.order(), 8);
        let e = equator_stabilizer(&s).unwrap();
        assert_eq!(e.order(), 4);
        let bp = choose_base_point_sphere(&s, &e).unwrap();
        assert_eq!(bp.theta, 0.0);
        assert!((bp.clearance - PI / 2.0).abs() < 1e-12);
        assert!((bp.radius - FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn reflection_is_not_free() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, -1.0]));
        assert!(matches!(
            SphereQuotient::new(2, &[g], 1e-10),
            Err(GeometryError::NotFreeAction(_))
        ));
    }

    #[test]
    fn closure_cap_is_enforced() {
        let c = (TAU / 7.0).cos();
        let s = (TAU / 7.0).sin();
        let g = DMatrix::from_row_slice(4, 4, &[c, -s, 0., 0., s, c, 0., 0., 0., 0., c, -s, 0., 0., s, c]);
        assert!(matches!(
            SphereQuotient::with_max_order(3, &[g], 1e-10, 5),
            Err(GeometryError::ClosureNotReached { cap: 5 })
        ));
    }

    #[test]
    fn non_orthogonal_generator_rejected() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 1.0]));
        assert!(matches!(
            SphereQuotient::new(2, &[g], 1e-10),
            Err(GeometryError::NotOrthogonal { index: 0, .. })
        ));
    }

    #[test]
    fn reflected_circle_action_is_rejected() {
        // (x1, x2, x3, x4) -> (x1, -x2, -x3, -x4)... has fixed points, so use
        // a free element acting on the circle by a reflection: swap x1,x2 and
        // rotate the fiber.
        let g = DMatrix::from_row_slice(
            4,
            4,
            &[0., 1., 0., 0., 1., 0., 0., 0., 0., 0., 0., -1., 0., 0., 1., 0.],
        );
        // g has eigenvalue 1 on (1,1,0,0): not free, so the stabilizer check
        // is exercised on a group that skips the freeness test instead.
        assert!(SphereQuotient::new(3, &[g.clone()], 1e-10).is_err());
        let q = SphereQuotient { n: 3, elements: vec![DMatrix::identity(4, 4), g], tol: 1e-10 };
        assert!(matches!(
            equator_stabilizer(&q),
            Err(GeometryError::StabilizerNotCyclicRotations { index: 1, .. })
        ));
    }

    #[test]
    fn crossing_circle_pushes_base_point_away() {
        // Circle through e1 and e3: meets the reference circle at θ = 0, π.
        let mut u = DVector::zeros(3);
        u[0] = 1.0;
        let mut v = DVector::zeros(3);
        v[2] = 1.0;
        let bp = base_point_avoiding(2, &[GreatCircle { u, v }], 10_000, 1e-10).unwrap();
        let from_crossing = bp.theta.sin().abs().asin();
        assert!(from_crossing > 1.0, "θ = {}", bp.theta);
        // Oracle: the distance from (cos θ, sin θ, 0) to the circle is |sin θ| ≤ ... at most π/2.
        assert!((bp.clearance - PI / 2.0).abs() < 1e-3);
    }
}
