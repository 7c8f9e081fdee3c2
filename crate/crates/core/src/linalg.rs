//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `‖mᵀm − I‖_∞` (entrywise max).
pub fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    max_abs_diff(&(m.transpose() * m), &DMatrix::identity(n, n))
}

/// Rounds `m` to the nearest integer matrix when every entry is within
/// `tol` of an integer.
pub fn round_to_integer(m: &DMatrix<f64>, tol: f64) -> Option<DMatrix<i64>> {
    let mut out = DMatrix::<i64>::zeros(m.nrows(), m.ncols());
    for (o, &x) in out.iter_mut().zip(m.iter()) {
        let r = x.round();
        if (x - r).abs() > tol {
            return None;
        }
        *o = r as i64;
    }
    Some(out)
}

pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Ratio of extreme singular values; infinite for singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let min = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Orthonormal basis (as columns) of the orthogonal complement of the unit
/// vector `u`.
pub fn orthonormal_complement(u: &DVector<f64>) -> DMatrix<f64> {
    let n = u.len();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    for i in 0..n {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v -= u * u.dot(&v);
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
        if basis.len() == n - 1 {
            break;
        }
    }
    DMatrix::from_columns(&basis)
}

pub fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_is_orthonormal() {
        let u = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        let c = orthonormal_complement(&u);
        assert_eq!(c.ncols(), 2);
        assert!(orthogonality_defect(&c) < 1e-14);
        assert!((c.transpose() * &u).norm() < 1e-14);
    }

    #[test]
    fn integer_rounding_respects_tolerance() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0 + 1e-12, 0.0, -2.0, 3.0]);
        assert!(round_to_integer(&m, 1e-8).is_some());
        let m = DMatrix::from_row_slice(1, 1, &[0.5]);
        assert!(round_to_integer(&m, 1e-8).is_none());
    }
}
