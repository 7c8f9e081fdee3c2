//! Deterministic low-discrepancy sequences for candidate searches.

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Van der Corput radical inverse of `index` in `base`, in `[0, 1)`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

/// The `index`-th point of the Halton sequence in `[0, 1)^dim`.
///
/// Index 0 is the origin, which the candidate searches rely on: the first
/// candidate is always the unperturbed choice.
pub fn halton_point(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "Halton sequence supports up to {} dims", PRIMES.len());
    PRIMES[..dim].iter().map(|&b| radical_inverse(index, b)).collect()
}

/// Maps a Halton point into the closed ball of radius `radius` in `dim`
/// dimensions, with index 0 mapped to the center.
///
/// Uses the cube `[-1, 1)^dim` shifted so that 0 maps to 0, rejecting points
/// outside the unit ball; returns `None` for rejected indices.
pub fn halton_ball_point(index: u64, dim: usize, radius: f64) -> Option<Vec<f64>> {
    let u = halton_point(index, dim);
    let p: Vec<f64> = u
        .iter()
        .map(|&t| if t < 0.5 { 2.0 * t } else { 2.0 * t - 2.0 })
        .collect();
    let norm2: f64 = p.iter().map(|x| x * x).sum();
    if norm2 > 1.0 {
        return None;
    }
    Some(p.into_iter().map(|x| x * radius).collect())
}
