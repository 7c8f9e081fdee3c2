//! Compensated summation with a fixed traversal order.
//!
//! Every reduction in this crate goes through these accumulators so that a
//! result never depends on how work was split between threads.

use num_complex::Complex64;

/// Kahan-Babuska (Neumaier) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.comp += (self.sum - t) + value;
        } else {
            self.comp += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Complex counterpart of [`NeumaierSum`], compensating both parts.
#[derive(Debug, Clone, Copy, Default)]
pub struct ComplexSum {
    re: NeumaierSum,
    im: NeumaierSum,
}

impl ComplexSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    #[inline]
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Compensated sum of a slice in index order.
pub fn compensated_sum(values: &[f64]) -> f64 {
    values.iter().copied().collect::<NeumaierSum>().value()
}

/// Pairwise reduction over fixed-size blocks, each block summed with
/// compensation. The block boundaries depend only on the slice length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 128;
    if values.len() <= BLOCK {
        return compensated_sum(values);
    }
    let mid = (values.len() / BLOCK / 2).max(1) * BLOCK;
    let (lo, hi) = values.split_at(mid);
    let mut acc = NeumaierSum::new();
    acc.add(pairwise_sum(lo));
    acc.add(pairwise_sum(hi));
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_cancelled_mass() {
        let values = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(&values), 2.0);
        let naive: f64 = values.iter().sum();
        assert_eq!(naive, 0.0);
    }

    #[test]
    fn pairwise_matches_exact_integer_sum() {
        let values: Vec<f64> = (0..10_000).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&values), 0.5 * (9_999.0 * 10_000.0 / 2.0));
    }

    #[test]
    fn complex_sum_is_componentwise() {
        let mut acc = ComplexSum::new();
        acc.add(Complex64::new(1e16, -1.0));
        acc.add(Complex64::new(1.0, 1e16));
        acc.add(Complex64::new(-1e16, -1e16));
        assert_eq!(acc.value(), Complex64::new(1.0, -1.0));
    }
}
