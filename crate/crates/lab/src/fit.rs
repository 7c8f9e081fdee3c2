//! Critical exponents and log-log power-law fits.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("q = {0} must exceed 2")]
    QOutOfRange(f64),
    #[error("dimension {0} must be at least 2")]
    DimensionOutOfRange(usize),
    #[error("{got} points, at least {MIN_POINTS} needed")]
    TooFewPoints { got: usize },
    #[error("point {index}: non-positive or non-finite value ({x}, {y})")]
    NonPositiveValue { index: usize, x: f64, y: f64 },
    #[error("max log residual {max_residual:.3} exceeds {MAX_RESIDUAL}")]
    PoorFit { max_residual: f64, slope: f64 },
}

pub const MIN_POINTS: usize = 5;
pub const MAX_RESIDUAL: f64 = 0.2;

/// `(q_c, μ(q))` with `q_c = 2(n+1)/(n−1)`.
pub fn critical_exponents(n: usize, q: f64) -> Result<(f64, f64), FitError> {
    if n < 2 {
        return Err(FitError::DimensionOutOfRange(n));
    }
    if !(q > 2.0) {
        return Err(FitError::QOutOfRange(q));
    }
    let nf = n as f64;
    let qc = 2.0 * (nf + 1.0) / (nf - 1.0);
    let mu = if q > qc { nf * (0.5 - 1.0 / q) - 0.5 } else { (nf - 1.0) / 2.0 * (0.5 - 1.0 / q) };
    Ok((qc, mu))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Largest `|log y − (intercept + exponent·log x)|`.
    pub max_residual: f64,
    pub samples: usize,
    /// Largest change of the exponent when one point is dropped.
    pub loo_shift: f64,
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Slope of `log y` against `log x`.
pub fn fit_exponent(pairs: &[(f64, f64)]) -> Result<ScalingFit, FitError> {
    if pairs.len() < MIN_POINTS {
        return Err(FitError::TooFewPoints { got: pairs.len() });
    }
    if let Some((index, &(x, y))) =
        pairs.iter().enumerate().find(|(_, &(x, y))| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()))
    {
        return Err(FitError::NonPositiveValue { index, x, y });
    }
    let logs: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let (slope, intercept) = least_squares(&logs);
    let max_residual = logs.iter().map(|&(u, v)| (v - intercept - slope * u).abs()).fold(0.0, f64::max);
    if max_residual >= MAX_RESIDUAL {
        return Err(FitError::PoorFit { max_residual, slope });
    }
    let mut loo_shift = 0.0f64;
    if logs.len() > 2 {
        for skip in 0..logs.len() {
            let rest: Vec<(f64, f64)> =
                logs.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, p)| *p).collect();
            loo_shift = loo_shift.max((least_squares(&rest).0 - slope).abs());
        }
    }
    Ok(ScalingFit { exponent: slope, intercept, max_residual, samples: pairs.len(), loo_shift })
}
