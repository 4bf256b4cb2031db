//! Central finite differences, used to cross-check analytic gradients.

use crate::error::Result;

/// Central-difference gradient with step `h = 1e-5 * (1 + |p|)` per
/// coordinate.
pub fn central_difference(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    params: &[f64],
) -> Result<Vec<f64>> {
    let mut p = params.to_vec();
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        let h = 1e-5 * (1.0 + orig.abs());
        p[i] = orig + h;
        let up = f(&p)?;
        p[i] = orig - h;
        let down = f(&p)?;
        p[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Relative error of one component; the denominator is floored at 1e-3 so
/// that components that are zero in exact arithmetic are compared
/// absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-3);
    (analytic - numeric).abs() / denom
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max)
}
