//! Pilot survey paths.

use super::env::Extent;
use crate::numkit::RngStream;

/// Evaluates the Bezier curve with the given control points at `t` in [0, 1]
/// by de Casteljau's algorithm.
pub fn de_casteljau(points: &[[f64; 2]], t: f64) -> [f64; 2] {
    let mut work = points.to_vec();
    for level in (1..work.len()).rev() {
        for i in 0..level {
            let (a, b) = (work[i], work[i + 1]);
            work[i] = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        }
    }
    work[0]
}

/// Control points zig-zagging west to east between the southern and northern
/// edges, inset by 5% of the extent.
pub fn zigzag_controls(count: usize, extent: &Extent) -> Vec<[f64; 2]> {
    let inset = 0.05;
    (0..count)
        .map(|i| {
            let u = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.5 };
            let v = if i % 2 == 0 { inset } else { 1.0 - inset };
            [
                extent.x_min + extent.width() * (inset + (1.0 - 2.0 * inset) * u),
                extent.y_min + extent.height() * v,
            ]
        })
        .collect()
}

/// `samples` points of the pilot Bezier curve at uniform parameter values.
pub fn bezier_pilot(control_count: usize, extent: &Extent, samples: usize) -> Vec<[f64; 2]> {
    assert!(control_count >= 2, "a Bezier pilot needs at least two control points");
    let controls = zigzag_controls(control_count, extent);
    bezier_points(&controls, samples)
}

pub fn bezier_points(controls: &[[f64; 2]], samples: usize) -> Vec<[f64; 2]> {
    match samples {
        0 => Vec::new(),
        1 => vec![de_casteljau(controls, 0.0)],
        n => (0..n).map(|i| de_casteljau(controls, i as f64 / (n - 1) as f64)).collect(),
    }
}

/// Uniform random points in the extent.
pub fn random_pilot(extent: &Extent, count: usize, rng: &mut RngStream) -> Vec<[f64; 2]> {
    (0..count).map(|_| extent.sample(rng)).collect()
}
