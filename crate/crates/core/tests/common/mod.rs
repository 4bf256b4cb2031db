#![allow(dead_code)]

use poam::gp::{Dataset, Hyperparams, NoiseModel};
use poam::kernels::{AkHyper, BaseKernelGrid, WeightNet};
use poam::numkit::fd::{central_difference, max_relative_error};
use poam::numkit::{Matrix, RngStream, Tape, Var};
use poam::Result;
use rand::Rng;

pub fn ak_hyper(num_base: usize, len_min: f64, len_max: f64, alpha: f64, sigma: f64, seed: u64) -> Hyperparams {
    let grid = BaseKernelGrid::new(num_base, len_min, len_max).unwrap();
    let net = WeightNet::default_arch(2, num_base, &mut RngStream::new(seed, "net")).unwrap();
    Hyperparams {
        kernel: AkHyper::new(alpha, grid, net).unwrap(),
        noise: NoiseModel::new(sigma).unwrap(),
    }
}

/// Single Gaussian kernel with lengthscale `ell`.
pub fn rbf_hyper(ell: f64, alpha: f64, sigma: f64) -> Hyperparams {
    let grid = BaseKernelGrid::new(1, ell, ell).unwrap();
    Hyperparams {
        kernel: AkHyper::new(alpha, grid, WeightNet::zeros(&[2, 10, 10, 1])).unwrap(),
        noise: NoiseModel::new(sigma).unwrap(),
    }
}

pub fn uniform_points(n: usize, seed: u64, label: &str) -> Matrix {
    let mut r = RngStream::new(seed, label);
    Matrix::from_fn(n, 2, |_, _| r.random_range(-1.0..1.0))
}

/// Smooth field plus a rough strip on `x > 0.3`, with unit-scale noise.
pub fn field(x: &[f64]) -> f64 {
    let smooth = (1.5 * x[0]).sin() + 0.5 * (x[1]).cos();
    if x[0] > 0.3 {
        smooth + (12.0 * x[0]).sin() * (11.0 * x[1]).cos()
    } else {
        smooth
    }
}

pub fn dataset(n: usize, noise: f64, seed: u64) -> Dataset {
    let x = uniform_points(n, seed, "data-x");
    let mut r = RngStream::new(seed, "data-y");
    let y = (0..n)
        .map(|i| field(x.row(i)) + noise * r.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    Dataset::new(x, y).unwrap()
}

/// Max relative error between tape and finite-difference gradients of an
/// objective of the hyperparameter vector.
pub fn grad_error<F>(h: &Hyperparams, f: F) -> f64
where
    F: Fn(&Tape, Var) -> Result<Var>,
{
    let p0 = h.to_vec();
    let g = poam::numkit::gradient(|t, p| f(t, p), &p0).unwrap();
    let fd = central_difference(
        |q| {
            let t = Tape::new();
            let p = t.constant(Matrix::column(q.to_vec()));
            Ok(t.scalar(f(&t, p)?))
        },
        &p0,
    )
    .unwrap();
    max_relative_error(&g, &fd)
}
