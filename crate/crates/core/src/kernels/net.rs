//! Small fully connected network producing per-input mixture weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::tape::sigmoid;
use crate::numkit::{Matrix, RngStream};

/// Multilayer perceptron with tanh hidden layers and a logistic output.
///
/// Parameters are stored flat, layer by layer: the `out x in` weight matrix
/// in row-major order followed by the `out` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightNet {
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Post-activation values of every layer, input first.
pub struct NetTrace {
    pub activations: Vec<Matrix>,
}

impl NetTrace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("at least the input layer")
    }
}

pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl WeightNet {
    /// Xavier-uniform weights and zero biases.
    pub fn init(layer_sizes: &[usize], rng: &mut RngStream) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "weight network layer sizes {layer_sizes:?}"
            )));
        }
        let mut params = Vec::with_capacity(param_count(layer_sizes));
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-bound..bound));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(WeightNet {
            layer_sizes: layer_sizes.to_vec(),
            params,
        })
    }

    /// Default `D -> 10 -> 10 -> M` architecture.
    pub fn default_arch(input_dim: usize, outputs: usize, rng: &mut RngStream) -> Result<Self> {
        WeightNet::init(&[input_dim, 10, 10, outputs], rng)
    }

    pub fn with_params(layer_sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        if layer_sizes.len() < 2 || param_count(layer_sizes) != params.len() {
            return Err(Error::Shape(format!(
                "{} parameters for layer sizes {layer_sizes:?}",
                params.len()
            )));
        }
        Ok(WeightNet {
            layer_sizes: layer_sizes.to_vec(),
            params,
        })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Self {
        WeightNet {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; param_count(layer_sizes)],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        forward_with(&self.layer_sizes, &self.params, x)
            .activations
            .pop()
            .unwrap()
    }
}

/// Forward pass keeping every activation, for use in [`backward_with`].
pub fn forward_with(layer_sizes: &[usize], params: &[f64], x: &Matrix) -> NetTrace {
    assert_eq!(x.cols(), layer_sizes[0], "network input dimension");
    let n = x.rows();
    let last = layer_sizes.len() - 2;
    let mut acts = vec![x.clone()];
    let mut off = 0;
    for (l, w) in layer_sizes.windows(2).enumerate() {
        let (din, dout) = (w[0], w[1]);
        let weights = &params[off..off + din * dout];
        let bias = &params[off + din * dout..off + din * dout + dout];
        off += din * dout + dout;
        let h = acts.last().unwrap();
        let mut out = Matrix::zeros(n, dout);
        for i in 0..n {
            let hi = h.row(i);
            let oi = out.row_mut(i);
            for o in 0..dout {
                let wr = &weights[o * din..(o + 1) * din];
                let z = bias[o] + hi.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
                oi[o] = if l == last { sigmoid(z) } else { z.tanh() };
            }
        }
        acts.push(out);
    }
    NetTrace { activations: acts }
}

/// Pulls `gout` (gradient wrt the network output) back to the parameters
/// and, if `want_input`, to the inputs.
pub fn backward_with(
    layer_sizes: &[usize],
    params: &[f64],
    trace: &NetTrace,
    gout: &Matrix,
    want_input: bool,
) -> (Vec<f64>, Option<Matrix>) {
    let nl = layer_sizes.len() - 1;
    let mut gtheta = vec![0.0; params.len()];
    let mut offsets = Vec::with_capacity(nl);
    let mut off = 0;
    for w in layer_sizes.windows(2) {
        offsets.push(off);
        off += w[0] * w[1] + w[1];
    }
    let mut g = gout.clone();
    for l in (0..nl).rev() {
        let (din, dout) = (layer_sizes[l], layer_sizes[l + 1]);
        let post = &trace.activations[l + 1];
        let h = &trace.activations[l];
        // through the activation
        let gpre = if l == nl - 1 {
            g.zip_map(post, |gv, y| gv * y * (1.0 - y))
        } else {
            g.zip_map(post, |gv, y| gv * (1.0 - y * y))
        };
        let o = offsets[l];
        let weights = &params[o..o + din * dout];
        {
            let (gw, gb) = gtheta[o..o + din * dout + dout].split_at_mut(din * dout);
            for i in 0..gpre.rows() {
                let gi = gpre.row(i);
                let hi = h.row(i);
                for k in 0..dout {
                    let gk = gi[k];
                    if gk == 0.0 {
                        continue;
                    }
                    gb[k] += gk;
                    for (gwv, hv) in gw[k * din..(k + 1) * din].iter_mut().zip(hi) {
                        *gwv += gk * hv;
                    }
                }
            }
        }
        if l == 0 && !want_input {
            return (gtheta, None);
        }
        let mut gh = Matrix::zeros(gpre.rows(), din);
        for i in 0..gpre.rows() {
            let gi = gpre.row(i);
            let ghi = gh.row_mut(i);
            for k in 0..dout {
                let gk = gi[k];
                for (a, wv) in ghi.iter_mut().zip(&weights[k * din..(k + 1) * din]) {
                    *a += gk * wv;
                }
            }
        }
        g = gh;
    }
    (gtheta, Some(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::fd::{central_difference, max_relative_error};

    #[test]
    fn param_layout() {
        assert_eq!(param_count(&[2, 10, 10, 10]), 30 + 110 + 110);
        let net = WeightNet::default_arch(2, 10, &mut RngStream::new(1, "net")).unwrap();
        assert_eq!(net.num_params(), 250);
        // biases start at zero
        assert!(net.params[20..30].iter().all(|b| *b == 0.0));
    }

    #[test]
    fn init_is_seeded() {
        let a = WeightNet::default_arch(2, 4, &mut RngStream::new(9, "net")).unwrap();
        let b = WeightNet::default_arch(2, 4, &mut RngStream::new(9, "net")).unwrap();
        let c = WeightNet::default_arch(2, 4, &mut RngStream::new(10, "net")).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let sizes = [2, 3, 4, 3];
        let net = WeightNet::init(&sizes, &mut RngStream::new(4, "net")).unwrap();
        let x = Matrix::from_rows(&[vec![0.3, -0.7], vec![-0.2, 0.9]]);
        let gout = Matrix::from_fn(2, 3, |i, j| 0.5 + i as f64 - 0.3 * j as f64);
        let f = |p: &[f64], x: &Matrix| forward_with(&sizes, p, x).output().hadamard(&gout).sum();
        let tr = forward_with(&sizes, &net.params, &x);
        let (gt, gx) = backward_with(&sizes, &net.params, &tr, &gout, true);
        let fd = central_difference(|p| Ok(f(p, &x)), &net.params).unwrap();
        assert!(max_relative_error(&gt, &fd) < 1e-6);
        let fdx = central_difference(
            |v| Ok(f(&net.params, &Matrix::from_vec(2, 2, v.to_vec()).unwrap())),
            x.as_slice(),
        )
        .unwrap();
        assert!(max_relative_error(gx.unwrap().as_slice(), &fdx) < 1e-6);
    }
}
