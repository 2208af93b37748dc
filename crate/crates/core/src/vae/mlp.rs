//! Dense layers and tanh MLPs with hand-written backpropagation.
//!
//! Weights are stored `in × out` so a batch `X` (rows = samples) maps to
//! `X·W + b`. Every `backward` accumulates into the gradient buffers it is
//! given, which lets one loss run several forward passes through the same
//! network (the anti-jitter objective encodes two poses per pair).

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-limit..limit));
        Self {
            weights,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }

    /// Accumulates parameter gradients for `grad_out = ∂L/∂(xW+b)` and returns `∂L/∂x`.
    pub fn backward(&self, x: &Array2<f64>, grad_out: &Array2<f64>, grad: &mut Dense) -> Array2<f64> {
        grad.weights += &x.t().dot(grad_out);
        grad.bias += &grad_out.sum_axis(Axis(0));
        grad_out.dot(&self.weights.t())
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs(), self.outputs())
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Fully connected network; tanh on every hidden layer, and on the last layer
/// only when `tanh_output` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub tanh_output: bool,
}

/// Layer inputs and (post-activation) outputs from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

impl Mlp {
    pub fn glorot<R: Rng + ?Sized>(sizes: &[usize], tanh_output: bool, rng: &mut R) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], rng))
            .collect();
        Self {
            layers,
            tanh_output,
        }
    }

    pub fn zeros(sizes: &[usize], tanh_output: bool) -> Self {
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self {
            layers,
            tanh_output,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
            tanh_output: self.tanh_output,
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.layers.iter().map(Dense::inputs).collect();
        if let Some(last) = self.layers.last() {
            sizes.push(last.outputs());
        }
        sizes
    }

    fn activated(&self, i: usize) -> bool {
        i + 1 < self.layers.len() || self.tanh_output
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if self.activated(i) {
                h.mapv_inplace(f64::tanh);
            }
        }
        h
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = layer.forward(&h);
            if self.activated(i) {
                out.mapv_inplace(f64::tanh);
            }
            inputs.push(h);
            h = out.clone();
            outputs.push(out);
        }
        (h, MlpCache { inputs, outputs })
    }

    pub fn backward(&self, cache: &MlpCache, grad_out: &Array2<f64>, grad: &mut Mlp) -> Array2<f64> {
        let mut g = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            if self.activated(i) {
                // tanh' = 1 − y²
                ndarray::Zip::from(&mut g)
                    .and(&cache.outputs[i])
                    .for_each(|g, &y| *g *= 1.0 - y * y);
            }
            g = self.layers[i].backward(&cache.inputs[i], &g, &mut grad.layers[i]);
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layer_sizes_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Mlp::glorot(&[8, 128, 96, 64], true, &mut rng);
        assert_eq!(m.layer_sizes(), vec![8, 128, 96, 64]);
    }

    #[test]
    fn zero_network_outputs_bias() {
        let mut m = Mlp::zeros(&[2, 3, 4], false);
        m.layers[1].bias = array![0.5, -1.0, 2.0, 0.0];
        let out = m.forward(&array![[0.3, -0.7], [1.0, 1.0]]);
        for row in out.rows() {
            assert_eq!(row.to_vec(), vec![0.5, -1.0, 2.0, 0.0]);
        }
    }

    #[test]
    fn backward_matches_finite_differences_on_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Mlp::glorot(&[3, 5, 2], false, &mut rng);
        let x = array![[0.1, -0.2, 0.3], [0.5, 0.4, -0.9]];
        let (y, cache) = m.forward_cached(&x);
        let mut grad = m.zeros_like();
        let ones = Array2::ones(y.raw_dim());
        m.backward(&cache, &ones, &mut grad);
        let h = 1e-6;
        for l in 0..m.layers.len() {
            for idx in [(0, 0), (1, 1)] {
                let mut plus = m.clone();
                plus.layers[l].weights[idx] += h;
                let mut minus = m.clone();
                minus.layers[l].weights[idx] -= h;
                let fd = (plus.forward(&x).sum() - minus.forward(&x).sum()) / (2.0 * h);
                assert!((fd - grad.layers[l].weights[idx]).abs() < 1e-7);
            }
        }
    }
}
