//! Minimal dense feed-forward network used by the autoregressive and
//! lagged-regressor blocks: ReLU on hidden layers, linear single output,
//! hand-written forward/backward passes.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// Row-major: `weights[out][in]`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Per-layer activations retained for the backward pass.
pub struct MlpCache {
    /// `activations[0]` is the input; `activations[i + 1]` the output of
    /// layer `i` after its nonlinearity.
    activations: Vec<Vec<f64>>,
}

/// Gradient accumulator with the same shape as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// All-zero parameters; `sizes` runs input to output, output size 1.
    pub fn zeroed(sizes: &[usize]) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| DenseLayer {
                weights: vec![vec![0.0; w[0]]; w[1]],
                biases: vec![0.0; w[1]],
            })
            .collect();
        Self { layers }
    }

    /// Uniform init in +-sqrt(6 / (fan_in + fan_out)), biases zero.
    pub fn glorot<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                DenseLayer {
                    weights: (0..fan_out)
                        .map(|_| (0..fan_in).map(|_| rng.gen_range(-limit..limit)).collect())
                        .collect(),
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weights[0].len())
    }

    pub fn is_linear(&self) -> bool {
        self.layers.len() == 1
    }

    pub fn forward(&self, input: &[f64]) -> f64 {
        self.forward_cached(input).0
    }

    pub fn forward_cached(&self, input: &[f64]) -> (f64, MlpCache) {
        let mut activations = vec![input.to_vec()];
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let prev = activations.last().unwrap();
            let mut out = Vec::with_capacity(layer.biases.len());
            for (row, bias) in layer.weights.iter().zip(&layer.biases) {
                let mut z = *bias;
                for (w, x) in row.iter().zip(prev) {
                    z += w * x;
                }
                out.push(if idx < last { z.max(0.0) } else { z });
            }
            activations.push(out);
        }
        let value = activations.last().unwrap()[0];
        (value, MlpCache { activations })
    }

    /// Accumulate parameter gradients for `upstream = dL/d output` into
    /// `grad`; optionally also the gradient with respect to the input.
    pub fn backward(
        &self,
        cache: &MlpCache,
        upstream: f64,
        grad: &mut MlpGrad,
        mut input_grad: Option<&mut [f64]>,
    ) {
        let mut delta = vec![upstream];
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let prev_act = &cache.activations[idx];
            for (o, d) in delta.iter().enumerate() {
                grad.biases[idx][o] += d;
                for (i, x) in prev_act.iter().enumerate() {
                    grad.weights[idx][o][i] += d * x;
                }
            }
            let need_input = idx > 0 || input_grad.is_some();
            if !need_input {
                break;
            }
            let mut upstream_prev = vec![0.0; prev_act.len()];
            for (o, d) in delta.iter().enumerate() {
                for (i, w) in layer.weights[o].iter().enumerate() {
                    upstream_prev[i] += d * w;
                }
            }
            if idx > 0 {
                // ReLU mask: the cached activation of the hidden layer is
                // already rectified, so positive means the unit was live.
                for (g, a) in upstream_prev.iter_mut().zip(prev_act) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
                delta = upstream_prev;
            } else if let Some(slot) = input_grad.as_deref_mut() {
                slot.copy_from_slice(&upstream_prev);
            }
        }
    }

    pub fn grad_zeroed(&self) -> MlpGrad {
        MlpGrad {
            weights: self
                .layers
                .iter()
                .map(|l| l.weights.iter().map(|r| vec![0.0; r.len()]).collect())
                .collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }
}
