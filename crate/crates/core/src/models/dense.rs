//! Fully connected rectifier networks over a flat parameter vector.

use rand::Rng;

use super::params::Params;

/// Layer structure of an MLP whose weights live in a [`Params`] store.
///
/// Hidden layers use ReLU; the output layer is affine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseNet {
    dims: Vec<usize>,
    /// (weight offset, bias offset) per layer; weights are `[out, in]` row-major.
    offsets: Vec<(usize, usize)>,
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    /// Input of each layer (post-activation of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
}

impl DenseNet {
    /// Registers `prefix.l{i}.weight` / `.bias` with fan-in uniform init.
    pub fn register<R: Rng>(params: &mut Params, prefix: &str, dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2 && dims.iter().all(|&d| d > 0));
        let mut offsets = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let wo = params.push_uniform(format!("{prefix}.l{i}.weight"), &[fan_out, fan_in], bound, rng);
            let bo = params.push(format!("{prefix}.l{i}.bias"), &[fan_out], || 0.0);
            offsets.push((wo, bo));
        }
        Self {
            dims: dims.to_vec(),
            offsets,
        }
    }

    /// Rebinds to an existing layout (e.g. after loading a checkpoint).
    pub fn bind(params: &Params, prefix: &str, dims: &[usize]) -> Option<Self> {
        let mut offsets = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            let we = params.entry(&format!("{prefix}.l{i}.weight"))?;
            let be = params.entry(&format!("{prefix}.l{i}.bias"))?;
            if we.shape != [w[1], w[0]] || be.shape != [w[1]] {
                return None;
            }
            offsets.push((we.offset, be.offset));
        }
        Some(Self {
            dims: dims.to_vec(),
            offsets,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn parameter_count(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn layers(&self) -> usize {
        self.offsets.len()
    }

    /// Sets the last layer's weights and bias to zero.
    pub fn zero_output_layer(&self, params: &mut [f64]) {
        let last = self.layers() - 1;
        let (wo, bo) = self.offsets[last];
        let (i, o) = (self.dims[last], self.dims[last + 1]);
        params[wo..wo + i * o].fill(0.0);
        params[bo..bo + o].fill(0.0);
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        self.run(params, input, None)
    }

    pub fn forward_taped(&self, params: &[f64], input: &[f64], tape: &mut Tape) -> Vec<f64> {
        tape.inputs.clear();
        tape.pre.clear();
        self.run(params, input, Some(tape))
    }

    fn run(&self, params: &[f64], input: &[f64], mut tape: Option<&mut Tape>) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.dims[0]);
        let mut x = input.to_vec();
        for l in 0..self.layers() {
            let (wo, bo) = self.offsets[l];
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let w = &params[wo..wo + n_in * n_out];
            let b = &params[bo..bo + n_out];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    b[o] + row.iter().zip(&x).map(|(a, c)| a * c).sum::<f64>()
                })
                .collect();
            let last = l + 1 == self.layers();
            let next = if last { z.clone() } else { z.iter().map(|v| v.max(0.0)).collect() };
            if let Some(t) = tape.as_deref_mut() {
                t.inputs.push(std::mem::take(&mut x));
                t.pre.push(z);
            }
            x = next;
        }
        x
    }

    /// Accumulates parameter gradients into `grad` for upstream `d_out`;
    /// returns the gradient with respect to the input.
    pub fn backward(&self, params: &[f64], tape: &Tape, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let mut delta = d_out.to_vec();
        for l in (0..self.layers()).rev() {
            let (wo, bo) = self.offsets[l];
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            if l + 1 != self.layers() {
                for (d, z) in delta.iter_mut().zip(&tape.pre[l]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let x = &tape.inputs[l];
            let w = &params[wo..wo + n_in * n_out];
            let mut d_in = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grad[bo + o] += d;
                let row = o * n_in;
                for i in 0..n_in {
                    grad[wo + row + i] += d * x[i];
                    d_in[i] += d * w[row + i];
                }
            }
            delta = d_in;
        }
        delta
    }
}
