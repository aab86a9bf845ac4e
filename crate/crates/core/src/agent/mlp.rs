//! Dense ReLU network with a hand-written backward pass.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

/// Which backward pass to run. `DropFirstMask` ignores the first hidden
/// layer's ReLU mask and exists only as a negative control for gradient
/// checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackwardPass {
    #[default]
    Exact,
    DropFirstMask,
}

/// Layer `l` stores its `sizes[l+1] × sizes[l]` weights row-major, then its
/// biases; hidden layers use ReLU, the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations from one forward pass; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct Forward {
    acts: Vec<Vec<f64>>,
}

impl Forward {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "bad layer sizes {sizes:?}");
        Self { sizes: sizes.to_vec(), params: vec![0.0; param_count(sizes)] }
    }

    /// Glorot-uniform weights and zero biases; the output layer is scaled by
    /// `out_scale`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], out_scale: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let mut off = 0;
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bound");
            let scale = if l == last { out_scale } else { 1.0 };
            for p in &mut net.params[off..off + w[0] * w[1]] {
                *p = dist.sample(rng) * scale;
            }
            off += w[0] * w[1] + w[1];
        }
        net
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && sizes.iter().all(|&s| s > 0) && params.len() == param_count(&sizes)).then_some(Self { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn forward(&self, x: &[f64]) -> Forward {
        debug_assert_eq!(x.len(), self.sizes[0]);
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        let mut off = 0;
        let n_layers = self.sizes.len() - 1;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let a = &acts[l];
            let mut out: Vec<f64> = (0..n_out).map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>()).collect();
            if l + 1 < n_layers {
                // NaN passes through so broken parameters stay visible
                out.iter_mut().for_each(|v| {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                });
            }
            acts.push(out);
            off += n_in * n_out + n_out;
        }
        Forward { acts }
    }

    /// Adds `∂L/∂params` to `grad`, given `∂L/∂output`.
    pub fn backward(&self, fwd: &Forward, d_out: &[f64], grad: &mut [f64], pass: BackwardPass) {
        debug_assert_eq!(grad.len(), self.params.len());
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let a = &fwd.acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    for (g, ai) in grad[off + o * n_in..off + (o + 1) * n_in].iter_mut().zip(a) {
                        *g += d * ai;
                    }
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wi;
                    }
                }
            }
            let skip_mask = pass == BackwardPass::DropFirstMask && l == 1;
            if !skip_mask {
                for (p, ai) in prev.iter_mut().zip(a) {
                    if *ai <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_matches_hand_computation() {
        // 2 -> 2 -> 1 with weights [[1, -1], [0.5, 2]], biases [0, -1],
        // output weights [3, -2], bias 0.5
        let net = Mlp::from_parts(vec![2, 2, 1], vec![1.0, -1.0, 0.5, 2.0, 0.0, -1.0, 3.0, -2.0, 0.5]).unwrap();
        // x = (2, 1): hidden = relu(1, 2) = (1, 2); out = 3 - 4 + 0.5
        assert_eq!(net.forward(&[2.0, 1.0]).output(), &[-0.5]);
        // x = (0, 1): hidden = relu(-1, 1) = (0, 1); out = -2 + 0.5
        assert_eq!(net.forward(&[0.0, 1.0]).output(), &[-1.5]);
    }

    #[test]
    fn backward_of_a_linear_net_is_the_input() {
        let net = Mlp::from_parts(vec![3, 1], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let f = net.forward(&[1.0, 2.0, 3.0]);
        let mut g = vec![0.0; 4];
        net.backward(&f, &[2.0], &mut g, BackwardPass::Exact);
        assert_eq!(g, vec![2.0, 4.0, 6.0, 2.0]);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Mlp::init(&[9, 64, 64, 3], 0.01, &mut ChaCha8Rng::seed_from_u64(1));
        let b = Mlp::init(&[9, 64, 64, 3], 0.01, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert_eq!(a.params().len(), 9 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3);
        let limit = (6.0f64 / 73.0).sqrt();
        assert!(a.params()[..9 * 64].iter().all(|p| p.abs() <= limit));
    }
}
