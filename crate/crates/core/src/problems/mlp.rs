use super::Problem;
use crate::error::{contract, Result};
use crate::numerics::{purpose, RngStream};

/// Fully connected tanh network with a softmax cross-entropy head, trained on
/// Gaussian class clusters. Parameters are packed layer by layer as the
/// row-major weight matrix followed by the bias.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<usize>,
    n: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
    seed: u64,
}

/// Upper bound on the packed parameter count.
pub const MAX_PARAMS: usize = 100_000;

impl Mlp {
    /// `layers` lists the input width, the hidden widths and the class count.
    pub fn make(layers: &[usize], n: usize, seed: u64) -> Result<Self> {
        if layers.len() < 2 || layers.iter().any(|&w| w == 0) || layers[layers.len() - 1] < 2 || n == 0 {
            return Err(contract("mlp needs positive widths, at least two classes and one sample"));
        }
        let params = Self::count_params(layers);
        if params > MAX_PARAMS {
            return Err(contract(format!("mlp has {params} parameters, limit is {MAX_PARAMS}")));
        }
        let (input, classes) = (layers[0], layers[layers.len() - 1]);
        let mut rng = RngStream::new(seed, purpose::stream(purpose::PROBLEM, 2));
        let centers: Vec<f64> = (0..classes * input).map(|_| rng.next_gaussian()).collect();
        let mut inputs = Vec::with_capacity(n * input);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % classes;
            labels.push(c);
            for j in 0..input {
                inputs.push(centers[c * input + j] + 0.7 * rng.next_gaussian());
            }
        }
        Ok(Self {
            layers: layers.to_vec(),
            n,
            inputs,
            labels,
            seed,
        })
    }

    fn count_params(layers: &[usize]) -> usize {
        layers.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Activations per layer, the last entry holding the logits.
    fn forward(&self, x: &[f64], input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![input.to_vec()];
        let mut off = 0;
        let last = self.layers.len() - 2;
        for (l, w) in self.layers.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &x[off..off + fan_in * fan_out];
            let bias = &x[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            off += fan_in * fan_out + fan_out;
            let prev = &acts[l];
            let next: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let z = bias[o] + weights[o * fan_in..(o + 1) * fan_in].iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
                    if l < last {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(next);
        }
        acts
    }

    /// `(log-softmax normalizer, probabilities)` for the logits.
    fn softmax(logits: &[f64]) -> (f64, Vec<f64>) {
        let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = logits.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        (lse, logits.iter().map(|v| (v - lse).exp()).collect())
    }

    fn sample_loss(&self, x: &[f64], i: usize) -> f64 {
        let acts = self.forward(x, self.input(i));
        let logits = acts.last().unwrap();
        Self::softmax(logits).0 - logits[self.labels[i]]
    }

    fn input(&self, i: usize) -> &[f64] {
        let w = self.layers[0];
        &self.inputs[i * w..(i + 1) * w]
    }

    fn backprop(&self, x: &[f64], i: usize, scale: f64, g: &mut [f64]) {
        let acts = self.forward(x, self.input(i));
        let (_, mut delta) = Self::softmax(acts.last().unwrap());
        delta[self.labels[i]] -= 1.0;
        let mut offsets = Vec::with_capacity(self.layers.len() - 1);
        let mut off = 0;
        for w in self.layers.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        for l in (0..self.layers.len() - 1).rev() {
            let (fan_in, fan_out) = (self.layers[l], self.layers[l + 1]);
            let off = offsets[l];
            let prev = &acts[l];
            for o in 0..fan_out {
                let dz = scale * delta[o];
                for (gi, a) in g[off + o * fan_in..off + (o + 1) * fan_in].iter_mut().zip(prev) {
                    *gi += dz * a;
                }
                g[off + fan_in * fan_out + o] += dz;
            }
            if l > 0 {
                let weights = &x[off..off + fan_in * fan_out];
                delta = (0..fan_in)
                    .map(|j| {
                        let back: f64 = (0..fan_out).map(|o| weights[o * fan_in + j] * delta[o]).sum();
                        // prev = tanh(z), so dtanh = 1 - prev^2
                        back * (1.0 - prev[j] * prev[j])
                    })
                    .collect();
            }
        }
    }
}

impl Problem for Mlp {
    fn dim(&self) -> usize {
        Self::count_params(&self.layers)
    }

    fn samples(&self) -> usize {
        self.n
    }

    fn loss(&self, x: &[f64]) -> f64 {
        (0..self.n).map(|i| self.sample_loss(x, i)).sum::<f64>() / self.n as f64
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.n).collect();
        self.batch_gradient(x, &all)
    }

    fn batch_gradient(&self, x: &[f64], batch: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        let scale = 1.0 / batch.len() as f64;
        for &i in batch {
            self.backprop(x, i, scale, &mut g);
        }
        g
    }

    /// Training accuracy.
    fn eval_metric(&self, x: &[f64]) -> Option<f64> {
        let correct = (0..self.n)
            .filter(|&i| {
                let acts = self.forward(x, self.input(i));
                let logits = acts.last().unwrap();
                let best = (0..logits.len()).fold(0, |b, c| if logits[c] > logits[b] { c } else { b });
                best == self.labels[i]
            })
            .count();
        Some(correct as f64 / self.n as f64)
    }

    /// Weights N(0, 1/fan_in), zero biases.
    fn initial_point(&self, _rng: &mut RngStream) -> Vec<f64> {
        // Tied to the problem seed so every worker starts from the same point.
        let mut rng = RngStream::new(self.seed, purpose::stream(purpose::INIT, 0));
        let mut x = Vec::with_capacity(self.dim());
        for w in self.layers.windows(2) {
            let sd = 1.0 / (w[0] as f64).sqrt();
            x.extend((0..w[0] * w[1]).map(|_| sd * rng.next_gaussian()));
            x.extend(std::iter::repeat(0.0).take(w[1]));
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::finite_diff_check;

    #[test]
    fn gradient_matches_finite_differences() {
        let p = Mlp::make(&[8, 12, 10, 3], 30, 4).unwrap();
        let x = p.initial_point(&mut RngStream::new(0, 0));
        let mut rng = RngStream::new(7, 7);
        let coords: Vec<usize> = (0..100).map(|_| rng.next_below(p.dim() as u64) as usize).collect();
        assert!(finite_diff_check(&p, &x, &coords, 1e-4) < 1e-5);
    }

    #[test]
    fn loss_is_nonnegative() {
        let p = Mlp::make(&[4, 6, 6, 3], 20, 1).unwrap();
        let x = p.initial_point(&mut RngStream::new(0, 0));
        assert!(p.loss(&x) >= 0.0);
        assert_eq!(p.dim(), 4 * 6 + 6 + 6 * 6 + 6 + 6 * 3 + 3);
    }

    #[test]
    fn parameter_limit() {
        assert!(Mlp::make(&[1000, 200, 10], 10, 1).is_err());
    }
}
