//! Dense networks with hand-written backpropagation.
//!
//! [`MlpClassifier`] is `affine → relu → … → affine → softmax`. It serves as
//! the domain classifier, the domain discriminator and the task head.

use rand::Rng;

use crate::error::{Error, Result};
use crate::label::{cross_entropy, softmax};

/// `y = W x + b` with `W` stored `out × in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = (0..in_dim * out_dim).map(|_| rng.random_range(-bound..bound)).collect();
        Dense {
            in_dim,
            out_dim,
            weight,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::param("dense layer buffers do not match dimensions"));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::param("non-finite layer parameter"));
        }
        Ok(Dense {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Accumulate parameter gradients for one sample and return `∂L/∂x`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut DenseGrad) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_dim];
        for (o, &g) in dy.iter().enumerate() {
            grad.bias[o] += g;
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad.weight[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(&self.bias)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }

    pub fn sgd_step(&mut self, grad: &DenseGrad, lr: f64, scale: f64) {
        for (p, g) in self.params_mut().zip(grad.weight.iter().chain(&grad.bias)) {
            *p -= lr * scale * g;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseGrad {
    pub fn zeros_like(layer: &Dense) -> Self {
        DenseGrad {
            weight: vec![0.0; layer.weight.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.weight.iter().chain(&self.bias).copied().collect()
    }

    pub fn clear(&mut self) {
        self.weight
            .iter_mut()
            .chain(self.bias.iter_mut())
            .for_each(|g| *g = 0.0);
    }
}

/// Softmax classifier with rectifier hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    layers: Vec<Dense>,
}

/// Values saved by [`MlpClassifier::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer (`inputs[0]` is the network input).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of every hidden layer.
    pre: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl ForwardCache {
    pub fn hidden_preactivations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

impl MlpClassifier {
    /// Network with layer widths `sizes` (input first, classes last).
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        check_sizes(sizes)?;
        Ok(MlpClassifier {
            layers: sizes.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect(),
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        Ok(MlpClassifier {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::param("network needs at least one layer"));
        }
        if layers.windows(2).any(|w| w[0].out_dim() != w[1].in_dim()) {
            return Err(Error::param("consecutive layer widths do not chain"));
        }
        Ok(MlpClassifier { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::out_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_dim() {
            return Err(Error::param(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h);
            inputs.push(std::mem::take(&mut h));
            if i == last {
                h = z;
            } else {
                h = z.iter().map(|&v| v.max(0.0)).collect();
                pre.push(z);
            }
        }
        Ok(ForwardCache {
            inputs,
            pre,
            probs: softmax(&h),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.probs)
    }

    /// Backpropagate `∂L/∂logits`, accumulating into `grads` and returning
    /// `∂L/∂input`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64], grads: &mut MlpGrad) -> Vec<f64> {
        let mut delta = dlogits.to_vec();
        for i in (0..self.layers.len()).rev() {
            let dx = self.layers[i].backward(&cache.inputs[i], &delta, &mut grads.layers[i]);
            delta = if i == 0 {
                dx
            } else {
                dx.iter()
                    .zip(&cache.pre[i - 1])
                    .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
                    .collect()
            };
        }
        delta
    }

    /// Cross-entropy of the prediction against a (soft) target, with
    /// gradients accumulated into `grads`. Returns `(loss, ∂L/∂input)`.
    pub fn loss_and_backward(
        &self,
        x: &[f64],
        target: &[f64],
        grads: &mut MlpGrad,
    ) -> Result<(f64, Vec<f64>, ForwardCache)> {
        let cache = self.forward(x)?;
        let loss = cross_entropy(&cache.probs, target)?;
        let dlogits = softmax_ce_grad(&cache.probs, target);
        let dx = self.backward(&cache, &dlogits, grads);
        Ok((loss, dx, cache))
    }

    pub fn grad_zeros(&self) -> MlpGrad {
        MlpGrad {
            layers: self.layers.iter().map(DenseGrad::zeros_like).collect(),
        }
    }

    /// `θ ← θ − lr · scale · g`.
    pub fn sgd_step(&mut self, grads: &MlpGrad, lr: f64, scale: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.sgd_step(g, lr, scale);
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::param("flat parameter vector has wrong length"));
        }
        let mut it = flat.iter();
        for layer in &mut self.layers {
            for p in layer.params_mut() {
                *p = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// Permute the output classes: new class `j` is old class `perm[j]`.
    pub fn permute_outputs(&mut self, perm: &[usize]) -> Result<()> {
        let k = self.output_dim();
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::param("not a permutation of the output classes"));
        }
        let last = self.layers.last_mut().expect("non-empty");
        let n = last.in_dim();
        let (w, b) = (last.weight.clone(), last.bias.clone());
        for (j, &p) in perm.iter().enumerate() {
            last.weight[j * n..(j + 1) * n].copy_from_slice(&w[p * n..(p + 1) * n]);
            last.bias[j] = b[p];
        }
        Ok(())
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::param(format!("invalid layer sizes {sizes:?}")));
    }
    Ok(())
}

/// `∂ CE(softmax(z), t) / ∂z = p · Σt − t`.
pub fn softmax_ce_grad(probs: &[f64], target: &[f64]) -> Vec<f64> {
    let mass: f64 = target.iter().sum();
    probs.iter().zip(target).map(|(p, t)| p * mass - t).collect()
}

/// Gradient buffers shaped like an [`MlpClassifier`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub layers: Vec<DenseGrad>,
}

impl MlpGrad {
    pub fn clear(&mut self) {
        self.layers.iter_mut().for_each(DenseGrad::clear);
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(DenseGrad::flat).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_is_uniform() {
        let m = MlpClassifier::zeros(&[3, 5, 4]).unwrap();
        assert_eq!(m.predict(&[1.0, -2.0, 0.5]).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn bias_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = MlpClassifier::init(&[4, 6, 3], &mut rng).unwrap();
        let x = [0.3, -0.2, 0.9, 0.1];
        let before = m.predict(&x).unwrap();
        m.layers_mut()
            .last_mut()
            .unwrap()
            .bias
            .iter_mut()
            .for_each(|b| *b += 3.7);
        let after = m.predict(&x).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let m = MlpClassifier::init(&[5, 8, 8, 4], &mut rng).unwrap();
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let p = m.predict(&x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn dimension_errors() {
        let m = MlpClassifier::zeros(&[3, 2]).unwrap();
        assert!(m.forward(&[1.0]).is_err());
        assert!(MlpClassifier::zeros(&[3]).is_err());
        assert!(MlpClassifier::zeros(&[3, 0, 2]).is_err());
        assert!(MlpClassifier::from_layers(vec![Dense::zeros(2, 3), Dense::zeros(4, 2)]).is_err());
    }

    #[test]
    fn flat_params_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = MlpClassifier::init(&[3, 4, 2], &mut rng).unwrap();
        let mut z = MlpClassifier::zeros(&[3, 4, 2]).unwrap();
        z.set_flat_params(&m.flat_params()).unwrap();
        assert_eq!(z, m);
        assert!(z.set_flat_params(&[0.0]).is_err());
    }

    #[test]
    fn output_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = MlpClassifier::init(&[3, 4, 3], &mut rng).unwrap();
        let mut p = m.clone();
        p.permute_outputs(&[2, 0, 1]).unwrap();
        let x = [0.1, 0.7, -0.4];
        let a = m.predict(&x).unwrap();
        let b = p.predict(&x).unwrap();
        for (x, y) in b.iter().zip([a[2], a[0], a[1]]) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(p.permute_outputs(&[0, 0, 1]).is_err());
    }
}
