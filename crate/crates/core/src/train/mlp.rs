use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected layer, `y = W x + b` with `W` of shape `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Multi-layer perceptron with rectified-linear hidden units and inverted
/// dropout on hidden activations during training. The last layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpHead {
    pub layers: Vec<Dense>,
    pub dropout: f64,
}

/// Forward-pass intermediates needed by [`MlpHead::backward`].
#[derive(Clone, Debug)]
pub struct MlpCache {
    /// Input to each layer (batch rows).
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<DMatrix<f64>>,
    /// Dropout multipliers per hidden layer (0 or 1/(1-p)).
    masks: Vec<Option<DMatrix<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGradient {
    pub weights: Vec<DMatrix<f64>>,
    pub bias: Vec<DVector<f64>>,
}

impl MlpGradient {
    pub fn zeros_like(mlp: &MlpHead) -> Self {
        Self {
            weights: mlp.layers.iter().map(|l| DMatrix::zeros(l.weights.nrows(), l.weights.ncols())).collect(),
            bias: mlp.layers.iter().map(|l| DVector::zeros(l.bias.len())).collect(),
        }
    }

    pub fn add(&mut self, other: &MlpGradient) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    pub fn scale(&mut self, w: f64) {
        self.weights.iter_mut().for_each(|m| *m *= w);
        self.bias.iter_mut().for_each(|v| *v *= w);
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().flat_map(|m| m.iter()).chain(self.bias.iter().flat_map(|v| v.iter())).all(|v| v.is_finite())
    }
}

impl MlpHead {
    /// Glorot-uniform weights, zero biases. `sizes` lists every width from
    /// input to output.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], dropout: f64, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config(format!("invalid MLP sizes {sizes:?}")));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::config(format!("dropout {dropout} outside [0, 1)")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    weights: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..limit)),
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers, dropout })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.nrows())
    }

    /// Forward pass over a batch (one sample per row). Dropout is active
    /// only when `rng` is given.
    pub fn forward<R: Rng + ?Sized>(&self, x: &DMatrix<f64>, mut rng: Option<&mut R>) -> (DMatrix<f64>, MlpCache) {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::new(),
            masks: Vec::new(),
        };
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = &h * layer.weights.transpose();
            for mut row in z.row_iter_mut() {
                row += layer.bias.transpose();
            }
            cache.inputs.push(h);
            if li == last {
                h = z;
            } else {
                let mut a = z.map(|v| v.max(0.0));
                let mask = match rng.as_deref_mut() {
                    Some(r) if self.dropout > 0.0 => {
                        let keep = 1.0 / (1.0 - self.dropout);
                        let m = DMatrix::from_fn(a.nrows(), a.ncols(), |_, _| if r.random::<f64>() < self.dropout { 0.0 } else { keep });
                        a.component_mul_assign(&m);
                        Some(m)
                    }
                    _ => None,
                };
                cache.pre.push(z);
                cache.masks.push(mask);
                h = a;
            }
        }
        (h, cache)
    }

    /// Backward pass; returns parameter gradients and `∂L/∂x`.
    pub fn backward(&self, cache: &MlpCache, d_out: &DMatrix<f64>) -> (MlpGradient, DMatrix<f64>) {
        let mut grad = MlpGradient::zeros_like(self);
        let mut delta = d_out.clone();
        for li in (0..self.layers.len()).rev() {
            if li < self.layers.len() - 1 {
                let pre = &cache.pre[li];
                delta.zip_apply(pre, |d, z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                if let Some(mask) = &cache.masks[li] {
                    delta.component_mul_assign(mask);
                }
            }
            let input = &cache.inputs[li];
            grad.weights[li] = delta.transpose() * input;
            grad.bias[li] = delta.row_sum().transpose();
            delta = &delta * &self.layers[li].weights;
        }
        (grad, delta)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn to_record(&self) -> MlpRecord {
        MlpRecord {
            layers: self
                .layers
                .iter()
                .map(|l| DenseRecord {
                    weights: l.weights.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    bias: l.bias.iter().copied().collect(),
                })
                .collect(),
            dropout: self.dropout,
        }
    }

    pub fn from_record(record: &MlpRecord) -> Result<Self> {
        let layers = record
            .layers
            .iter()
            .map(|l| {
                let rows = l.weights.len();
                let cols = l.weights.first().map_or(0, Vec::len);
                if l.bias.len() != rows || l.weights.iter().any(|r| r.len() != cols) {
                    return Err(Error::shape("malformed dense layer record"));
                }
                Ok(Dense {
                    weights: DMatrix::from_fn(rows, cols, |i, j| l.weights[i][j]),
                    bias: DVector::from_vec(l.bias.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if layers.is_empty() {
            return Err(Error::shape("MLP record has no layers"));
        }
        Ok(Self {
            layers,
            dropout: record.dropout,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseRecord {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpRecord {
    pub layers: Vec<DenseRecord>,
    pub dropout: f64,
}

/// Mean softmax cross-entropy over rows of `logits`, with its gradient.
pub fn softmax_cross_entropy(logits: &DMatrix<f64>, labels: &[usize]) -> Result<(f64, DMatrix<f64>)> {
    let (b, c) = logits.shape();
    if labels.len() != b {
        return Err(Error::shape(format!("{} labels for {b} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::data(format!("label {bad} out of range for {c} classes")));
    }
    let mut grad = DMatrix::zeros(b, c);
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.max();
        let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
        loss += denom.ln() + max - row[label];
        for k in 0..c {
            grad[(r, k)] = (row[k] - max).exp() / denom;
        }
        grad[(r, label)] -= 1.0;
    }
    let inv = 1.0 / b.max(1) as f64;
    Ok((loss * inv, grad * inv))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn uniform_logits_give_log_c() {
        let logits = DMatrix::zeros(4, 5);
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 1, 2, 4]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
        assert!(matches!(softmax_cross_entropy(&logits, &[0, 1, 2, 5]), Err(Error::Data(_))));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mlp = MlpHead::new(&[3, 5, 2], 0.0, &mut rng).unwrap();
        let x = DMatrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64 * 0.7).sin());
        let labels = [0, 1, 1, 0];
        let loss_of = |m: &MlpHead, x: &DMatrix<f64>| {
            let (out, _) = m.forward::<ChaCha8Rng>(x, None);
            softmax_cross_entropy(&out, &labels).unwrap().0
        };
        let (out, cache) = mlp.forward::<ChaCha8Rng>(&x, None);
        let (_, d_out) = softmax_cross_entropy(&out, &labels).unwrap();
        let (grad, dx) = mlp.backward(&cache, &d_out);
        let h = 1e-6;
        for li in 0..2 {
            for idx in 0..mlp.layers[li].weights.len() {
                let mut p = mlp.clone();
                p.layers[li].weights[idx] += h;
                let up = loss_of(&p, &x);
                p.layers[li].weights[idx] -= 2.0 * h;
                let down = loss_of(&p, &x);
                let num = (up - down) / (2.0 * h);
                assert!((num - grad.weights[li][idx]).abs() < 1e-7);
            }
        }
        for idx in 0..x.len() {
            let mut xp = x.clone();
            xp[idx] += h;
            let up = loss_of(&mlp, &xp);
            xp[idx] -= 2.0 * h;
            let down = loss_of(&mlp, &xp);
            assert!(((up - down) / (2.0 * h) - dx[idx]).abs() < 1e-7);
        }
    }
}
