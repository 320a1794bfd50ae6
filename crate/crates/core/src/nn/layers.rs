use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Tensor1D;

/// 1-D convolution with "same" output length. For an even kernel the extra
/// pad sample goes on the left: `left = k / 2`, `right = (k - 1) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out][in][k]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
}

impl Conv1d {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        let n = in_channels * out_channels * kernel;
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: vec![0.0; n],
            bias: vec![0.0; out_channels],
            grad_weight: vec![0.0; n],
            grad_bias: vec![0.0; out_channels],
        }
    }

    /// Weights and biases uniform in `±sqrt(1 / (in_channels * kernel))`.
    pub fn uniform(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut c = Self::zeros(in_channels, out_channels, kernel);
        let bound = (1.0 / (in_channels * kernel) as f64).sqrt();
        for w in c.weight.iter_mut().chain(c.bias.iter_mut()) {
            *w = rng.random_range(-bound..bound);
        }
        c
    }

    pub fn left_pad(&self) -> usize {
        self.kernel / 2
    }

    fn w(&self, o: usize, i: usize) -> &[f64] {
        let s = (o * self.in_channels + i) * self.kernel;
        &self.weight[s..s + self.kernel]
    }

    /// Output index range `t` for which `x[t + j - left]` is inside `0..len`.
    fn valid(&self, j: usize, len: usize) -> (usize, usize) {
        let left = self.left_pad();
        let lo = left.saturating_sub(j);
        let hi = (len + left).saturating_sub(j).min(len);
        (lo, hi.max(lo))
    }

    pub fn forward(&self, x: &Tensor1D) -> Tensor1D {
        let len = x.len;
        let left = self.left_pad();
        let mut y = Tensor1D::zeros(self.out_channels, len);
        for o in 0..self.out_channels {
            let out = y.channel_mut(o);
            out.iter_mut().for_each(|v| *v = self.bias[o]);
            for i in 0..self.in_channels {
                let xi = x.channel(i);
                for (j, &w) in self.w(o, i).iter().enumerate() {
                    let (lo, hi) = self.valid(j, len);
                    let src = &xi[lo + j - left..hi + j - left];
                    for (d, s) in out[lo..hi].iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
        y
    }

    /// Returns the input gradient; adds parameter gradients when `params`.
    pub fn backward(&mut self, x: &Tensor1D, g: &Tensor1D, params: bool) -> Tensor1D {
        let len = x.len;
        let left = self.left_pad();
        let mut gx = Tensor1D::zeros(self.in_channels, len);
        for o in 0..self.out_channels {
            let go = g.channel(o);
            if params {
                self.grad_bias[o] += go.iter().sum::<f64>();
            }
            for i in 0..self.in_channels {
                let base = (o * self.in_channels + i) * self.kernel;
                let xi = x.channel(i);
                for j in 0..self.kernel {
                    let (lo, hi) = self.valid(j, len);
                    let (a, b) = (lo + j - left, hi + j - left);
                    let w = self.weight[base + j];
                    for (d, s) in gx.channel_mut(i)[a..b].iter_mut().zip(&go[lo..hi]) {
                        *d += w * s;
                    }
                    if params {
                        self.grad_weight[base + j] += xi[a..b]
                            .iter()
                            .zip(&go[lo..hi])
                            .map(|(p, q)| p * q)
                            .sum::<f64>();
                    }
                }
            }
        }
        gx
    }
}

/// Fully connected map across channels, applied independently at every
/// time index.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out][in]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        let n = in_features * out_features;
        Self {
            in_features,
            out_features,
            weight: vec![0.0; n],
            bias: vec![0.0; out_features],
            grad_weight: vec![0.0; n],
            grad_bias: vec![0.0; out_features],
        }
    }

    pub fn uniform(in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut d = Self::zeros(in_features, out_features);
        let bound = (1.0 / in_features as f64).sqrt();
        for w in d.weight.iter_mut().chain(d.bias.iter_mut()) {
            *w = rng.random_range(-bound..bound);
        }
        d
    }

    pub fn forward(&self, x: &Tensor1D) -> Tensor1D {
        let mut y = Tensor1D::zeros(self.out_features, x.len);
        for o in 0..self.out_features {
            let out = y.channel_mut(o);
            out.iter_mut().for_each(|v| *v = self.bias[o]);
            for i in 0..self.in_features {
                let w = self.weight[o * self.in_features + i];
                for (d, s) in out.iter_mut().zip(x.channel(i)) {
                    *d += w * s;
                }
            }
        }
        y
    }

    pub fn backward(&mut self, x: &Tensor1D, g: &Tensor1D, params: bool) -> Tensor1D {
        let mut gx = Tensor1D::zeros(self.in_features, x.len);
        for o in 0..self.out_features {
            let go = g.channel(o);
            if params {
                self.grad_bias[o] += go.iter().sum::<f64>();
            }
            for i in 0..self.in_features {
                let k = o * self.in_features + i;
                let w = self.weight[k];
                for (d, s) in gx.channel_mut(i).iter_mut().zip(go) {
                    *d += w * s;
                }
                if params {
                    self.grad_weight[k] +=
                        x.channel(i).iter().zip(go).map(|(p, q)| p * q).sum::<f64>();
                }
            }
        }
        gx
    }
}

/// Per-channel batch normalization over the time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    /// When false, `gamma` and `beta` are constants (no gradients, skipped
    /// by the optimizer).
    pub affine_trainable: bool,
    pub grad_gamma: Vec<f64>,
    pub grad_beta: Vec<f64>,
}

/// Values saved by a training-mode forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormCache {
    pub x_hat: Tensor1D,
    pub inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-10,
            affine_trainable: true,
            grad_gamma: vec![0.0; channels],
            grad_beta: vec![0.0; channels],
        }
    }

    /// Training mode: normalize with the batch statistics (biased variance)
    /// and update the running statistics.
    pub fn forward_train(&mut self, x: &Tensor1D) -> (Tensor1D, BatchNormCache) {
        let n = x.len as f64;
        let mut y = Tensor1D::zeros(self.channels, x.len);
        let mut x_hat = Tensor1D::zeros(self.channels, x.len);
        let mut inv_std = vec![0.0; self.channels];
        for c in 0..self.channels {
            let xc = x.channel(c);
            let mean = xc.iter().sum::<f64>() / n;
            let var = xc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let s = 1.0 / (var + self.eps).sqrt();
            inv_std[c] = s;
            for ((h, out), v) in x_hat
                .channel_mut(c)
                .iter_mut()
                .zip(y.channel_mut(c))
                .zip(xc)
            {
                *h = (v - mean) * s;
                *out = self.gamma[c] * *h + self.beta[c];
            }
            let m = self.momentum;
            let unbiased = if x.len > 1 { var * n / (n - 1.0) } else { var };
            self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * mean;
            self.running_var[c] = (1.0 - m) * self.running_var[c] + m * unbiased;
        }
        (y, BatchNormCache { x_hat, inv_std })
    }

    pub fn forward_eval(&self, x: &Tensor1D) -> Tensor1D {
        let mut y = x.clone();
        for c in 0..self.channels {
            let s = 1.0 / (self.running_var[c] + self.eps).sqrt();
            let (g, b, m) = (self.gamma[c], self.beta[c], self.running_mean[c]);
            y.channel_mut(c)
                .iter_mut()
                .for_each(|v| *v = g * (*v - m) * s + b);
        }
        y
    }

    pub fn backward_train(
        &mut self,
        cache: &BatchNormCache,
        g: &Tensor1D,
        params: bool,
    ) -> Tensor1D {
        let n = g.len as f64;
        let mut gx = Tensor1D::zeros(self.channels, g.len);
        for c in 0..self.channels {
            let gc = g.channel(c);
            let xh = cache.x_hat.channel(c);
            let sum_g: f64 = gc.iter().sum();
            let sum_gx: f64 = gc.iter().zip(xh).map(|(a, b)| a * b).sum();
            if params && self.affine_trainable {
                self.grad_beta[c] += sum_g;
                self.grad_gamma[c] += sum_gx;
            }
            let k = self.gamma[c] * cache.inv_std[c] / n;
            for ((d, gi), h) in gx.channel_mut(c).iter_mut().zip(gc).zip(xh) {
                *d = k * (n * gi - sum_g - h * sum_gx);
            }
        }
        gx
    }

    /// Backward through the eval-mode affine map.
    pub fn backward_eval(&mut self, x: &Tensor1D, g: &Tensor1D, params: bool) -> Tensor1D {
        let mut gx = g.clone();
        for c in 0..self.channels {
            let s = 1.0 / (self.running_var[c] + self.eps).sqrt();
            if params && self.affine_trainable {
                let m = self.running_mean[c];
                self.grad_beta[c] += g.channel(c).iter().sum::<f64>();
                self.grad_gamma[c] += g
                    .channel(c)
                    .iter()
                    .zip(x.channel(c))
                    .map(|(a, v)| a * (v - m) * s)
                    .sum::<f64>();
            }
            let k = self.gamma[c] * s;
            gx.channel_mut(c).iter_mut().for_each(|v| *v *= k);
        }
        gx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    pub fn forward(self, x: &Tensor1D) -> Tensor1D {
        let mut y = x.clone();
        if self == Activation::Tanh {
            y.values.iter_mut().for_each(|v| *v = v.tanh());
        }
        y
    }

    /// Gradient given the forward *output* `y`.
    pub fn backward(self, y: &Tensor1D, g: &Tensor1D) -> Tensor1D {
        let mut gx = g.clone();
        if self == Activation::Tanh {
            for (d, v) in gx.values.iter_mut().zip(&y.values) {
                *d *= 1.0 - v * v;
            }
        }
        gx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn random(ch: usize, len: usize, seed: u64) -> Tensor1D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor1D::from_values(
            ch,
            len,
            (0..ch * len).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    /// Direct evaluation of the "same" convolution definition.
    fn conv_reference(c: &Conv1d, x: &Tensor1D) -> Tensor1D {
        let left = c.left_pad() as isize;
        let mut y = Tensor1D::zeros(c.out_channels, x.len);
        for o in 0..c.out_channels {
            for t in 0..x.len {
                let mut acc = c.bias[o];
                for i in 0..c.in_channels {
                    for j in 0..c.kernel {
                        let s = t as isize + j as isize - left;
                        if s >= 0 && (s as usize) < x.len {
                            acc += c.w(o, i)[j] * x.channel(i)[s as usize];
                        }
                    }
                }
                y.channel_mut(o)[t] = acc;
            }
        }
        y
    }

    #[test]
    fn conv_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in [1, 4, 5, 70] {
            let c = Conv1d::uniform(2, 3, k, &mut rng);
            let x = random(2, 90, k as u64);
            let (a, b) = (c.forward(&x), conv_reference(&c, &x));
            for (p, q) in a.values.iter().zip(&b.values) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn centre_tap_is_identity() {
        for k in [5, 6] {
            let mut c = Conv1d::zeros(1, 1, k);
            let centre = c.left_pad();
            c.weight[centre] = 1.0;
            let x = random(1, 50, 2);
            assert_eq!(c.forward(&x), x);
        }
    }

    #[test]
    fn linear_conv_gradient_is_correlation() {
        // L = sum (y - t)^2 / N, dL/dw_j = 2/N sum_t r_t x_{t + j - left}
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = Conv1d::uniform(1, 1, 7, &mut rng);
        let x = random(1, 64, 4);
        let target = random(1, 64, 5);
        let y = c.forward(&x);
        let n = 64.0;
        let r: Vec<f64> = y
            .values
            .iter()
            .zip(&target.values)
            .map(|(a, b)| a - b)
            .collect();
        let g = Tensor1D::from_values(1, 64, r.iter().map(|v| 2.0 * v / n).collect()).unwrap();
        c.backward(&x, &g, true);
        for j in 0..7 {
            let mut expect = 0.0;
            for t in 0..64isize {
                let s = t + j as isize - 3;
                if (0..64).contains(&s) {
                    expect += 2.0 / n * r[t as usize] * x.values[s as usize];
                }
            }
            assert!((c.grad_weight[j] - expect).abs() < 1e-10);
        }
        assert!((c.grad_bias[0] - 2.0 / n * r.iter().sum::<f64>()).abs() < 1e-10);
    }

    #[test]
    fn batchnorm_training_statistics() {
        let mut bn = BatchNorm::new(3);
        let mut x = random(3, 500, 6);
        x.channel_mut(1)
            .iter_mut()
            .for_each(|v| *v = 5.0 + 3.0 * *v);
        let (y, _) = bn.forward_train(&x);
        for c in 0..3 {
            let ch = y.channel(c);
            let mean = ch.iter().sum::<f64>() / 500.0;
            let var = ch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 500.0;
            let xc = x.channel(c);
            let xm = xc.iter().sum::<f64>() / 500.0;
            let xv = xc.iter().map(|v| (v - xm).powi(2)).sum::<f64>() / 500.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-8, "{var} from {xv}");
        }
        assert!(bn.running_mean[1] > 0.4);
    }

    #[test]
    fn dense_is_channel_mixing() {
        let mut d = Dense::zeros(2, 1);
        d.weight = vec![2.0, -1.0];
        d.bias = vec![0.5];
        let x = Tensor1D::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(d.forward(&x).values, vec![2.0 - 3.0 + 0.5, 4.0 - 4.0 + 0.5]);
    }
}
