//! Small reverse-mode network kit for 1-D signals: convolution, dense,
//! batch normalization and pointwise activations in a fixed sequential
//! topology, with MSE loss, Adam and finite-difference gradient checks.

mod checkpoint;
mod gradcheck;
mod layers;
mod optim;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use gradcheck::{gradcheck_model, standard_suite, GradcheckReport};
pub use layers::{Activation, BatchNorm, BatchNormCache, Conv1d, Dense};
pub use optim::{mse_loss, Adam};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// `channels x len` real values, stored channel by channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor1D {
    pub channels: usize,
    pub len: usize,
    pub values: Vec<f64>,
}

impl Tensor1D {
    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            values: vec![0.0; channels * len],
        }
    }

    pub fn from_values(channels: usize, len: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * len {
            return Err(Error::LengthMismatch {
                what: "tensor values vs shape",
                left: values.len(),
                right: channels * len,
            });
        }
        Ok(Self {
            channels,
            len,
            values,
        })
    }

    pub fn from_signal(x: &[f64]) -> Self {
        Self {
            channels: 1,
            len: x.len(),
            values: x.to_vec(),
        }
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.len..(c + 1) * self.len]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.values[c * self.len..(c + 1) * self.len]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv1d(Conv1d),
    Dense(Dense),
    BatchNorm(BatchNorm),
    Activation(Activation),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::Dense(_) => "dense",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Activation(_) => "activation",
        }
    }

    /// Expected input channels, or `None` for shape-preserving layers.
    fn in_channels(&self) -> Option<usize> {
        match self {
            Layer::Conv1d(c) => Some(c.in_channels),
            Layer::Dense(d) => Some(d.in_features),
            Layer::BatchNorm(b) => Some(b.channels),
            Layer::Activation(_) => None,
        }
    }

    fn out_channels(&self, input: usize) -> usize {
        match self {
            Layer::Conv1d(c) => c.out_channels,
            Layer::Dense(d) => d.out_features,
            Layer::BatchNorm(b) => b.channels,
            Layer::Activation(_) => input,
        }
    }

    fn min_len(&self) -> usize {
        match self {
            Layer::Conv1d(c) => c.kernel,
            _ => 1,
        }
    }

    /// Trainable (parameter, gradient) pairs in a fixed order.
    fn params(&self) -> Vec<(&[f64], &[f64])> {
        match self {
            Layer::Conv1d(c) => vec![(&c.weight, &c.grad_weight), (&c.bias, &c.grad_bias)],
            Layer::Dense(d) => vec![(&d.weight, &d.grad_weight), (&d.bias, &d.grad_bias)],
            Layer::BatchNorm(b) if b.affine_trainable => {
                vec![(&b.gamma, &b.grad_gamma), (&b.beta, &b.grad_beta)]
            }
            _ => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<(&mut Vec<f64>, &mut Vec<f64>)> {
        match self {
            Layer::Conv1d(c) => vec![
                (&mut c.weight, &mut c.grad_weight),
                (&mut c.bias, &mut c.grad_bias),
            ],
            Layer::Dense(d) => vec![
                (&mut d.weight, &mut d.grad_weight),
                (&mut d.bias, &mut d.grad_bias),
            ],
            Layer::BatchNorm(b) if b.affine_trainable => {
                vec![
                    (&mut b.gamma, &mut b.grad_gamma),
                    (&mut b.beta, &mut b.grad_beta),
                ]
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Saved {
    Input(Tensor1D),
    Output(Tensor1D),
    Norm(BatchNormCache),
    NormEval(Tensor1D),
}

#[derive(Debug, Clone, PartialEq)]
struct Tape {
    saved: Vec<Saved>,
    input_channels: usize,
}

/// Layers applied in order. The tape of the last forward pass is kept until
/// the next `backward`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    layers: Vec<Layer>,
    tape: Option<Tape>,
    frozen: bool,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("layer list"));
        }
        let mut ch: Option<usize> = None;
        for (k, l) in layers.iter().enumerate() {
            if let (Some(have), Some(want)) = (ch, l.in_channels()) {
                if have != want {
                    return Err(Error::Shape {
                        layer: k,
                        kind: l.kind(),
                        reason: format!("expects {want} channels, previous layer gives {have}"),
                    });
                }
            }
            ch = l.in_channels().map(|c| l.out_channels(c)).or(ch);
        }
        Ok(Self {
            layers,
            tape: None,
            frozen: false,
        })
    }

    /// The channel surrogate: conv(70, 1->8, tanh), conv(11, 8->8, tanh),
    /// conv(40, 8->1). The last layer starts at zero.
    pub fn surrogate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = vec![
            Layer::Conv1d(Conv1d::uniform(1, 8, 70, &mut rng)),
            Layer::Activation(Activation::Tanh),
            Layer::Conv1d(Conv1d::uniform(8, 8, 11, &mut rng)),
            Layer::Activation(Activation::Tanh),
            Layer::Conv1d(Conv1d::zeros(8, 1, 40)),
        ];
        Self::new(layers).expect("surrogate layout is consistent")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn input_channels(&self) -> usize {
        self.layers.iter().find_map(Layer::in_channels).unwrap_or(1)
    }

    /// Largest conv kernel; inputs must be at least this long.
    pub fn min_input_len(&self) -> usize {
        self.layers.iter().map(Layer::min_len).max().unwrap_or(1)
    }

    fn check_input(&self, x: &Tensor1D) -> Result<()> {
        let want = self.input_channels();
        if x.channels != want {
            return Err(Error::Shape {
                layer: 0,
                kind: self.layers[0].kind(),
                reason: format!("expects {want} input channels, got {}", x.channels),
            });
        }
        for (k, l) in self.layers.iter().enumerate() {
            if x.len < l.min_len() {
                return Err(Error::Shape {
                    layer: k,
                    kind: l.kind(),
                    reason: format!("input length {} shorter than kernel {}", x.len, l.min_len()),
                });
            }
        }
        Ok(())
    }

    /// Forward pass, recording the tape for `backward`. Batchnorm uses batch
    /// statistics in training mode and running statistics otherwise.
    pub fn forward(&mut self, x: &Tensor1D, training: bool) -> Result<Tensor1D> {
        self.check_input(x)?;
        let mut saved = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in self.layers.iter_mut() {
            h = match layer {
                Layer::Conv1d(c) => {
                    let y = c.forward(&h);
                    saved.push(Saved::Input(h));
                    y
                }
                Layer::Dense(d) => {
                    let y = d.forward(&h);
                    saved.push(Saved::Input(h));
                    y
                }
                Layer::BatchNorm(b) if training => {
                    let (y, cache) = b.forward_train(&h);
                    saved.push(Saved::Norm(cache));
                    y
                }
                Layer::BatchNorm(b) => {
                    let y = b.forward_eval(&h);
                    saved.push(Saved::NormEval(h));
                    y
                }
                Layer::Activation(a) => {
                    let y = a.forward(&h);
                    saved.push(Saved::Output(y.clone()));
                    y
                }
            };
        }
        self.tape = Some(Tape {
            saved,
            input_channels: x.channels,
        });
        Ok(h)
    }

    /// Forward without recording a tape or touching running statistics.
    pub fn infer(&self, x: &Tensor1D) -> Result<Tensor1D> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                Layer::Conv1d(c) => c.forward(&h),
                Layer::Dense(d) => d.forward(&h),
                Layer::BatchNorm(b) => b.forward_eval(&h),
                Layer::Activation(a) => a.forward(&h),
            };
        }
        Ok(h)
    }

    /// Reverse pass from the loss gradient w.r.t. the last output. Parameter
    /// gradients accumulate; the input gradient is returned.
    pub fn backward(&mut self, grad: &Tensor1D) -> Result<Tensor1D> {
        self.backward_impl(grad, !self.frozen)
    }

    /// Input gradient only; parameter gradients are left untouched.
    pub fn backward_input(&mut self, grad: &Tensor1D) -> Result<Tensor1D> {
        self.backward_impl(grad, false)
    }

    fn backward_impl(&mut self, grad: &Tensor1D, params: bool) -> Result<Tensor1D> {
        let tape = self
            .tape
            .take()
            .ok_or(Error::State("backward called without a forward pass"))?;
        let mut g = grad.clone();
        for (k, (layer, saved)) in self.layers.iter_mut().zip(&tape.saved).enumerate().rev() {
            let shape_err = |reason: String| Error::Shape {
                layer: k,
                kind: "backward",
                reason,
            };
            g = match (layer, saved) {
                (Layer::Conv1d(c), Saved::Input(x)) => {
                    if g.channels != c.out_channels || g.len != x.len {
                        return Err(shape_err(format!("gradient {}x{}", g.channels, g.len)));
                    }
                    c.backward(x, &g, params)
                }
                (Layer::Dense(d), Saved::Input(x)) => {
                    if g.channels != d.out_features || g.len != x.len {
                        return Err(shape_err(format!("gradient {}x{}", g.channels, g.len)));
                    }
                    d.backward(x, &g, params)
                }
                (Layer::BatchNorm(b), Saved::Norm(cache)) => {
                    if g.values.len() != cache.x_hat.values.len() {
                        return Err(shape_err(format!("gradient {}x{}", g.channels, g.len)));
                    }
                    b.backward_train(cache, &g, params)
                }
                (Layer::BatchNorm(b), Saved::NormEval(x)) => {
                    if g.values.len() != x.values.len() {
                        return Err(shape_err(format!("gradient {}x{}", g.channels, g.len)));
                    }
                    b.backward_eval(x, &g, params)
                }
                (Layer::Activation(a), Saved::Output(y)) => {
                    if g.values.len() != y.values.len() {
                        return Err(shape_err(format!("gradient {}x{}", g.channels, g.len)));
                    }
                    a.backward(y, &g)
                }
                _ => return Err(Error::State("tape does not match layers")),
            };
        }
        debug_assert_eq!(g.channels, tape.input_channels);
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for l in self.layers.iter_mut() {
            for (_, g) in l.params_mut() {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .flat_map(Layer::params)
            .map(|(p, _)| p.len())
            .sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(Layer::params)
            .flat_map(|(p, _)| p.iter().copied())
            .collect()
    }

    pub fn grads_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(Layer::params)
            .flat_map(|(_, g)| g.iter().copied())
            .collect()
    }

    pub fn set_params_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::LengthMismatch {
                what: "flat parameters",
                left: values.len(),
                right: self.num_params(),
            });
        }
        if self.frozen {
            return Err(Error::FrozenViolation("set_params_flat on a frozen model"));
        }
        let mut k = 0;
        for l in self.layers.iter_mut() {
            for (p, _) in l.params_mut() {
                let n = p.len();
                p.copy_from_slice(&values[k..k + n]);
                k += n;
            }
        }
        Ok(())
    }

    /// One optimizer step over all trainable parameters.
    pub fn apply_adam(&mut self, adam: &mut Adam) -> Result<()> {
        if self.frozen {
            return Err(Error::FrozenViolation("optimizer step on a frozen model"));
        }
        let mut params = self.params_flat();
        adam.step(&mut params, &self.grads_flat())?;
        self.set_params_flat(&params)
    }

    /// SHA-256 over every parameter and running statistic, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.layers {
            h.update(l.kind().as_bytes());
            let blobs: Vec<&[f64]> = match l {
                Layer::Conv1d(c) => vec![&c.weight, &c.bias],
                Layer::Dense(d) => vec![&d.weight, &d.bias],
                Layer::BatchNorm(b) => vec![&b.gamma, &b.beta, &b.running_mean, &b.running_var],
                Layer::Activation(_) => vec![],
            };
            for v in blobs.into_iter().flatten() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn untrained_surrogate_is_zero_map() {
        let s = Sequential::surrogate(1);
        let x =
            Tensor1D::from_signal(&(0..300).map(|k| (k as f64 * 0.1).sin()).collect::<Vec<_>>());
        let y = s.infer(&x).unwrap();
        assert_eq!(y.len, 300);
        assert!(y.values.iter().all(|v| *v == 0.0));
        assert_eq!(s.num_params(), 8 * 70 + 8 + 8 * 8 * 11 + 8 + 8 * 40 + 1);
    }

    #[test]
    fn output_length_follows_input() {
        let mut s = Sequential::surrogate(2);
        for len in [70, 71, 500] {
            let y = s.forward(&Tensor1D::zeros(1, len), false).unwrap();
            assert_eq!((y.channels, y.len), (1, len));
        }
        assert!(matches!(
            s.forward(&Tensor1D::zeros(1, 69), false),
            Err(Error::Shape { layer: 0, .. })
        ));
        assert!(matches!(
            s.forward(&Tensor1D::zeros(2, 100), false),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn layer_mismatch_names_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = Sequential::new(vec![
            Layer::Conv1d(Conv1d::uniform(1, 4, 3, &mut rng)),
            Layer::Activation(Activation::Tanh),
            Layer::Dense(Dense::uniform(3, 1, &mut rng)),
        ])
        .unwrap_err();
        assert!(
            matches!(
                err,
                Error::Shape {
                    layer: 2,
                    kind: "dense",
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn backward_requires_forward() {
        let mut s = Sequential::surrogate(3);
        assert!(matches!(
            s.backward(&Tensor1D::zeros(1, 100)),
            Err(Error::State(_))
        ));
        s.forward(&Tensor1D::zeros(1, 100), true).unwrap();
        s.backward(&Tensor1D::zeros(1, 100)).unwrap();
        assert!(s.backward(&Tensor1D::zeros(1, 100)).is_err());
    }

    #[test]
    fn identity_network_passes_gradient() {
        let mut c = Conv1d::zeros(1, 1, 9);
        c.weight[4] = 1.0;
        let mut s = Sequential::new(vec![
            Layer::Conv1d(c),
            Layer::Activation(Activation::Identity),
        ])
        .unwrap();
        let x = Tensor1D::from_signal(&[0.5; 40]);
        assert_eq!(s.forward(&x, true).unwrap(), x);
        let g = Tensor1D::from_signal(&(0..40).map(|k| k as f64).collect::<Vec<_>>());
        assert_eq!(s.backward(&g).unwrap(), g);
    }

    #[test]
    fn frozen_model_rejects_updates() {
        let mut s = Sequential::surrogate(4);
        s.freeze();
        let before = s.checksum();
        let mut adam = Adam::new(1e-3);
        let x = Tensor1D::from_signal(&[0.3; 128]);
        for _ in 0..3 {
            s.forward(&x, true).unwrap();
            s.backward(&Tensor1D::from_signal(&[1.0; 128])).unwrap();
            assert!(matches!(
                s.apply_adam(&mut adam),
                Err(Error::FrozenViolation(_))
            ));
        }
        assert_eq!(s.checksum(), before);
        assert!(s.grads_flat().iter().all(|g| *g == 0.0));
    }
}
