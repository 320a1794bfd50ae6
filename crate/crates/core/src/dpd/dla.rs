//! Direct learning through a neural surrogate of the transmitter.
//!
//! Step 1 fits one surrogate per tributary mapping the pre-distorted
//! waveform `z` to the received waveform `y`. Step 2 freezes it and trains
//! the pre-distorter weights by back-propagating a loss through the
//! surrogate, the matched filter and the 2:1 downsampler.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ila::{real_gain, round_noise_seed, train_linear_dpd, training_frame};
use super::link::transmit;
use super::{DpdNetwork, LossPlane, LossTrace, TrainConfig, TrainedDpd};
use crate::channel::ChannelConfig;
use crate::dsp;
use crate::error::{Error, Result};
use crate::metrics::DpdKind;
use crate::nn::{mse_loss, Adam, BatchNorm, Sequential, Tensor1D};
use crate::seed::{derive_path, stream};
use crate::signal::{ComplexWaveform, RrcFilter, SymbolFrame};
use crate::volterra::{map_features_rows, Tributary, VolterraFilter};

/// Round offset for DLA noise seeds, keeping them apart from the linear
/// initialization rounds.
const DLA_NOISE_OFFSET: u64 = 1000;

/// Per-tributary surrogate networks. Each models `y / out_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub models: [Sequential; 2],
    pub out_scale: [f64; 2],
}

impl Surrogate {
    pub fn freeze(&mut self) {
        self.models.iter_mut().for_each(Sequential::freeze);
    }

    pub fn checksum(&self) -> String {
        self.models
            .iter()
            .map(Sequential::checksum)
            .collect::<Vec<_>>()
            .join("")
    }

    /// Surrogate prediction of the received waveform for input `z`.
    pub fn predict(&self, z: &ComplexWaveform) -> Result<ComplexWaveform> {
        let (zi, zq) = dsp::split(&z.samples);
        let mut out = Vec::with_capacity(2);
        for (t, v) in [zi, zq].iter().enumerate() {
            let y = self.models[t].infer(&Tensor1D::from_signal(v))?;
            out.push(
                y.values
                    .iter()
                    .map(|a| a * self.out_scale[t])
                    .collect::<Vec<f64>>(),
            );
        }
        ComplexWaveform::from_parts(&out[0], &out[1], z.sps, crate::signal::WaveRole::Other)
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateFit {
    pub surrogate: Surrogate,
    /// Full-frame MSE per tributary in units of `out_scale^2`, edges excluded.
    pub train_mse: [f64; 2],
    pub traces: Vec<LossTrace>,
}

/// Segment start offsets. Consecutive segments overlap by two edge lengths
/// so every interior sample is scored once.
fn segment_starts(n: usize, cfg: &TrainConfig) -> Vec<usize> {
    let hop = cfg.segment_len - 2 * cfg.segment_edge;
    (0..)
        .map(|k| k * hop)
        .take_while(|s| s + cfg.segment_len <= n)
        .collect()
}

fn check_finite(loss: f64, step: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { step })
    }
}

/// Step 1: fit `z -> y` per tributary on 2-sps waveforms. With `init` the
/// previous surrogate is refined instead of starting from scratch.
pub fn train_surrogate(
    z: &ComplexWaveform,
    y: &ComplexWaveform,
    init: Option<Surrogate>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<SurrogateFit> {
    if z.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "surrogate z vs y",
            left: z.len(),
            right: y.len(),
        });
    }
    let n = z.len();
    let starts = segment_starts(n, cfg);
    if starts.is_empty() {
        return Err(Error::invalid("segment_len", "longer than the waveform"));
    }
    let (zi, zq) = dsp::split(&z.samples);
    let (yi, yq) = dsp::split(&y.samples);
    let mut init_models = init.map(|s| s.models);
    let mut models = Vec::with_capacity(2);
    let mut scales = [0.0; 2];
    let mut mse = [0.0; 2];
    let mut traces = Vec::new();
    let (edge, len) = (cfg.segment_edge, cfg.segment_len);
    for (t, (zt, yt)) in [(zi, yi), (zq, yq)].into_iter().enumerate() {
        let scale = dsp::rms(&yt);
        if scale == 0.0 {
            return Err(Error::ZeroPower);
        }
        let target: Vec<f64> = yt.iter().map(|v| v / scale).collect();
        let mut model = match init_models.as_mut() {
            Some(m) => {
                let mut m = m[t].clone();
                m.unfreeze();
                m
            }
            None => Sequential::surrogate(derive_path(seed, &[stream::SURROGATE, t as u64])),
        };
        let mut adam = Adam::new(cfg.lr);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_path(seed, &[stream::SHUFFLE, t as u64]));
        let mut order = starts.clone();
        let label = Tributary::BOTH[t].label();
        let mut trace = LossTrace::new(format!("surrogate_{label}"));
        let mut step = 0;
        for epoch in 0..cfg.surrogate_epochs {
            adam.lr = cfg.lr_at(epoch, cfg.surrogate_epochs);
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &s in &order {
                let out = model.forward(&Tensor1D::from_signal(&zt[s..s + len]), true)?;
                let (loss, g) = mse_loss(
                    &out.values[edge..len - edge],
                    &target[s + edge..s + len - edge],
                )?;
                check_finite(loss, step)?;
                let mut grad = Tensor1D::zeros(1, len);
                grad.values[edge..len - edge].copy_from_slice(&g);
                model.zero_grad();
                model.backward(&grad)?;
                model.apply_adam(&mut adam)?;
                total += loss;
                step += 1;
            }
            trace.points.push((epoch, total / order.len() as f64));
        }
        let full = model.infer(&Tensor1D::from_signal(&zt))?;
        mse[t] = mse_loss(&full.values[edge..n - edge], &target[edge..n - edge])?.0;
        model.freeze();
        models.push(model);
        scales[t] = scale;
        traces.push(trace);
    }
    let q = models.pop().expect("two models");
    let i = models.pop().expect("two models");
    Ok(SurrogateFit {
        surrogate: Surrogate {
            models: [i, q],
            out_scale: scales,
        },
        train_mse: mse,
        traces,
    })
}

fn symbol_component(s: &[Complex64], t: usize) -> Vec<f64> {
    s.iter().map(|c| if t == 0 { c.re } else { c.im }).collect()
}

/// Per-tributary gain from the surrogate's output units to the loss target:
/// symbols after matched filtering (sample `2n + 1` is symbol `n`), or the
/// shaped waveform itself.
pub fn loss_gains(
    y: &ComplexWaveform,
    surrogate: &Surrogate,
    x: &ComplexWaveform,
    symbols: &SymbolFrame,
    plane: LossPlane,
) -> [f64; 2] {
    let rrc = RrcFilter::standard();
    let mf: Vec<f64> = rrc.taps.iter().rev().copied().collect();
    let (yi, yq) = dsp::split(&y.samples);
    let (xi, xq) = dsp::split(&x.samples);
    let mut gains = [0.0; 2];
    for (t, (yt, xt)) in [(yi, xi), (yq, xq)].into_iter().enumerate() {
        let scaled: Vec<f64> = yt.iter().map(|v| v / surrogate.out_scale[t]).collect();
        gains[t] = match plane {
            LossPlane::Waveform => real_gain(&scaled, &xt),
            LossPlane::Symbol => {
                let m = dsp::convolve_same(&scaled, &mf);
                let odd: Vec<f64> = m.iter().skip(1).step_by(2).copied().collect();
                real_gain(&odd, &symbol_component(&symbols.symbols, t))
            }
        };
    }
    gains
}

/// Step 2: train the pre-distorter through the frozen surrogate. `gains`
/// scales the surrogate output onto the loss target (see [`LossPlane`]).
/// The output normalization runs on segment statistics during training and
/// is re-calibrated on the full frame at the end.
#[allow(clippy::too_many_arguments)]
pub fn train_dpd_dla(
    x: &ComplexWaveform,
    symbols: &SymbolFrame,
    surrogate: &Surrogate,
    mut dpd: DpdNetwork,
    gains: [f64; 2],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(DpdNetwork, Vec<LossTrace>)> {
    if surrogate.models.iter().any(|m| !m.is_frozen()) {
        return Err(Error::FrozenViolation(
            "surrogate must be frozen before DPD training",
        ));
    }
    if x.len() != 2 * symbols.len() {
        return Err(Error::LengthMismatch {
            what: "waveform vs 2 x symbols",
            left: x.len(),
            right: 2 * symbols.len(),
        });
    }
    let before = surrogate.checksum();
    let n = x.len();
    let starts = segment_starts(n, cfg);
    let (edge, len) = (cfg.segment_edge, cfg.segment_len);
    let mf: Vec<f64> = RrcFilter::standard().taps.iter().rev().copied().collect();
    let (xi, xq) = dsp::split(&x.samples);
    let mut traces = Vec::new();
    for (t, xt) in [xi, xq].iter().enumerate() {
        let trib = Tributary::BOTH[t];
        let st = symbol_component(&symbols.symbols, t);
        let mut model = surrogate.models[t].clone();
        let mut norm = BatchNorm::new(1);
        norm.affine_trainable = false;
        let mut w = dpd.filter.weights(trib).to_vec();
        let terms = dpd.filter.terms().to_vec();
        let mut adam = Adam::new(cfg.lr);
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_path(seed, &[stream::SHUFFLE, 10 + t as u64]));
        let mut order = starts.clone();
        let mut trace = LossTrace::new(format!("dla_{}", trib.label()));
        let c = gains[t];
        let mut step = 0;
        for epoch in 0..cfg.dpd_epochs {
            adam.lr = cfg.lr_at(epoch, cfg.dpd_epochs);
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &s in &order {
                let f = map_features_rows(xt, &terms, s..s + len);
                let raw = Tensor1D::from_signal(&f.mul_vec(&w));
                let (zn, cache) = norm.forward_train(&raw);
                let out = model.forward(&zn, false)?;
                let mut g_out = vec![0.0; len];
                let loss = match cfg.loss_plane {
                    LossPlane::Symbol => {
                        let m = dsp::convolve_same(&out.values, &mf);
                        // segment starts are even, so odd local indices are symbol instants
                        let first = edge | 1;
                        let idx: Vec<usize> = (first..len - edge).step_by(2).collect();
                        let pred: Vec<f64> = idx.iter().map(|&k| c * m[k]).collect();
                        let target: Vec<f64> = idx.iter().map(|&k| st[(s + k - 1) / 2]).collect();
                        let (loss, g) = mse_loss(&pred, &target)?;
                        let mut g_m = vec![0.0; len];
                        for (&k, gk) in idx.iter().zip(&g) {
                            g_m[k] = c * gk;
                        }
                        g_out = dsp::convolve_same_adjoint(&g_m, &mf);
                        loss
                    }
                    LossPlane::Waveform => {
                        let pred: Vec<f64> =
                            out.values[edge..len - edge].iter().map(|v| c * v).collect();
                        let (loss, g) = mse_loss(&pred, &xt[s + edge..s + len - edge])?;
                        for (d, gk) in g_out[edge..len - edge].iter_mut().zip(&g) {
                            *d = c * gk;
                        }
                        loss
                    }
                };
                check_finite(loss, step)?;
                let g_zn = model.backward_input(&Tensor1D::from_signal(&g_out))?;
                let g_raw = norm.backward_train(&cache, &g_zn, false);
                let grad_w = f.tmul_vec(&g_raw.values);
                adam.step(&mut w, &grad_w)?;
                if !w.iter().all(|v| v.is_finite()) {
                    return Err(Error::Divergence { step });
                }
                total += loss;
                step += 1;
            }
            trace.points.push((epoch, total / order.len() as f64));
        }
        if model.checksum() != surrogate.models[t].checksum() {
            return Err(Error::FrozenViolation(
                "surrogate changed during DPD training",
            ));
        }
        dpd.filter.set_weights(trib, w)?;
        traces.push(trace);
    }
    if surrogate.checksum() != before {
        return Err(Error::FrozenViolation(
            "surrogate changed during DPD training",
        ));
    }
    dpd.calibrate_norm(x);
    Ok((dpd, traces))
}

/// Full direct-learning loop: start from the linear indirect-learning DPD,
/// then alternate surrogate fitting and DPD training for
/// `cfg.dla_outer_rounds` rounds. The surrogate is warm-started from the
/// previous round.
pub fn run_dla(channel: &ChannelConfig, cfg: &TrainConfig) -> Result<TrainedDpd> {
    run_dla_observed(channel, cfg, |_, _| {})
}

/// [`run_dla`] that also hands each round's DPD (1-based round) to
/// `observe`. Round `r` does not depend on how many rounds follow.
pub fn run_dla_observed(
    channel: &ChannelConfig,
    cfg: &TrainConfig,
    mut observe: impl FnMut(usize, &DpdNetwork),
) -> Result<TrainedDpd> {
    cfg.validate()?;
    channel.validate()?;
    let frame = training_frame(cfg)?;
    let x = &frame.shaped;
    let linear = train_linear_dpd(channel, cfg)?;
    let mut dpd =
        DpdNetwork::new(VolterraFilter::new(&cfg.specs)?.with_weights_from(&linear.network.filter));
    dpd.calibrate_norm(x);
    let mut traces = linear.traces;
    let mut surrogate: Option<Surrogate> = None;
    for round in 0..cfg.dla_outer_rounds as u64 {
        let z = dpd.apply(x)?;
        let y = transmit(&z, channel, round_noise_seed(cfg, DLA_NOISE_OFFSET + round))?;
        let round_seed = derive_path(cfg.seed, &[stream::TRAIN, stream::SURROGATE, round]);
        let fit = train_surrogate(&z, &y, surrogate.take(), cfg, round_seed)?;
        let gains = loss_gains(&y, &fit.surrogate, x, &frame.symbols, cfg.loss_plane);
        let (next, dla_traces) = train_dpd_dla(
            x,
            &frame.symbols,
            &fit.surrogate,
            dpd,
            gains,
            cfg,
            round_seed,
        )?;
        dpd = next;
        observe(round as usize + 1, &dpd);
        for mut tr in fit.traces.into_iter().chain(dla_traces) {
            tr.stage = format!("{}_round{}", tr.stage, round + 1);
            traces.push(tr);
        }
        surrogate = Some(fit.surrogate);
    }
    Ok(TrainedDpd {
        kind: DpdKind::VolterraDla,
        network: dpd,
        traces,
    })
}
