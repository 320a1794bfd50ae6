//! Indirect learning: fit a post-inverse from the received waveform back to
//! the transmitted one, install it as the pre-distorter, repeat.

use super::link::{transmit, Frame};
use super::{DpdNetwork, LossTrace, TrainConfig, TrainedDpd};
use crate::channel::ChannelConfig;
use crate::dsp;
use crate::error::Result;
use crate::metrics::DpdKind;
use crate::seed::{derive_path, stream};
use crate::signal::RrcFilter;
use crate::volterra::{map_features_rows, KernelSpec, LsAccumulator, Tributary, VolterraFilter};

/// Rows folded into the least-squares factor per block.
const LS_BLOCK: usize = 8192;

pub(crate) fn training_frame(cfg: &TrainConfig) -> Result<Frame> {
    Frame::generate(
        cfg.num_train_symbols,
        derive_path(cfg.seed, &[stream::TRAIN, stream::FRAME]),
        &RrcFilter::standard(),
    )
}

pub(crate) fn round_noise_seed(cfg: &TrainConfig, round: u64) -> u64 {
    derive_path(cfg.seed, &[stream::TRAIN, stream::NOISE, round])
}

/// Real least-squares gain mapping `y` onto `x`.
pub(crate) fn real_gain(y: &[f64], x: &[f64]) -> f64 {
    let num: f64 = y.iter().zip(x).map(|(a, b)| a * b).sum();
    let den: f64 = y.iter().map(|a| a * a).sum();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Fit `features(input) w ~ target` with a ridge relative to the mean
/// squared column norm. Returns the weights and the mean squared residual.
pub(crate) fn fit_post_inverse(
    input: &[f64],
    target: &[f64],
    filter: &VolterraFilter,
    relative_ridge: f64,
) -> Result<(Vec<f64>, f64)> {
    let mut acc = LsAccumulator::new(filter.num_terms());
    let n = input.len();
    for start in (0..n).step_by(LS_BLOCK) {
        let end = (start + LS_BLOCK).min(n);
        let f = map_features_rows(input, filter.terms(), start..end);
        acc.push(&f, &target[start..end])?;
    }
    let ridge = relative_ridge * acc.mean_column_energy();
    let fit = acc.finish(ridge)?;
    Ok((fit.weights, fit.residual / n as f64))
}

/// Indirect learning over `specs` for `cfg.ila_rounds` rounds, starting from
/// a pass-through pre-distorter.
pub fn indirect_learning(
    specs: &[KernelSpec],
    kind: DpdKind,
    channel: &ChannelConfig,
    cfg: &TrainConfig,
) -> Result<TrainedDpd> {
    cfg.validate()?;
    channel.validate()?;
    let frame = training_frame(cfg)?;
    let x = &frame.shaped;
    let (xi, xq) = dsp::split(&x.samples);
    let mut dpd = DpdNetwork::identity(specs)?;
    dpd.calibrate_norm(x);
    let mut trace = LossTrace::new("ila");
    for round in 0..cfg.ila_rounds {
        let z = dpd.apply(x)?;
        let y = transmit(&z, channel, round_noise_seed(cfg, round as u64))?;
        let (zi, zq) = dsp::split(&z.samples);
        let (yi, yq) = dsp::split(&y.samples);
        let mut next = dpd.filter.clone();
        let mut loss = 0.0;
        for (trib, yt, xt, zt) in [(Tributary::I, yi, &xi, &zi), (Tributary::Q, yq, &xq, &zq)] {
            let g = real_gain(&yt, xt);
            let scaled: Vec<f64> = yt.iter().map(|v| g * v).collect();
            let (w, res) = fit_post_inverse(&scaled, zt, &next, cfg.ila_ridge)?;
            next.set_weights(trib, w)?;
            loss += res / 2.0;
        }
        trace.points.push((round, loss));
        dpd = DpdNetwork::new(next);
        dpd.calibrate_norm(x);
    }
    Ok(TrainedDpd {
        kind,
        network: dpd,
        traces: vec![trace],
    })
}

/// 121-tap linear pre-distorter by indirect learning.
pub fn train_linear_dpd(channel: &ChannelConfig, cfg: &TrainConfig) -> Result<TrainedDpd> {
    indirect_learning(&KernelSpec::linear_set(), DpdKind::Linear, channel, cfg)
}

/// Full Volterra pre-distorter (`cfg.specs`) by indirect learning.
pub fn train_volterra_ila(channel: &ChannelConfig, cfg: &TrainConfig) -> Result<TrainedDpd> {
    indirect_learning(&cfg.specs, DpdKind::VolterraIla, channel, cfg)
}
