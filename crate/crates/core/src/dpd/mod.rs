//! Digital pre-distorters and their trainers.
//!
//! A [`DpdNetwork`] is a per-tributary Volterra feature map followed by a
//! single linear output neuron (the Volterra weights) and a batch
//! normalization of the output stream. Trainers implement [`DpdTrainer`] and
//! are looked up by name in a [`TrainerRegistry`].

mod dla;
mod ila;
mod link;

pub use dla::{
    loss_gains, run_dla, run_dla_observed, train_dpd_dla, train_surrogate, Surrogate, SurrogateFit,
};
pub use ila::{indirect_learning, train_linear_dpd, train_volterra_ila};
pub use link::{evaluate, score, transmit, Evaluation, Frame};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::channel::ChannelConfig;
use crate::dsp;
use crate::error::{Error, Result};
use crate::metrics::DpdKind;
use crate::nn::BatchNorm;
use crate::signal::{ComplexWaveform, WaveRole};
use crate::volterra::{
    apply_volterra, parse_weights, weights_to_string, KernelSpec, Tributary, VolterraFilter,
};

#[derive(Debug, Clone, PartialEq)]
pub struct DpdNetwork {
    pub filter: VolterraFilter,
    /// Two channels (I, Q). The affine is fixed at gamma = 1, beta = 0: the
    /// transmitter rescales and AC-couples its input, so it has no effect.
    pub norm: BatchNorm,
}

impl DpdNetwork {
    pub fn new(filter: VolterraFilter) -> Self {
        let mut norm = BatchNorm::new(2);
        norm.affine_trainable = false;
        Self { filter, norm }
    }

    /// Pass-through on the given kernel layout.
    pub fn identity(specs: &[KernelSpec]) -> Result<Self> {
        Ok(Self::new(VolterraFilter::identity(specs)?))
    }

    /// Volterra outputs before normalization.
    pub fn raw_output(&self, x: &ComplexWaveform) -> (Vec<f64>, Vec<f64>) {
        let (i, q) = dsp::split(&x.samples);
        (
            apply_volterra(&i, &self.filter, Tributary::I),
            apply_volterra(&q, &self.filter, Tributary::Q),
        )
    }

    /// Inference: Volterra map, then the normalization with its frozen
    /// running statistics.
    pub fn apply(&self, x: &ComplexWaveform) -> Result<ComplexWaveform> {
        let (i, q) = self.raw_output(x);
        let n = self.normalize(i, q);
        ComplexWaveform::from_parts(&n[0], &n[1], x.sps, WaveRole::Predistorted)
    }

    fn normalize(&self, i: Vec<f64>, q: Vec<f64>) -> [Vec<f64>; 2] {
        let mut out = [i, q];
        for (c, v) in out.iter_mut().enumerate() {
            let b = &self.norm;
            let s = b.gamma[c] / (b.running_var[c] + b.eps).sqrt();
            v.iter_mut()
                .for_each(|x| *x = (*x - b.running_mean[c]) * s + b.beta[c]);
        }
        out
    }

    /// Freeze the running statistics at the mean and variance of the raw
    /// output over `x`.
    pub fn calibrate_norm(&mut self, x: &ComplexWaveform) {
        let (i, q) = self.raw_output(x);
        for (c, v) in [i, q].iter().enumerate() {
            let m = dsp::mean(v);
            self.norm.running_mean[c] = m;
            self.norm.running_var[c] =
                v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64;
        }
    }

    /// Volterra text format followed by a `[norm]` section:
    /// `I|Q mean var gamma beta` and `eps <value>`.
    pub fn to_text(&self) -> String {
        let mut s = weights_to_string(&self.filter);
        s.push_str("[norm]\n");
        for trib in Tributary::BOTH {
            let c = trib.index();
            let b = &self.norm;
            let _ = writeln!(
                s,
                "{} {:e} {:e} {:e} {:e}",
                trib.label(),
                b.running_mean[c],
                b.running_var[c],
                b.gamma[c],
                b.beta[c]
            );
        }
        let _ = writeln!(s, "eps {:e}", self.norm.eps);
        s
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, reason: String| Error::Parse {
            path: origin.into(),
            line,
            reason,
        };
        let split = text.lines().position(|l| l.trim() == "[norm]");
        let Some(split) = split else {
            return Err(err(0, "missing [norm] section".into()));
        };
        let head: Vec<&str> = text.lines().take(split).collect();
        let mut net = DpdNetwork::new(parse_weights(&head.join("\n"), origin)?);
        for (k, line) in text.lines().enumerate().skip(split + 1) {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let nums: Vec<f64> = fields[1..]
                .iter()
                .map(|f| f64::from_str(f))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(k + 1, format!("bad number: {e}")))?;
            match (fields[0], nums.as_slice()) {
                ("eps", [e]) if *e > 0.0 => net.norm.eps = *e,
                ("I" | "Q", [m, v, g, b]) => {
                    let c = if fields[0] == "I" { 0 } else { 1 };
                    net.norm.running_mean[c] = *m;
                    net.norm.running_var[c] = *v;
                    net.norm.gamma[c] = *g;
                    net.norm.beta[c] = *b;
                }
                _ => return Err(err(k + 1, format!("unexpected norm line `{line}`"))),
            }
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?, &path.display().to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossPlane {
    /// MSE between matched-filtered, downsampled surrogate output and the
    /// transmit symbols.
    Symbol,
    /// MSE between the 2-sps surrogate output and the shaped input waveform.
    Waveform,
}

impl FromStr for LossPlane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symbol" => Ok(LossPlane::Symbol),
            "waveform" => Ok(LossPlane::Waveform),
            other => Err(Error::invalid(
                "loss_plane",
                format!("`{other}` is not symbol or waveform"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub num_train_symbols: usize,
    pub specs: Vec<KernelSpec>,
    pub ila_rounds: usize,
    /// Ridge relative to the mean squared feature column norm.
    pub ila_ridge: f64,
    pub dla_outer_rounds: usize,
    pub surrogate_epochs: usize,
    pub dpd_epochs: usize,
    pub lr: f64,
    /// Final over initial learning rate of the cosine schedule (1 = constant).
    pub lr_decay: f64,
    pub segment_len: usize,
    pub segment_edge: usize,
    pub loss_plane: LossPlane,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_train_symbols: 1 << 16,
            specs: KernelSpec::standard_set(),
            ila_rounds: 3,
            ila_ridge: 1e-9,
            dla_outer_rounds: 3,
            surrogate_epochs: 60,
            dpd_epochs: 60,
            lr: 3e-3,
            lr_decay: 0.01,
            segment_len: 2048,
            segment_edge: 128,
            loss_plane: LossPlane::Symbol,
            seed: 1,
        }
    }
}

impl TrainConfig {
    /// Learning rate for `epoch` of `epochs`: cosine from `lr` down to
    /// `lr * lr_decay` at the last epoch.
    pub fn lr_at(&self, epoch: usize, epochs: usize) -> f64 {
        let x = if epochs > 1 {
            epoch as f64 / (epochs - 1) as f64
        } else {
            1.0
        };
        let floor = self.lr * self.lr_decay;
        floor + (self.lr - floor) * 0.5 * (1.0 + (std::f64::consts::PI * x).cos())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_train_symbols", self.num_train_symbols),
            ("ila_rounds", self.ila_rounds),
            ("dla_outer_rounds", self.dla_outer_rounds),
            ("surrogate_epochs", self.surrogate_epochs),
            ("dpd_epochs", self.dpd_epochs),
            ("segment_len", self.segment_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid("lr", "must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid("lr_decay", "must be in (0, 1]"));
        }
        if !(self.ila_ridge >= 0.0) {
            return Err(Error::invalid("ila_ridge", "must be >= 0"));
        }
        if self.specs.is_empty() {
            return Err(Error::Empty("kernel specs"));
        }
        if 4 * self.segment_edge >= self.segment_len || !self.segment_len.is_multiple_of(2) {
            return Err(Error::invalid(
                "segment_len",
                "must be even and exceed four edge lengths",
            ));
        }
        if self.num_train_symbols * 2 < self.segment_len {
            return Err(Error::invalid(
                "num_train_symbols",
                "frame shorter than one segment",
            ));
        }
        Ok(())
    }
}

/// `(step, loss)` pairs of one training stage.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTrace {
    pub stage: String,
    pub points: Vec<(usize, f64)>,
}

impl LossTrace {
    pub fn new(stage: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            points: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "loss"])?;
        for (s, l) in &self.points {
            out.write_record([s.to_string(), format!("{l:e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedDpd {
    pub kind: DpdKind,
    pub network: DpdNetwork,
    pub traces: Vec<LossTrace>,
}

pub trait DpdTrainer: Send + Sync {
    fn kind(&self) -> DpdKind;
    fn train(&self, channel: &ChannelConfig, cfg: &TrainConfig) -> Result<TrainedDpd>;
}

/// No pre-distortion: a pass-through network calibrated on the training
/// frame.
pub struct NoDpd;

impl DpdTrainer for NoDpd {
    fn kind(&self) -> DpdKind {
        DpdKind::None
    }

    fn train(&self, _channel: &ChannelConfig, cfg: &TrainConfig) -> Result<TrainedDpd> {
        let frame = ila::training_frame(cfg)?;
        let mut network = DpdNetwork::identity(&KernelSpec::linear_set())?;
        network.calibrate_norm(&frame.shaped);
        Ok(TrainedDpd {
            kind: DpdKind::None,
            network,
            traces: Vec::new(),
        })
    }
}

pub struct LinearTrainer;

impl DpdTrainer for LinearTrainer {
    fn kind(&self) -> DpdKind {
        DpdKind::Linear
    }

    fn train(&self, channel: &ChannelConfig, cfg: &TrainConfig) -> Result<TrainedDpd> {
        train_linear_dpd(channel, cfg)
    }
}

pub struct IlaTrainer;

impl DpdTrainer for IlaTrainer {
    fn kind(&self) -> DpdKind {
        DpdKind::VolterraIla
    }

    fn train(&self, channel: &ChannelConfig, cfg: &TrainConfig) -> Result<TrainedDpd> {
        train_volterra_ila(channel, cfg)
    }
}

pub struct DlaTrainer;

impl DpdTrainer for DlaTrainer {
    fn kind(&self) -> DpdKind {
        DpdKind::VolterraDla
    }

    fn train(&self, channel: &ChannelConfig, cfg: &TrainConfig) -> Result<TrainedDpd> {
        run_dla(channel, cfg)
    }
}

#[derive(Clone, Default)]
pub struct TrainerRegistry {
    entries: BTreeMap<String, Arc<dyn DpdTrainer>>,
}

impl TrainerRegistry {
    /// `none`, `linear`, `volterra_ila` (alias `ila`) and `volterra_dla`
    /// (alias `dla`).
    pub fn standard() -> Self {
        let mut r = Self::default();
        r.register("none", Arc::new(NoDpd));
        r.register("linear", Arc::new(LinearTrainer));
        let ila: Arc<dyn DpdTrainer> = Arc::new(IlaTrainer);
        r.register("volterra_ila", ila.clone());
        r.register("ila", ila);
        let dla: Arc<dyn DpdTrainer> = Arc::new(DlaTrainer);
        r.register("volterra_dla", dla.clone());
        r.register("dla", dla);
        r
    }

    pub fn register(&mut self, name: &str, trainer: Arc<dyn DpdTrainer>) {
        self.entries.insert(name.to_string(), trainer);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn DpdTrainer>> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownMethod(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}
