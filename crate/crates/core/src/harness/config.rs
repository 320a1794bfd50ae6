//! Flat `key = value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment, lists are comma separated.
//! Keys that are not set keep their defaults; unknown keys are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::channel::ChannelConfig;
use crate::dpd::{LossPlane, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics::DpdKind;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "VOLDPD_OUTPUT_DIR";

const MIN_EVAL_SYMBOLS: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub backoff_list: Vec<f64>,
    pub snr_list: Vec<f64>,
    pub dpd_kinds: Vec<DpdKind>,
    pub eval_symbols: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// `(back-off, SNR)` at which received-symbol histograms are written.
    pub histogram_point: (f64, f64),
    pub histogram_bins: usize,
    /// Training settings shared by every grid point; `seed` is replaced per point.
    pub train: TrainConfig,
    /// Transmitter settings; back-off, SNR and noise seed are replaced per point.
    pub channel: ChannelConfig,
}

/// SNR grid of the reference sweep: 0.33 dB steps from 15 dB, then sparse.
pub fn default_snr_list() -> Vec<f64> {
    let mut snr: Vec<f64> = (0..=24)
        .map(|k| (1500.0 + 33.0 * k as f64) / 100.0)
        .collect();
    snr.extend([24.0, 25.0, 30.0, 35.0]);
    snr
}

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("voldpd-out"))
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            backoff_list: vec![7.0, 5.0, 3.0],
            snr_list: default_snr_list(),
            dpd_kinds: vec![DpdKind::Linear, DpdKind::VolterraIla, DpdKind::VolterraDla],
            eval_symbols: 1 << 17,
            master_seed: 1,
            output_dir: default_output_dir(),
            histogram_point: (3.0, 18.0),
            histogram_bins: 200,
            train: TrainConfig::default(),
            channel: ChannelConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// The CI profile: small frames, three SNR points, one DLA round.
    pub fn quick(mut self) -> Self {
        self.train.num_train_symbols = 1 << 14;
        self.eval_symbols = MIN_EVAL_SYMBOLS;
        self.snr_list = vec![15.0, 18.0, 21.0];
        self.train.dla_outer_rounds = 1;
        self.train.surrogate_epochs = 20;
        self.train.dpd_epochs = 20;
        self
    }

    pub fn num_points(&self) -> usize {
        self.backoff_list.len() * self.snr_list.len() * self.dpd_kinds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.backoff_list.is_empty() {
            return Err(Error::Empty("backoff_list"));
        }
        if self.snr_list.is_empty() {
            return Err(Error::Empty("snr_list"));
        }
        if self.dpd_kinds.is_empty() {
            return Err(Error::Empty("dpd"));
        }
        if self
            .backoff_list
            .iter()
            .chain(&self.snr_list)
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid(
                "backoff_list/snr_list",
                "values must be finite",
            ));
        }
        if self.backoff_list.iter().any(|&b| b <= 0.0) {
            return Err(Error::invalid("backoff_list", "back-offs must be positive"));
        }
        if self.eval_symbols < MIN_EVAL_SYMBOLS {
            return Err(Error::invalid(
                "eval_symbols",
                format!("must be at least {MIN_EVAL_SYMBOLS}"),
            ));
        }
        if self.histogram_bins < 8 {
            return Err(Error::invalid("histogram_bins", "must be at least 8"));
        }
        self.train.validate()?;
        self.channel.validate()
    }

    /// Canonical text of every setting that affects results (not the output
    /// directory).
    pub fn canonical_text(&self) -> String {
        let t = &self.train;
        let c = &self.channel;
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        let _ = writeln!(s, "backoff_list = {}", list(&self.backoff_list));
        let _ = writeln!(s, "snr_list = {}", list(&self.snr_list));
        let kinds: Vec<&str> = self.dpd_kinds.iter().map(|k| k.name()).collect();
        let _ = writeln!(s, "dpd = {}", kinds.join(","));
        let _ = writeln!(s, "train_symbols = {}", t.num_train_symbols);
        let _ = writeln!(s, "eval_symbols = {}", self.eval_symbols);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(
            s,
            "histogram_point = {},{}",
            self.histogram_point.0, self.histogram_point.1
        );
        let _ = writeln!(s, "histogram_bins = {}", self.histogram_bins);
        let _ = writeln!(s, "ila_rounds = {}", t.ila_rounds);
        let _ = writeln!(s, "ila_ridge = {:e}", t.ila_ridge);
        let _ = writeln!(s, "dla_rounds = {}", t.dla_outer_rounds);
        let _ = writeln!(s, "surrogate_epochs = {}", t.surrogate_epochs);
        let _ = writeln!(s, "dpd_epochs = {}", t.dpd_epochs);
        let _ = writeln!(s, "lr = {:e}", t.lr);
        let _ = writeln!(s, "lr_decay = {:e}", t.lr_decay);
        let _ = writeln!(s, "segment_len = {}", t.segment_len);
        let _ = writeln!(s, "segment_edge = {}", t.segment_edge);
        let plane = match t.loss_plane {
            LossPlane::Symbol => "symbol",
            LossPlane::Waveform => "waveform",
        };
        let _ = writeln!(s, "loss_plane = {plane}");
        let specs: Vec<String> = t
            .specs
            .iter()
            .map(|k| format!("{}/{}/{}", k.order, k.memory, k.depth))
            .collect();
        let _ = writeln!(s, "kernels = {}", specs.join(","));
        let _ = writeln!(s, "dac_backoff = {}", c.dac_backoff_db);
        let _ = writeln!(s, "mzm_backoff = {}", c.mzm_backoff_db);
        let _ = writeln!(s, "dac_bits = {}", c.dac_bits);
        let _ = writeln!(s, "mzm_gain_imbalance = {}", c.mzm_gain_imbalance);
        let _ = writeln!(s, "mzm_phase_imbalance = {}", c.mzm_phase_imbalance_deg);
        let _ = writeln!(s, "bypass_nonlinearities = {}", c.bypass_nonlinearities);
        s
    }

    /// First 16 hex digits of the SHA-256 of [`canonical_text`](Self::canonical_text).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, path)
}

/// Parse config text; `origin` is only used in error messages.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| Error::Parse {
            path: origin.to_path_buf(),
            line: n + 1,
            reason,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        apply(&mut cfg, key, value).map_err(err)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse()
        .map_err(|_| format!("`{key}`: cannot parse `{v}`"))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|x| num(key, x.trim())).collect()
}

fn apply(cfg: &mut ExperimentConfig, key: &str, v: &str) -> std::result::Result<(), String> {
    let t = &mut cfg.train;
    let c = &mut cfg.channel;
    match key {
        "backoff_list" | "da_backoff" => cfg.backoff_list = list(key, v)?,
        "snr_list" | "snr" => cfg.snr_list = list(key, v)?,
        "dpd" | "dpd_kinds" => {
            cfg.dpd_kinds = v
                .split(',')
                .map(|x| x.trim().parse::<DpdKind>().map_err(|e| e.to_string()))
                .collect::<std::result::Result<_, _>>()?
        }
        "train_symbols" => t.num_train_symbols = num(key, v)?,
        "eval_symbols" => cfg.eval_symbols = num(key, v)?,
        "master_seed" | "seed" => cfg.master_seed = num(key, v)?,
        "output_dir" => cfg.output_dir = PathBuf::from(v),
        "histogram_point" => match list::<f64>(key, v)?.as_slice() {
            &[bo, snr] => cfg.histogram_point = (bo, snr),
            _ => return Err(format!("`{key}` takes `back-off, snr`")),
        },
        "histogram_bins" => cfg.histogram_bins = num(key, v)?,
        "ila_rounds" => t.ila_rounds = num(key, v)?,
        "ila_ridge" => t.ila_ridge = num(key, v)?,
        "dla_rounds" => t.dla_outer_rounds = num(key, v)?,
        "surrogate_epochs" => t.surrogate_epochs = num(key, v)?,
        "dpd_epochs" => t.dpd_epochs = num(key, v)?,
        "lr" => t.lr = num(key, v)?,
        "lr_decay" => t.lr_decay = num(key, v)?,
        "segment_len" => t.segment_len = num(key, v)?,
        "segment_edge" => t.segment_edge = num(key, v)?,
        "loss_plane" => t.loss_plane = v.parse().map_err(|e: Error| e.to_string())?,
        "dac_backoff" => c.dac_backoff_db = num(key, v)?,
        "mzm_backoff" => c.mzm_backoff_db = num(key, v)?,
        "dac_bits" => c.dac_bits = num(key, v)?,
        "mzm_gain_imbalance" => c.mzm_gain_imbalance = num(key, v)?,
        "mzm_phase_imbalance" => c.mzm_phase_imbalance_deg = num(key, v)?,
        "bypass_nonlinearities" => c.bypass_nonlinearities = num(key, v)?,
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}
