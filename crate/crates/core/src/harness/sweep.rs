//! Grid sweep over back-off x SNR x DPD method.
//!
//! Seeds per grid point: `train_seed = derive_path(master, [TRAIN, mB, mS])`
//! and `eval_seed = derive_path(master, [EVAL, mB, mS])`, where `mB`, `mS` are
//! the back-off and SNR in milli-dB. All methods at one point share the
//! training seed, so they see the same training symbols and noise, and the
//! seeds do not depend on the order of the lists.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use super::config::ExperimentConfig;
use crate::channel::ChannelConfig;
use crate::dpd::{evaluate, Evaluation, Frame, TrainConfig, TrainerRegistry};
use crate::error::{Error, Result};
use crate::metrics::{histogram_real, DpdKind, MetricRecord};
use crate::seed::{derive_path, stream};
use crate::signal::RrcFilter;

pub const METRICS_FILE: &str = "metrics.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const CONFIG_FILE: &str = "config.txt";
/// Bumped whenever the metrics columns change.
pub const SCHEMA_VERSION: u32 = 1;
pub const METRICS_HEADER: [&str; 8] = [
    "backoff_db",
    "snr_db",
    "dpd",
    "nmse_db",
    "gmi_bits",
    "train_seed",
    "eval_seed",
    "config_hash",
];
const ERRORS_HEADER: [&str; 4] = ["backoff_db", "snr_db", "dpd", "error"];
const PARTS_DIR: &str = "parts";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub backoff_db: f64,
    pub snr_db: f64,
    pub dpd: DpdKind,
}

/// Grid in back-off, SNR, method order.
pub fn grid(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let mut out = Vec::with_capacity(cfg.num_points());
    for &backoff_db in &cfg.backoff_list {
        for &snr_db in &cfg.snr_list {
            for &dpd in &cfg.dpd_kinds {
                out.push(GridPoint {
                    index: out.len(),
                    backoff_db,
                    snr_db,
                    dpd,
                });
            }
        }
    }
    out
}

fn milli(v: f64) -> u64 {
    (v * 1000.0).round() as i64 as u64
}

/// `(train_seed, eval_seed)` of a grid point.
pub fn point_seeds(master: u64, backoff_db: f64, snr_db: f64) -> (u64, u64) {
    let (b, s) = (milli(backoff_db), milli(snr_db));
    (
        derive_path(master, &[stream::TRAIN, b, s]),
        derive_path(master, &[stream::EVAL, b, s]),
    )
}

pub fn histogram_file_name(backoff_db: f64, snr_db: f64, dpd: DpdKind) -> String {
    format!("histogram_bo{backoff_db}_snr{snr_db}_{}.csv", dpd.name())
}

/// Transmitter and training settings of one grid point.
pub fn point_configs(cfg: &ExperimentConfig, p: &GridPoint) -> (ChannelConfig, TrainConfig) {
    let (train_seed, _) = point_seeds(cfg.master_seed, p.backoff_db, p.snr_db);
    let channel = ChannelConfig {
        da_backoff_db: p.backoff_db,
        snr_db: p.snr_db,
        ..cfg.channel.clone()
    };
    let train = TrainConfig {
        seed: train_seed,
        ..cfg.train.clone()
    };
    (channel, train)
}

/// Train and evaluate one grid point.
pub fn run_point(
    cfg: &ExperimentConfig,
    p: &GridPoint,
    registry: &TrainerRegistry,
) -> Result<(MetricRecord, Evaluation)> {
    let (train_seed, eval_seed) = point_seeds(cfg.master_seed, p.backoff_db, p.snr_db);
    let (channel, train) = point_configs(cfg, p);
    let trained = registry.get(p.dpd.name())?.train(&channel, &train)?;
    let rrc = RrcFilter::standard();
    let frame = Frame::generate(
        cfg.eval_symbols,
        derive_path(eval_seed, &[stream::FRAME]),
        &rrc,
    )?;
    let ev = evaluate(
        &trained.network,
        &channel,
        &frame,
        &rrc,
        derive_path(eval_seed, &[stream::NOISE]),
    )?;
    let record = MetricRecord {
        backoff_db: p.backoff_db,
        snr_db: p.snr_db,
        dpd: p.dpd,
        nmse_db: ev.nmse_db,
        gmi_bits: ev.gmi_bits,
        train_seed,
        eval_seed,
        config_hash: cfg.hash(),
    };
    Ok((record, ev))
}

pub fn record_fields(r: &MetricRecord) -> [String; 8] {
    [
        format!("{}", r.backoff_db),
        format!("{}", r.snr_db),
        r.dpd.name().to_string(),
        format!("{:.4}", r.nmse_db),
        format!("{:.4}", r.gmi_bits),
        r.train_seed.to_string(),
        r.eval_seed.to_string(),
        r.config_hash.clone(),
    ]
}

/// Parse rows written by [`write_records`]; errors name the line.
pub fn read_records(path: &Path) -> Result<Vec<MetricRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("unexpected header {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let line = k + 2;
        let err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let row = row.map_err(|e| err(e.to_string()))?;
        let f = |i: usize| row.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            f(i).parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    err(format!(
                        "column {} is not a finite number: `{}`",
                        METRICS_HEADER[i],
                        f(i)
                    ))
                })
        };
        let int = |i: usize| -> Result<u64> {
            f(i).parse().map_err(|_| {
                err(format!(
                    "column {} is not an integer: `{}`",
                    METRICS_HEADER[i],
                    f(i)
                ))
            })
        };
        out.push(MetricRecord {
            backoff_db: num(0)?,
            snr_db: num(1)?,
            dpd: f(2).parse().map_err(|e: Error| err(e.to_string()))?,
            nmse_db: num(3)?,
            gmi_bits: num(4)?,
            train_seed: int(5)?,
            eval_seed: int(6)?,
            config_hash: f(7).to_string(),
        });
    }
    Ok(out)
}

pub fn write_records<W: Write>(w: W, records: &[MetricRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(METRICS_HEADER)?;
    for r in records {
        out.write_record(record_fields(r))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointError {
    pub point: GridPoint,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub output_dir: PathBuf,
    pub records: Vec<MetricRecord>,
    pub errors: Vec<PointError>,
}

/// Run every grid point on `workers` threads. Each worker appends to its own
/// part file; parts are merged in grid order once all workers finish, so the
/// outputs do not depend on scheduling. Failing points go to `errors.csv`.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    workers: usize,
    registry: &TrainerRegistry,
) -> Result<SweepSummary> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    let parts = dir.join(PARTS_DIR);
    fs::create_dir_all(&parts)?;
    let mut manifest = format!("# voldpd sweep, metrics schema v{SCHEMA_VERSION}\n");
    manifest.push_str(&cfg.canonical_text());
    fs::write(dir.join(CONFIG_FILE), manifest)?;

    let points = grid(cfg);
    let workers = workers.clamp(1, points.len().max(1));
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|s| {
        for w in 0..workers {
            let (points, next, failure, parts) = (&points, &next, &failure, &parts);
            s.spawn(move || {
                if let Err(e) = worker(
                    cfg,
                    registry,
                    points,
                    next,
                    &parts.join(format!("worker-{w}.csv")),
                ) {
                    failure.lock().unwrap().get_or_insert(e);
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }

    let (records, errors) = merge_parts(&parts, &points)?;
    write_records(
        BufWriter::new(File::create(dir.join(METRICS_FILE))?),
        &records,
    )?;
    let mut out = csv::Writer::from_path(dir.join(ERRORS_FILE))?;
    out.write_record(ERRORS_HEADER)?;
    for e in &errors {
        out.write_record([
            format!("{}", e.point.backoff_db),
            format!("{}", e.point.snr_db),
            e.point.dpd.name().to_string(),
            e.message.clone(),
        ])?;
    }
    out.flush()?;
    fs::remove_dir_all(&parts)?;
    Ok(SweepSummary {
        output_dir: dir,
        records,
        errors,
    })
}

// part rows: index, ok|err, then the record fields or the message
fn worker(
    cfg: &ExperimentConfig,
    registry: &TrainerRegistry,
    points: &[GridPoint],
    next: &AtomicUsize,
    part: &Path,
) -> Result<()> {
    let mut out = csv::Writer::from_path(part)?;
    loop {
        let k = next.fetch_add(1, Ordering::Relaxed);
        let Some(p) = points.get(k) else { break };
        let t = Instant::now();
        match run_point(cfg, p, registry) {
            Ok((record, ev)) => {
                if (p.backoff_db, p.snr_db) == cfg.histogram_point {
                    let h = histogram_real(&ev.aligned, cfg.histogram_bins)?;
                    let name = histogram_file_name(p.backoff_db, p.snr_db, p.dpd);
                    h.write_csv(BufWriter::new(File::create(cfg.output_dir.join(name))?))?;
                }
                eprintln!(
                    "[{}/{}] bo {} snr {} {}: nmse {:.2} dB, gmi {:.3} ({:.1} s)",
                    k + 1,
                    points.len(),
                    p.backoff_db,
                    p.snr_db,
                    p.dpd,
                    record.nmse_db,
                    record.gmi_bits,
                    t.elapsed().as_secs_f64()
                );
                let mut row = vec![k.to_string(), "ok".into()];
                row.extend(record_fields(&record));
                out.write_record(&row)?;
            }
            Err(e) => {
                eprintln!(
                    "[{}/{}] bo {} snr {} {}: failed: {e}",
                    k + 1,
                    points.len(),
                    p.backoff_db,
                    p.snr_db,
                    p.dpd
                );
                out.write_record([k.to_string(), "err".into(), e.to_string()])?;
            }
        }
        out.flush()?;
    }
    Ok(())
}

fn merge_parts(parts: &Path, points: &[GridPoint]) -> Result<(Vec<MetricRecord>, Vec<PointError>)> {
    let mut rows: Vec<(usize, std::result::Result<Vec<String>, String>)> = Vec::new();
    let mut names: Vec<PathBuf> = fs::read_dir(parts)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    names.sort();
    for name in names {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_path(&name)?;
        for rec in rdr.records() {
            let rec = rec?;
            let idx: usize = rec
                .get(0)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad part row in {}", name.display())))?;
            let body = match rec.get(1) {
                Some("ok") => Ok(rec.iter().skip(2).map(str::to_string).collect()),
                _ => Err(rec.get(2).unwrap_or("").to_string()),
            };
            rows.push((idx, body));
        }
    }
    rows.sort_by_key(|r| r.0);
    if rows.len() != points.len() {
        return Err(Error::Format(format!(
            "{} of {} grid points reported",
            rows.len(),
            points.len()
        )));
    }
    let mut tmp = Vec::new();
    let mut errors = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut tmp);
        w.write_record(METRICS_HEADER)?;
        for (idx, body) in &rows {
            match body {
                Ok(fields) => w.write_record(fields)?,
                Err(message) => errors.push(PointError {
                    point: points[*idx],
                    message: message.clone(),
                }),
            }
        }
        w.flush()?;
    }
    let dir = parts.parent().unwrap_or(parts);
    let merged = dir.join(format!("{METRICS_FILE}.tmp"));
    fs::write(&merged, &tmp)?;
    let records = read_records(&merged);
    fs::remove_file(&merged)?;
    Ok((records?, errors))
}
