use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use voldpd::dpd::{evaluate, Frame, TrainerRegistry};
use voldpd::harness::{self, ExperimentConfig, GridPoint};
use voldpd::metrics::DpdKind;
use voldpd::nn::standard_suite;
use voldpd::seed::{derive_path, stream};
use voldpd::signal::RrcFilter;

/// Volterra pre-distortion experiments for a simulated optical transmitter.
#[derive(Parser)]
#[command(name = "voldpd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every (back-off, SNR, method) point of a config.
    Sweep {
        /// Flat `key = value` config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Small frames, SNR 15/18/21 and one short DLA round.
        #[arg(long)]
        quick: bool,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        workers: Option<u32>,
        /// Overrides `output_dir` from the config and VOLDPD_OUTPUT_DIR.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Summarize a sweep directory.
    Report {
        dir: PathBuf,
        /// Exit nonzero unless the NMSE/GMI/histogram trend checks pass.
        #[arg(long)]
        check: bool,
    },
    /// Train one pre-distorter, save it with its loss traces and evaluate it.
    Train {
        #[arg(long)]
        dpd: DpdKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 3.0)]
        backoff: f64,
        #[arg(long, default_value_t = 18.0)]
        snr: f64,
        #[arg(long)]
        quick: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Finite-difference check of every layer's gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

type CliResult = Result<ExitCode, Box<dyn std::error::Error>>;

fn load_config(
    path: Option<&PathBuf>,
    quick: bool,
    output: Option<PathBuf>,
) -> Result<ExperimentConfig, voldpd::Error> {
    let mut cfg = match path {
        Some(p) => harness::parse_config(p)?,
        None => ExperimentConfig::default(),
    };
    if quick {
        cfg = cfg.quick();
    }
    if let Some(o) = output {
        cfg.output_dir = o;
    }
    Ok(cfg)
}

fn sweep(
    config: Option<PathBuf>,
    quick: bool,
    workers: Option<u32>,
    output: Option<PathBuf>,
) -> CliResult {
    let cfg = load_config(config.as_ref(), quick, output)?;
    let workers = workers.map_or_else(
        || std::thread::available_parallelism().map_or(1, |n| n.get()),
        |w| w as usize,
    );
    eprintln!(
        "sweep: {} points, {workers} worker(s), output {}",
        cfg.num_points(),
        cfg.output_dir.display()
    );
    let summary = harness::run_sweep(&cfg, workers, &TrainerRegistry::standard())?;
    println!(
        "wrote {} rows to {} ({} failed points)",
        summary.records.len(),
        summary.output_dir.join(harness::METRICS_FILE).display(),
        summary.errors.len()
    );
    Ok(if summary.errors.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn report(dir: PathBuf, check: bool) -> CliResult {
    let r = harness::load_report(&dir)?;
    print!("{}", r.table);
    if !check {
        return Ok(ExitCode::SUCCESS);
    }
    println!();
    for c in &r.checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(if r.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn train(
    dpd: DpdKind,
    config: Option<PathBuf>,
    backoff: f64,
    snr: f64,
    quick: bool,
    output: Option<PathBuf>,
) -> CliResult {
    let cfg = load_config(config.as_ref(), quick, output)?;
    let point = GridPoint {
        index: 0,
        backoff_db: backoff,
        snr_db: snr,
        dpd,
    };
    let (channel, train) = harness::point_configs(&cfg, &point);
    let trained = TrainerRegistry::standard()
        .get(dpd.name())?
        .train(&channel, &train)?;

    fs::create_dir_all(&cfg.output_dir)?;
    let weights = cfg.output_dir.join(format!("dpd_{}.txt", dpd.name()));
    trained.network.save(&weights)?;
    for t in &trained.traces {
        t.write_csv(BufWriter::new(File::create(
            cfg.output_dir.join(format!("loss_{}.csv", t.stage)),
        )?))?;
    }

    let (_, eval_seed) = harness::point_seeds(cfg.master_seed, backoff, snr);
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
    println!(
        "{dpd} at bo {backoff} dB, snr {snr} dB: nmse {:.2} dB, gmi {:.3} bits",
        ev.nmse_db, ev.gmi_bits
    );
    println!("weights: {}", weights.display());
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(seed: u64) -> CliResult {
    let reports = standard_suite(seed)?;
    let mut ok = true;
    for (name, r) in &reports {
        let pass = r.max_rel_error < 1e-5;
        ok &= pass;
        println!(
            "{} {name}: {} params, {} inputs, max rel error {:.2e}",
            if pass { "PASS" } else { "FAIL" },
            r.params_checked,
            r.inputs_checked,
            r.max_rel_error
        );
    }
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep {
            config,
            quick,
            workers,
            output,
        } => sweep(config, quick, workers, output),
        Command::Report { dir, check } => report(dir, check),
        Command::Train {
            dpd,
            config,
            backoff,
            snr,
            quick,
            output,
        } => train(dpd, config, backoff, snr, quick, output),
        Command::Gradcheck { seed } => gradcheck(seed),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
