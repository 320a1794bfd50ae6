//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Runs without the libtest harness so the lines
//! are always shown.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use voldpd::channel::{rapp_amplify, ChannelConfig, FirResponse, RappParams};
use voldpd::dpd::{score, transmit, Frame, TrainerRegistry};
use voldpd::harness::{self, ExperimentConfig, Report, OUTPUT_DIR_ENV};
use voldpd::metrics::{gmi_bits, DpdKind};
use voldpd::nn::standard_suite;
use voldpd::signal::{generate_qam_frame, RrcFilter};
use voldpd::volterra::{enumerate_terms, KernelSpec, VolterraFilter};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn criterion_1() -> Outcome {
    let v_sat = 1.3;
    let p = RappParams::new(v_sat).unwrap();
    let at_sat = rapp_amplify(&[v_sat], p)[0];
    let exact = v_sat / 2f64.powf(0.25);
    let grid: Vec<f64> = (-4000..=4000)
        .map(|k| k as f64 * 1e-3)
        .chain([1e6, -1e6, 1e-300])
        .collect();
    let out = rapp_amplify(&grid, p);
    let neg: Vec<f64> = grid.iter().map(|v| -v).collect();
    let out_neg = rapp_amplify(&neg, p);
    let odd = out.iter().zip(&out_neg).all(|(a, b)| a == &-b);
    let bounded = out
        .iter()
        .zip(&grid)
        .all(|(y, x)| y.abs() <= v_sat && y.abs() <= x.abs());
    let err = (at_sat - exact).abs();
    outcome(
        err < 1e-12 && odd && bounded,
        format!("|A(v_sat) - v_sat/2^(1/4)| = {err:.1e}, odd {odd}, bounded {bounded}"),
    )
}

fn criterion_2() -> Outcome {
    let reports = standard_suite(0).unwrap();
    let worst = reports
        .iter()
        .map(|(_, r)| r.max_rel_error)
        .fold(0.0, f64::max);
    let surrogate_params = reports
        .iter()
        .find(|(n, _)| n == "surrogate")
        .map_or(0, |(_, r)| r.params_checked);
    outcome(
        worst < 1e-5 && surrogate_params >= 200,
        format!(
            "{} checks, worst relative error {worst:.2e}, {surrogate_params} surrogate parameters",
            reports.len()
        ),
    )
}

/// Sorted delay tuples built recursively: anchor first, then co-factors that
/// never step back and stay within `depth` of the anchor.
fn reference_terms(spec: &KernelSpec) -> Vec<Vec<i32>> {
    fn extend(prefix: &mut Vec<i32>, left: usize, lo: i32, hi: i32, out: &mut Vec<Vec<i32>>) {
        if left == 0 {
            out.push(prefix.clone());
            return;
        }
        for d in lo..=hi {
            prefix.push(d);
            extend(prefix, left - 1, d, hi, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if spec.order == 1 {
        let half = (spec.memory / 2) as i32;
        return (-half..=half).map(|d| vec![d]).collect();
    }
    let m = spec.memory as i32;
    for anchor in -m..=m {
        let mut prefix = vec![anchor];
        extend(
            &mut prefix,
            spec.order - 1,
            anchor,
            anchor + spec.depth as i32,
            &mut out,
        );
    }
    out
}

fn criterion_3() -> Outcome {
    let mut mismatched = Vec::new();
    for spec in KernelSpec::standard_set() {
        let ours: Vec<Vec<i32>> = enumerate_terms(&spec)
            .unwrap()
            .iter()
            .map(|t| t.delays().to_vec())
            .collect();
        if ours != reference_terms(&spec) {
            mismatched.push(format!("{}/{}/{}", spec.order, spec.memory, spec.depth));
        }
    }
    let total = VolterraFilter::new(&KernelSpec::standard_set())
        .unwrap()
        .num_terms();
    outcome(
        mismatched.is_empty() && total == 457,
        format!("{total} terms per tributary, mismatched kernels {mismatched:?}"),
    )
}

fn criterion_4() -> Outcome {
    let ch = ChannelConfig {
        dac_response: FirResponse::identity(),
        da_response: FirResponse::identity(),
        mzm_gain_imbalance: 0.0,
        mzm_phase_imbalance_deg: 0.0,
        ..ChannelConfig::default()
    }
    .linearized();
    let rrc = RrcFilter::standard();
    let frame = Frame::generate(1 << 17, 404, &rrc).unwrap();
    let y = transmit(&frame.shaped, &ch, 405).unwrap();
    let nmse = score(&frame, &y, &rrc).unwrap().nmse_db;
    outcome(
        (nmse + 21.0).abs() <= 0.3,
        format!("{nmse:.2} dB at 18 dB SNR (target -21.0 +/- 0.3)"),
    )
}

fn trend_sweep(dir: &Path) -> Report {
    let cfg = ExperimentConfig {
        backoff_list: vec![7.0, 5.0, 3.0],
        snr_list: vec![18.0],
        dpd_kinds: vec![DpdKind::Linear, DpdKind::VolterraIla, DpdKind::VolterraDla],
        output_dir: dir.to_path_buf(),
        ..ExperimentConfig::default()
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let summary = harness::run_sweep(&cfg, workers, &TrainerRegistry::standard()).unwrap();
    assert!(
        summary.errors.is_empty(),
        "sweep errors: {:?}",
        summary.errors
    );
    harness::load_report(dir).unwrap()
}

fn from_checks(report: &Report, idx: &[usize]) -> Outcome {
    let picked: Vec<_> = idx.iter().map(|&k| &report.checks[k]).collect();
    outcome(
        picked.iter().all(|c| c.passed),
        picked
            .iter()
            .map(|c| format!("{} ({})", c.detail, if c.passed { "ok" } else { "fail" }))
            .collect::<Vec<_>>()
            .join("; "),
    )
}

fn criterion_8(report: &Report) -> Outcome {
    let frame = generate_qam_frame(1 << 12, 808).unwrap();
    let noiseless = gmi_bits(&frame.bits, &frame.symbols).unwrap();
    let rest = from_checks(report, &[5]);
    outcome(
        noiseless == 6.0 && rest.passed,
        format!("noiseless {noiseless:.3} bits; {}", rest.detail),
    )
}

fn quick_sweep(out: &Path, workers: usize, via_env: bool) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_voldpd"));
    cmd.args(["sweep", "--quick", "--workers", &workers.to_string()]);
    if via_env {
        cmd.env(OUTPUT_DIR_ENV, out);
    } else {
        cmd.arg("--output").arg(out);
    }
    let res = cmd.output().map_err(|e| e.to_string())?;
    if !res.status.success() {
        return Err(String::from_utf8_lossy(&res.stderr).into_owned());
    }
    Ok(())
}

fn criterion_10(root: &Path) -> Outcome {
    let (a, b) = (root.join("quick_a"), root.join("quick_b"));
    if let Err(e) = quick_sweep(&a, 1, true).and_then(|_| quick_sweep(&b, 2, false)) {
        return outcome(false, format!("sweep failed: {e}"));
    }
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok())
        .collect();
    let rows =
        std::fs::read_to_string(a.join(harness::METRICS_FILE)).map_or(0, |t| t.lines().count() - 1);
    outcome(
        differing.is_empty() && rows == 27,
        format!(
            "{} csv files, {rows} metric rows, differing {differing:?}",
            names.len()
        ),
    )
}

fn main() {
    // `cargo test -- <filter>` style arguments are accepted and ignored
    let root = tempfile::tempdir().unwrap();
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut run = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "criterion {n:>2} {} {name}: {} [{secs:.1} s]",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o, secs));
    };
    run(1, "rapp analytic values", &mut criterion_1);
    run(2, "gradient checks", &mut criterion_2);
    run(3, "volterra term counts", &mut criterion_3);
    run(4, "noise floor calibration", &mut criterion_4);

    let trend_dir = root.path().join("trend");
    let t = Instant::now();
    let report = trend_sweep(&trend_dir);
    println!(
        "trend sweep (bo 7/5/3, snr 18, linear/ila/dla) took {:.0} s",
        t.elapsed().as_secs_f64()
    );
    print!("{}", report.table);
    run(5, "weak nonlinearity gain over linear", &mut || {
        from_checks(&report, &[0])
    });
    run(6, "strong nonlinearity ordering and gaps", &mut || {
        from_checks(&report, &[1, 2, 3])
    });
    run(7, "robustness from bo 5 to 3", &mut || {
        from_checks(&report, &[4])
    });
    run(8, "gmi sanity", &mut || criterion_8(&report));
    run(9, "histogram modes", &mut || from_checks(&report, &[6]));
    run(10, "quick sweep determinism", &mut || {
        criterion_10(root.path())
    });

    let failed: Vec<usize> = results
        .iter()
        .filter(|r| !r.2.passed)
        .map(|r| r.0)
        .collect();
    println!(
        "acceptance: {} of {} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(", failed {failed:?}")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
