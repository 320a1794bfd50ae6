//! Summary tables and threshold checks over a finished sweep directory.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use super::sweep::{histogram_file_name, read_records, METRICS_FILE};
use crate::error::{Error, Result};
use crate::metrics::{DpdKind, Histogram, MetricRecord};

/// SNRs shown in the table when present in the sweep.
const TABLE_SNRS: [f64; 3] = [15.0, 18.0, 21.0];
const CHECK_SNR: f64 = 18.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub records: Vec<MetricRecord>,
    pub table: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

fn find(records: &[MetricRecord], bo: f64, snr: f64, dpd: DpdKind) -> Option<&MetricRecord> {
    records
        .iter()
        .find(|r| same(r.backoff_db, bo) && same(r.snr_db, snr) && r.dpd == dpd)
}

pub fn load_report(dir: &Path) -> Result<Report> {
    let path = dir.join(METRICS_FILE);
    if !path.exists() {
        return Err(Error::Format(format!("{} not found", path.display())));
    }
    let records = read_records(&path)?;
    if records.is_empty() {
        return Err(Error::Empty("metrics.csv has no rows"));
    }
    let table = render_table(&records);
    let checks = run_checks(&records, dir);
    Ok(Report {
        records,
        table,
        checks,
    })
}

fn render_table(records: &[MetricRecord]) -> String {
    let mut kinds: Vec<DpdKind> = records.iter().map(|r| r.dpd).collect();
    kinds.sort();
    kinds.dedup();
    let mut bos: Vec<f64> = Vec::new();
    let mut snrs: Vec<f64> = Vec::new();
    for r in records {
        if !bos.iter().any(|&b| same(b, r.backoff_db)) {
            bos.push(r.backoff_db);
        }
        if !snrs.iter().any(|&s| same(s, r.snr_db)) {
            snrs.push(r.snr_db);
        }
    }
    let picked: Vec<f64> = TABLE_SNRS
        .iter()
        .copied()
        .filter(|&s| snrs.iter().any(|&x| same(x, s)))
        .collect();
    let snrs = if picked.is_empty() { snrs } else { picked };
    let gap = kinds.contains(&DpdKind::VolterraIla) && kinds.contains(&DpdKind::VolterraDla);

    let mut s = String::new();
    let _ = write!(s, "{:>7} {:>7}", "bo_db", "snr_db");
    for k in &kinds {
        let _ = write!(s, " {:>14}", format!("nmse_{}", short(*k)));
    }
    if gap {
        let _ = write!(s, " {:>9}", "gap_db");
    }
    for k in &kinds {
        let _ = write!(s, " {:>13}", format!("gmi_{}", short(*k)));
    }
    s.push('\n');
    for &bo in &bos {
        for &snr in &snrs {
            let _ = write!(s, "{bo:>7} {snr:>7}");
            let cell = |k: DpdKind, f: fn(&MetricRecord) -> f64| find(records, bo, snr, k).map(f);
            for &k in &kinds {
                let _ = write!(s, " {:>14}", fmt_opt(cell(k, |r| r.nmse_db), 2));
            }
            if gap {
                let g = cell(DpdKind::VolterraIla, |r| r.nmse_db)
                    .zip(cell(DpdKind::VolterraDla, |r| r.nmse_db))
                    .map(|(i, d)| i - d);
                let _ = write!(s, " {:>9}", fmt_opt(g, 2));
            }
            for &k in &kinds {
                let _ = write!(s, " {:>13}", fmt_opt(cell(k, |r| r.gmi_bits), 3));
            }
            s.push('\n');
        }
    }
    if gap {
        s.push_str("gap_db = nmse(ila) - nmse(dla)\n");
    }
    s
}

fn short(k: DpdKind) -> &'static str {
    match k {
        DpdKind::None => "none",
        DpdKind::Linear => "linear",
        DpdKind::VolterraIla => "ila",
        DpdKind::VolterraDla => "dla",
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.digits$}"))
}

fn check(name: &'static str, result: std::result::Result<(bool, String), String>) -> Check {
    match result {
        Ok((passed, detail)) => Check {
            name,
            passed,
            detail,
        },
        Err(detail) => Check {
            name,
            passed: false,
            detail,
        },
    }
}

/// The relative-trend thresholds at 18 dB SNR.
pub fn run_checks(records: &[MetricRecord], dir: &Path) -> Vec<Check> {
    let get = |bo: f64, dpd: DpdKind| -> std::result::Result<&MetricRecord, String> {
        find(records, bo, CHECK_SNR, dpd)
            .ok_or_else(|| format!("missing point bo {bo} snr {CHECK_SNR} {dpd}"))
    };
    let nmse = |bo: f64, dpd: DpdKind| get(bo, dpd).map(|r| r.nmse_db);
    use DpdKind::{Linear, VolterraDla as Dla, VolterraIla as Ila};
    vec![
        check(
            "weak nonlinearity: linear - dla at bo 7 in [0.3, 1.5] dB",
            {
                (|| {
                    let d = nmse(7.0, Linear)? - nmse(7.0, Dla)?;
                    Ok(((0.3..=1.5).contains(&d), format!("{d:.3} dB")))
                })()
            },
        ),
        check("strong nonlinearity: linear > ila > dla at bo 3", {
            (|| {
                let (l, i, d) = (nmse(3.0, Linear)?, nmse(3.0, Ila)?, nmse(3.0, Dla)?);
                Ok((l > i && i > d, format!("{l:.3} / {i:.3} / {d:.3} dB")))
            })()
        }),
        check("strong nonlinearity: ila - dla at bo 3 >= 0.5 dB", {
            (|| {
                let g = nmse(3.0, Ila)? - nmse(3.0, Dla)?;
                Ok((g >= 0.5, format!("{g:.3} dB")))
            })()
        }),
        check("strong nonlinearity: linear - ila at bo 3 >= 1.0 dB", {
            (|| {
                let g = nmse(3.0, Linear)? - nmse(3.0, Ila)?;
                Ok((g >= 1.0, format!("{g:.3} dB")))
            })()
        }),
        check(
            "robustness: bo 5 -> 3 degradation, dla <= 0.6 dB and linear >= 1.0 dB",
            {
                (|| {
                    let dd = nmse(3.0, Dla)? - nmse(5.0, Dla)?;
                    let dl = nmse(3.0, Linear)? - nmse(5.0, Linear)?;
                    Ok((
                        dd <= 0.6 && dl >= 1.0,
                        format!("dla {dd:.3} dB, linear {dl:.3} dB"),
                    ))
                })()
            },
        ),
        check("gmi at bo 3: dla >= ila and dla >= 5.6 bits", {
            (|| {
                let (i, d) = (get(3.0, Ila)?.gmi_bits, get(3.0, Dla)?.gmi_bits);
                Ok((d >= i && d >= 5.6, format!("ila {i:.3}, dla {d:.3} bits")))
            })()
        }),
        check(
            "histogram at bo 3: dla modes resolvable and deeper than ila",
            {
                (|| {
                    let load = |k: DpdKind| -> std::result::Result<f64, String> {
                        let path = dir.join(histogram_file_name(3.0, CHECK_SNR, k));
                        let f =
                            File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                        Ok(Histogram::read_csv(f)
                            .map_err(|e| format!("{}: {e}", path.display()))?
                            .valley_to_peak())
                    };
                    let (i, d) = (load(Ila)?, load(Dla)?);
                    Ok((
                        d < 0.5 && d < i,
                        format!("valley/peak ila {i:.3}, dla {d:.3}"),
                    ))
                })()
            },
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::sweep::write_records;

    fn rec(bo: f64, dpd: DpdKind, nmse_db: f64, gmi_bits: f64) -> MetricRecord {
        MetricRecord {
            backoff_db: bo,
            snr_db: 18.0,
            dpd,
            nmse_db,
            gmi_bits,
            train_seed: 1,
            eval_seed: 2,
            config_hash: "x".into(),
        }
    }

    fn passing() -> Vec<MetricRecord> {
        use DpdKind::*;
        vec![
            rec(7.0, Linear, -20.3, 5.8),
            rec(7.0, VolterraIla, -20.5, 5.82),
            rec(7.0, VolterraDla, -20.9, 5.87),
            rec(5.0, Linear, -19.3, 5.7),
            rec(5.0, VolterraIla, -20.0, 5.8),
            rec(5.0, VolterraDla, -20.8, 5.86),
            rec(3.0, Linear, -17.7, 5.5),
            rec(3.0, VolterraIla, -19.5, 5.82),
            rec(3.0, VolterraDla, -20.5, 5.85),
        ]
    }

    #[test]
    fn table_has_gap_column() {
        let t = render_table(&passing());
        assert!(t.contains("gap_db"));
        let row = t
            .lines()
            .find(|l| l.trim_start().starts_with("3 "))
            .unwrap();
        assert!(row.contains("1.00"), "{row}");
    }

    #[test]
    fn checks_pass_and_fail() {
        let dir = tempfile::tempdir().unwrap();
        let checks = run_checks(&passing(), dir.path());
        // everything but the histogram, whose files are absent
        assert!(checks[..6].iter().all(|c| c.passed), "{checks:?}");
        assert!(!checks[6].passed && checks[6].detail.contains("histogram_bo3_snr18"));

        let mut bad = passing();
        bad[8].nmse_db = -19.6;
        let checks = run_checks(&bad, dir.path());
        assert!(!checks[2].passed);
        assert!(!run_checks(&bad[..3], dir.path())[1].passed);
    }

    #[test]
    fn load_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_report(dir.path()).is_err());
        let path = dir.path().join(METRICS_FILE);
        write_records(File::create(&path).unwrap(), &passing()).unwrap();
        let r = load_report(dir.path()).unwrap();
        assert_eq!(r.records.len(), 9);
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replacen("-17.7", "-17.7x", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_report(dir.path()), Err(Error::Parse { .. })));
    }
}
