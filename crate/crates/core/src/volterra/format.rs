//! Text format for Volterra weights.
//!
//! ```text
//! # comment
//! kernel 1 121 0        order memory depth, one line per kernel
//! kernel 3 10 4
//! [I]
//! -60 1.5e-3            comma-separated delays, then the weight
//! 0,0,1 -2e-2
//! [Q]
//! ...
//! ```
//!
//! Terms missing from a section read as zero. Weights are written in the
//! shortest form that parses back to the same `f64`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{KernelSpec, Term, Tributary, VolterraFilter};
use crate::error::{Error, Result};

pub fn weights_to_string(filter: &VolterraFilter) -> String {
    let mut s = String::new();
    for spec in filter.specs() {
        let _ = writeln!(s, "kernel {} {} {}", spec.order, spec.memory, spec.depth);
    }
    for trib in Tributary::BOTH {
        let _ = writeln!(s, "[{}]", trib.label());
        for (t, w) in filter.terms().iter().zip(filter.weights(trib)) {
            let delays: Vec<String> = t.delays().iter().map(i32::to_string).collect();
            let _ = writeln!(s, "{} {:e}", delays.join(","), w);
        }
    }
    s
}

pub fn write_weights(path: &Path, filter: &VolterraFilter) -> Result<()> {
    std::fs::write(path, weights_to_string(filter))?;
    Ok(())
}

pub fn read_weights(path: &Path) -> Result<VolterraFilter> {
    let text = std::fs::read_to_string(path)?;
    parse_weights(&text, &path.display().to_string())
}

pub fn parse_weights(text: &str, origin: &str) -> Result<VolterraFilter> {
    let err = |line: usize, reason: String| Error::Parse {
        path: origin.into(),
        line,
        reason,
    };
    let mut specs = Vec::new();
    let mut filter: Option<VolterraFilter> = None;
    let mut index: HashMap<Term, usize> = HashMap::new();
    let mut section: Option<Tributary> = None;

    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("kernel") {
            if filter.is_some() {
                return Err(err(line_no, "kernel line after weights".into()));
            }
            let nums: Vec<usize> = rest
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(line_no, format!("bad kernel line: {e}")))?;
            let [order, memory, depth] = nums[..] else {
                return Err(err(line_no, "kernel needs order, memory and depth".into()));
            };
            specs.push(
                KernelSpec::new(order, memory, depth).map_err(|e| err(line_no, e.to_string()))?,
            );
            continue;
        }
        if line.starts_with('[') {
            section = match line {
                "[I]" => Some(Tributary::I),
                "[Q]" => Some(Tributary::Q),
                other => return Err(err(line_no, format!("unknown section {other}"))),
            };
            if filter.is_none() {
                let f = VolterraFilter::new(&specs).map_err(|e| err(line_no, e.to_string()))?;
                index = f.terms().iter().enumerate().map(|(i, t)| (*t, i)).collect();
                filter = Some(f);
            }
            continue;
        }
        let (Some(trib), Some(f)) = (section, filter.as_mut()) else {
            return Err(err(line_no, "weight line outside a section".into()));
        };
        let mut parts = line.split_whitespace();
        let (Some(delays), Some(weight), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err(line_no, "expected `delays weight`".into()));
        };
        let delays: Vec<i32> = delays
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(line_no, format!("bad delay: {e}")))?;
        let term = Term::new(&delays).map_err(|e| err(line_no, e.to_string()))?;
        let weight: f64 = weight
            .parse()
            .map_err(|e| err(line_no, format!("bad weight: {e}")))?;
        let &i = index
            .get(&term)
            .ok_or_else(|| err(line_no, format!("term {delays:?} not in the kernels")))?;
        f.weights_mut(trib)[i] = weight;
    }
    filter.ok_or_else(|| err(0, "no weight sections".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout() {
        let mut f = VolterraFilter::new(&[
            KernelSpec::linear(3).unwrap(),
            KernelSpec::new(3, 0, 1).unwrap(),
        ])
        .unwrap();
        f.weights_mut(Tributary::I)[1] = 1.0;
        f.weights_mut(Tributary::Q)[4] = -0.025;
        let s = weights_to_string(&f);
        let expect = "kernel 1 3 0\nkernel 3 0 1\n[I]\n-1 0e0\n0 1e0\n1 0e0\n0,0,0 0e0\n0,0,1 0e0\n0,1,1 0e0\n\
                      [Q]\n-1 0e0\n0 0e0\n1 0e0\n0,0,0 0e0\n0,0,1 -2.5e-2\n0,1,1 0e0\n";
        assert_eq!(s, expect);
    }

    #[test]
    fn sparse_file_and_errors() {
        let f = parse_weights("kernel 1 3 0\n# note\n[Q]\n0 2.5  # centre\n", "t").unwrap();
        assert_eq!(f.weights(Tributary::Q), &[0.0, 2.5, 0.0]);
        assert_eq!(f.weights(Tributary::I), &[0.0; 3]);
        for (bad, line) in [
            ("kernel 1 3 0\n[I]\n5 1.0\n", 3),
            ("kernel 1 3\n", 1),
            ("kernel 1 3 0\n0 1.0\n", 2),
            ("kernel 1 3 0\n[X]\n", 2),
            ("kernel 1 3 0\n[I]\n0 abc\n", 3),
        ] {
            match parse_weights(bad, "t") {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{bad}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.txt");
        let f = VolterraFilter::identity(&KernelSpec::standard_set()).unwrap();
        write_weights(&p, &f).unwrap();
        assert_eq!(read_weights(&p).unwrap(), f);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn round_trip_exact(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut f = VolterraFilter::new(&KernelSpec::standard_set()).unwrap();
            for trib in Tributary::BOTH {
                let w: Vec<f64> = (0..f.num_terms())
                    .map(|_| rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-12..4)))
                    .collect();
                f.set_weights(trib, w).unwrap();
            }
            let back = parse_weights(&weights_to_string(&f), "mem").unwrap();
            prop_assert_eq!(back, f);
        }
    }
}
