use std::ops::Range;

use super::{Term, Tributary, VolterraFilter};

/// Column-major `rows x cols` matrix of Volterra features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_columns(rows: usize, columns: Vec<Vec<f64>>) -> Self {
        let cols = columns.len();
        let mut data = Vec::with_capacity(rows * cols);
        for c in columns {
            assert_eq!(c.len(), rows, "ragged feature columns");
            data.extend(c);
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    /// `F w`.
    pub fn mul_vec(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (c, &wc) in w.iter().enumerate() {
            if wc == 0.0 {
                continue;
            }
            for (o, f) in out.iter_mut().zip(self.column(c)) {
                *o += wc * f;
            }
        }
        out
    }

    /// `F^T g`.
    pub fn tmul_vec(&self, g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.rows);
        (0..self.cols)
            .map(|c| self.column(c).iter().zip(g).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Zero-padded copy of `wave` with `pad` samples on each side.
fn padded(wave: &[f64], pad: usize) -> Vec<f64> {
    let mut p = vec![0.0; wave.len() + 2 * pad];
    p[pad..pad + wave.len()].copy_from_slice(wave);
    p
}

/// Feature column of `term` over `rows`, written into `out`.
fn fill_column(term: &Term, xp: &[f64], pad: usize, rows: Range<usize>, out: &mut [f64]) {
    let start = |d: i32| (rows.start as isize + pad as isize - d as isize) as usize;
    let len = rows.len();
    let d = term.delays();
    out.copy_from_slice(&xp[start(d[0])..start(d[0]) + len]);
    for &delay in &d[1..] {
        let s = start(delay);
        for (o, x) in out.iter_mut().zip(&xp[s..s + len]) {
            *o *= x;
        }
    }
}

/// Rows `rows` of the feature matrix of `wave`: entry `(n, t)` is the product
/// of `wave[n - i]` over the delays `i` of term `t`, zero outside the signal.
pub fn map_features_rows(wave: &[f64], terms: &[Term], rows: Range<usize>) -> FeatureMatrix {
    assert!(rows.end <= wave.len());
    let pad = terms.iter().map(Term::max_abs_delay).max().unwrap_or(0);
    let xp = padded(wave, pad);
    let n = rows.len();
    let mut data = vec![0.0; n * terms.len()];
    for (t, chunk) in terms.iter().zip(data.chunks_exact_mut(n.max(1))) {
        fill_column(t, &xp, pad, rows.clone(), chunk);
    }
    FeatureMatrix {
        rows: n,
        cols: terms.len(),
        data,
    }
}

pub fn map_features(wave: &[f64], filter: &VolterraFilter) -> FeatureMatrix {
    map_features_rows(wave, filter.terms(), 0..wave.len())
}

/// `sum_t w_t * feature[n, t]` without materializing the feature matrix.
pub fn apply_volterra(wave: &[f64], filter: &VolterraFilter, trib: Tributary) -> Vec<f64> {
    let pad = filter.max_abs_delay();
    let xp = padded(wave, pad);
    let n = wave.len();
    let mut out = vec![0.0; n];
    let mut col = vec![0.0; n];
    for (t, &w) in filter.terms().iter().zip(filter.weights(trib)) {
        if w == 0.0 {
            continue;
        }
        fill_column(t, &xp, pad, 0..n, &mut col);
        for (o, c) in out.iter_mut().zip(&col) {
            *o += w * c;
        }
    }
    out
}
