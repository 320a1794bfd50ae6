//! Least squares with an orthogonal decomposition.
//!
//! Row blocks are folded into a running triangular factor of the augmented
//! matrix `[F | y]` (a streaming QR), so the full feature matrix never has to
//! exist in memory. Ridge is applied by appending `sqrt(ridge) I` rows.

use faer::Mat;

use super::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LsFit {
    pub weights: Vec<f64>,
    /// `||F w - y||^2 + ridge ||w||^2` at the solution.
    pub residual: f64,
    /// Set when `ridge == 0` and the factor was numerically singular; the
    /// weights are then the minimum-norm solution.
    pub rank_deficient: bool,
}

#[derive(Debug, Clone)]
pub struct LsAccumulator {
    cols: usize,
    /// Upper-triangular `(cols + 1) x (cols + 1)` factor of `[F | y]`.
    r: Mat<f64>,
    rows_seen: usize,
}

impl LsAccumulator {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            r: Mat::zeros(cols + 1, cols + 1),
            rows_seen: 0,
        }
    }

    pub fn rows_seen(&self) -> usize {
        self.rows_seen
    }

    pub fn push(&mut self, features: &FeatureMatrix, target: &[f64]) -> Result<()> {
        if features.cols() != self.cols {
            return Err(Error::LengthMismatch {
                what: "feature columns",
                left: features.cols(),
                right: self.cols,
            });
        }
        if features.rows() != target.len() {
            return Err(Error::LengthMismatch {
                what: "feature rows vs target",
                left: features.rows(),
                right: target.len(),
            });
        }
        let n1 = self.cols + 1;
        let rows = features.rows();
        let mut stacked = Mat::<f64>::zeros(n1 + rows, n1);
        for c in 0..n1 {
            for r in 0..=c {
                stacked[(r, c)] = self.r[(r, c)];
            }
        }
        for c in 0..self.cols {
            for (r, v) in features.column(c).iter().enumerate() {
                stacked[(n1 + r, c)] = *v;
            }
        }
        for (r, v) in target.iter().enumerate() {
            stacked[(n1 + r, self.cols)] = *v;
        }
        self.refactor(stacked);
        self.rows_seen += rows;
        Ok(())
    }

    fn refactor(&mut self, stacked: Mat<f64>) {
        let qr = stacked.qr();
        let thin = qr.thin_R();
        let n1 = self.cols + 1;
        for c in 0..n1 {
            for r in 0..n1 {
                self.r[(r, c)] = if r <= c && r < thin.nrows() {
                    thin[(r, c)]
                } else {
                    0.0
                };
            }
        }
    }

    /// `trace(F^T F) / cols`, the scale used for relative ridge values.
    pub fn mean_column_energy(&self) -> f64 {
        let mut acc = 0.0;
        for c in 0..self.cols {
            for r in 0..=c {
                acc += self.r[(r, c)].powi(2);
            }
        }
        acc / self.cols.max(1) as f64
    }

    /// Solve with a uniform ridge `ridge * I`; zero gives the minimum-norm
    /// least-squares solution.
    pub fn finish(self, ridge: f64) -> Result<LsFit> {
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::invalid("ridge", format!("{ridge} must be >= 0")));
        }
        let n = self.cols;
        self.finish_with(&vec![ridge; n])
    }

    fn finish_with(mut self, ridges: &[f64]) -> Result<LsFit> {
        if self.rows_seen == 0 {
            return Err(Error::Empty("least-squares rows"));
        }
        let n = self.cols;
        let ridge = ridges.iter().copied().fold(0.0, f64::max);
        if ridge > 0.0 {
            let n1 = n + 1;
            let mut stacked = Mat::<f64>::zeros(n1 + n, n1);
            for c in 0..n1 {
                for r in 0..=c {
                    stacked[(r, c)] = self.r[(r, c)];
                }
            }
            for k in 0..n {
                stacked[(n1 + k, k)] = ridges[k].sqrt();
            }
            self.refactor(stacked);
        } else if self.rows_seen < n {
            return Err(Error::invalid(
                "features",
                format!("{} rows for {} columns", self.rows_seen, n),
            ));
        }
        let c: Vec<f64> = (0..n).map(|r| self.r[(r, n)]).collect();
        let tail = self.r[(n, n)].powi(2);

        let (weights, rank_deficient) = if ridge > 0.0 {
            (back_substitute(&self.r, &c), false)
        } else {
            min_norm_solve(&self.r, &c, self.rows_seen)?
        };
        let mut res = tail;
        for r in 0..n {
            let fitted: f64 = (r..n).map(|k| self.r[(r, k)] * weights[k]).sum();
            res += (c[r] - fitted).powi(2);
        }
        Ok(LsFit {
            weights,
            residual: res,
            rank_deficient,
        })
    }
}

fn back_substitute(r: &Mat<f64>, c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut w = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| r[(i, k)] * w[k]).sum();
        w[i] = (c[i] - s) / r[(i, i)];
    }
    w
}

fn min_norm_solve(r_aug: &Mat<f64>, c: &[f64], rows: usize) -> Result<(Vec<f64>, bool)> {
    let n = c.len();
    let r = Mat::<f64>::from_fn(n, n, |i, j| r_aug[(i, j)]);
    let svd = r
        .svd()
        .map_err(|e| Error::Format(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let s_max = (0..n).map(|k| s[k].abs()).fold(0.0, f64::max);
    let tol = s_max * rows.max(n) as f64 * f64::EPSILON;
    let (u, v) = (svd.U(), svd.V());
    let mut w = vec![0.0; n];
    let mut deficient = false;
    for k in 0..n {
        if s[k].abs() <= tol {
            deficient = true;
            continue;
        }
        let coef: f64 = (0..n).map(|i| u[(i, k)] * c[i]).sum::<f64>() / s[k];
        for (j, wj) in w.iter_mut().enumerate() {
            *wj += coef * v[(j, k)];
        }
    }
    Ok((w, deficient))
}

/// `argmin ||F w - y||^2 + ridge ||w||^2`.
pub fn fit_least_squares(features: &FeatureMatrix, target: &[f64], ridge: f64) -> Result<LsFit> {
    if features.rows() < features.cols() {
        return Err(Error::invalid(
            "features",
            format!("{} rows for {} columns", features.rows(), features.cols()),
        ));
    }
    let mut acc = LsAccumulator::new(features.cols());
    acc.push(features, target)?;
    acc.finish(ridge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volterra::{map_features, KernelSpec, Term, Tributary, VolterraFilter};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn one_hot_recovery() {
        let n = 6;
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|c| {
                (0..40)
                    .map(|r| if r % n == c { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let f = FeatureMatrix::from_columns(40, cols);
        let w_true = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let y = f.mul_vec(&w_true);
        let fit = fit_least_squares(&f, &y, 0.0).unwrap();
        for (a, b) in fit.weights.iter().zip(w_true) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(!fit.rank_deficient);
        assert!(fit.residual < 1e-20);
    }

    #[test]
    fn scaled_linear_term() {
        let filt = VolterraFilter::new(&KernelSpec::standard_set()).unwrap();
        let x: Vec<f64> = noise(3000, 1).iter().map(|v| 0.5 * v).collect();
        let f = map_features(&x, &filt);
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let fit = fit_least_squares(&f, &y, 0.0).unwrap();
        let c = filt.term_index(&Term::new(&[0]).unwrap()).unwrap();
        for (k, w) in fit.weights.iter().enumerate() {
            let expect = if k == c { 2.0 } else { 0.0 };
            assert!((w - expect).abs() <= 1e-8, "term {k}: {w}");
        }
    }

    #[test]
    fn cubic_channel_identified() {
        // y = x - 0.1 x^3 at 40 dB SNR
        let filt = VolterraFilter::new(&KernelSpec::standard_set()).unwrap();
        let x: Vec<f64> = noise(1 << 14, 2).iter().map(|v| 0.5 * v).collect();
        let clean: Vec<f64> = x.iter().map(|v| v - 0.1 * v * v * v).collect();
        let p = clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64;
        let sigma = (p * 1e-4).sqrt();
        let y: Vec<f64> = clean
            .iter()
            .zip(noise(1 << 14, 3))
            .map(|(c, n)| c + sigma * n)
            .collect();
        let f = map_features(&x, &filt);
        let fit = fit_least_squares(&f, &y, 0.0).unwrap();
        let k = filt.term_index(&Term::new(&[0, 0, 0]).unwrap()).unwrap();
        assert!((fit.weights[k] + 0.1).abs() < 1e-3, "{}", fit.weights[k]);
        let mut dpd = filt.clone();
        dpd.set_weights(Tributary::I, fit.weights).unwrap();
    }

    #[test]
    fn streaming_matches_single_block() {
        let filt = VolterraFilter::new(&[
            KernelSpec::linear(9).unwrap(),
            KernelSpec::new(3, 2, 1).unwrap(),
        ])
        .unwrap();
        let x = noise(2000, 4);
        let y = noise(2000, 5);
        let whole = fit_least_squares(&map_features(&x, &filt), &y, 1e-3).unwrap();
        let mut acc = LsAccumulator::new(filt.num_terms());
        for start in (0..2000).step_by(300) {
            let end = (start + 300).min(2000);
            let block = crate::volterra::map_features_rows(&x, filt.terms(), start..end);
            acc.push(&block, &y[start..end]).unwrap();
        }
        let streamed = acc.finish(1e-3).unwrap();
        for (a, b) in whole.weights.iter().zip(&streamed.weights) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((whole.residual - streamed.residual).abs() < 1e-8 * whole.residual);
    }

    #[test]
    fn ridge_matches_normal_equations() {
        // tiny well-conditioned problem: compare with (F^T F + lambda I)^-1 F^T y
        let f = FeatureMatrix::from_columns(
            5,
            vec![vec![1.0, 2.0, 0.0, 1.0, 3.0], vec![0.0, 1.0, 1.0, 4.0, 1.0]],
        );
        let y = [1.0, 0.0, 2.0, 1.0, -1.0];
        let lambda = 0.5;
        let (a, b, d) = (
            1.0 + 4.0 + 1.0 + 9.0 + lambda,
            2.0 + 4.0 + 3.0,
            1.0 + 1.0 + 16.0 + 1.0 + lambda,
        );
        let (g0, g1) = (1.0 + 1.0 - 3.0, 2.0 + 4.0 - 1.0);
        let det = a * d - b * b;
        let w = [(d * g0 - b * g1) / det, (a * g1 - b * g0) / det];
        let fit = fit_least_squares(&f, &y, lambda).unwrap();
        assert!((fit.weights[0] - w[0]).abs() < 1e-12);
        assert!((fit.weights[1] - w[1]).abs() < 1e-12);
        let r = f.mul_vec(&fit.weights);
        let obj: f64 = r.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>()
            + lambda * (w[0] * w[0] + w[1] * w[1]);
        assert!((fit.residual - obj).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_gives_min_norm() {
        let a: Vec<f64> = (0..20).map(|k| (k as f64).sin()).collect();
        let f = FeatureMatrix::from_columns(20, vec![a.clone(), a.clone()]);
        let y: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let fit = fit_least_squares(&f, &y, 0.0).unwrap();
        assert!(fit.rank_deficient);
        assert!((fit.weights[0] - 1.0).abs() < 1e-10);
        assert!((fit.weights[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn errors() {
        let f = FeatureMatrix::from_columns(1, vec![vec![1.0], vec![2.0]]);
        assert!(fit_least_squares(&f, &[1.0], 0.0).is_err());
        let f = FeatureMatrix::from_columns(2, vec![vec![1.0, 2.0]]);
        assert!(fit_least_squares(&f, &[1.0], 0.0).is_err());
        assert!(fit_least_squares(&f, &[1.0, 2.0], -1.0).is_err());
    }
}
