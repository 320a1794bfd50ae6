//! Small real-valued FIR helpers shared by the pulse shaper, the channel and
//! the differentiable receiver used in direct-learning training.

use num_complex::Complex64;

/// Output delay (in samples) dropped from the full convolution by
/// [`convolve_same`]. For even lengths the kernel center sits half a sample
/// later than this.
pub fn same_offset(taps: usize) -> usize {
    taps.saturating_sub(1) / 2
}

/// "Same"-length linear convolution with zero padding:
/// `out[k] = sum_j h[j] * x[k + off - j]`, `off = (L - 1) / 2`.
pub fn convolve_same(x: &[f64], h: &[f64]) -> Vec<f64> {
    let off = same_offset(h.len()) as isize;
    let n = x.len() as isize;
    let mut out = vec![0.0; x.len()];
    for (k, o) in out.iter_mut().enumerate() {
        let base = k as isize + off;
        // j ranges where 0 <= base - j < n
        let j_lo = (base - n + 1).max(0) as usize;
        let j_hi = ((base + 1).min(h.len() as isize)).max(0) as usize;
        let mut acc = 0.0;
        for j in j_lo..j_hi {
            acc += h[j] * x[(base - j as isize) as usize];
        }
        *o = acc;
    }
    out
}

/// Adjoint of [`convolve_same`] with respect to its input:
/// `g_x[m] = sum_j h[j] * g[m - off + j]`.
pub fn convolve_same_adjoint(g: &[f64], h: &[f64]) -> Vec<f64> {
    let off = same_offset(h.len()) as isize;
    let n = g.len() as isize;
    let mut out = vec![0.0; g.len()];
    for (m, o) in out.iter_mut().enumerate() {
        let base = m as isize - off;
        let j_lo = (-base).max(0) as usize;
        let j_hi = ((n - base).min(h.len() as isize)).max(0) as usize;
        let mut acc = 0.0;
        for j in j_lo..j_hi {
            acc += h[j] * g[(base + j as isize) as usize];
        }
        *o = acc;
    }
    out
}

pub fn convolve_same_complex(x: &[Complex64], h: &[f64]) -> Vec<Complex64> {
    let (re, im) = split(x);
    join(&convolve_same(&re, h), &convolve_same(&im, h))
}

pub fn split(x: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    (
        x.iter().map(|c| c.re).collect(),
        x.iter().map(|c| c.im).collect(),
    )
}

pub fn join(re: &[f64], im: &[f64]) -> Vec<Complex64> {
    re.iter()
        .zip(im)
        .map(|(&r, &i)| Complex64::new(r, i))
        .collect()
}

pub fn mean_power(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|c| c.norm_sqr()).sum::<f64>() / x.len() as f64
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}
