use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mse_loss, Activation, BatchNorm, Conv1d, Dense, Layer, Sequential, Tensor1D};
use crate::error::Result;

/// Gradients below this magnitude are compared absolutely; round-off in a
/// central difference with `h = 1e-5` is around `1e-11`.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub params_checked: usize,
    pub inputs_checked: usize,
    pub max_rel_error: f64,
    /// Flat parameter index of the worst mismatch (`None` if an input was worst).
    pub worst_param: Option<usize>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn loss_of(model: &mut Sequential, x: &Tensor1D, target: &[f64], training: bool) -> Result<f64> {
    let y = model.forward(x, training)?;
    Ok(mse_loss(&y.values, target)?.0)
}

/// Compare reverse-mode gradients of an MSE loss against central finite
/// differences for `num_params` randomly chosen parameters (all if fewer)
/// and `num_inputs` input samples. The model is restored afterwards.
pub fn gradcheck_model(
    model: &mut Sequential,
    x: &Tensor1D,
    training: bool,
    num_params: usize,
    num_inputs: usize,
    h: f64,
    seed: u64,
) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = model.infer(x)?;
    let target: Vec<f64> = (0..probe.values.len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();

    let saved_model = model.clone();
    model.zero_grad();
    let y = model.forward(x, training)?;
    let (_, g) = mse_loss(&y.values, &target)?;
    let gx = model.backward(&Tensor1D::from_values(y.channels, y.len, g)?)?;
    let analytic = model.grads_flat();
    let base = model.params_flat();

    let n = base.len();
    let picks = sample(&mut rng, n, num_params.min(n)).into_vec();
    let mut report = GradcheckReport {
        params_checked: picks.len(),
        inputs_checked: 0,
        max_rel_error: 0.0,
        worst_param: None,
    };
    let mut p = base.clone();
    for &k in &picks {
        p[k] = base[k] + h;
        model.set_params_flat(&p)?;
        let up = loss_of(model, x, &target, training)?;
        p[k] = base[k] - h;
        model.set_params_flat(&p)?;
        let down = loss_of(model, x, &target, training)?;
        p[k] = base[k];
        let err = relative_error(analytic[k], (up - down) / (2.0 * h));
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_param = Some(k);
        }
    }
    model.set_params_flat(&base)?;

    let m = x.values.len();
    for k in sample(&mut rng, m, num_inputs.min(m)).into_vec() {
        let mut xp = x.clone();
        xp.values[k] += h;
        let up = loss_of(model, &xp, &target, training)?;
        xp.values[k] -= 2.0 * h;
        let down = loss_of(model, &xp, &target, training)?;
        let err = relative_error(gx.values[k], (up - down) / (2.0 * h));
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_param = None;
        }
        report.inputs_checked += 1;
    }
    *model = saved_model;
    Ok(report)
}

fn random_input(ch: usize, len: usize, seed: u64) -> Tensor1D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..ch * len).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor1D {
        channels: ch,
        len,
        values,
    }
}

/// Randomize every parameter, including zero-initialized layers, so no
/// gradient is trivially zero.
fn randomize(model: &mut Sequential, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<f64> = (0..model.num_params())
        .map(|_| rng.random_range(-0.3..0.3))
        .collect();
    model.set_params_flat(&p)
}

/// Small stacks covering every layer kind in both modes, then the full
/// surrogate. Returns one labelled report per check.
pub fn standard_suite(seed: u64) -> Result<Vec<(String, GradcheckReport)>> {
    let mut out = Vec::new();
    for k in 0..4u64 {
        let s = seed.wrapping_add(k);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let (cin, width) = (1 + k as usize % 3, 2 + k as usize * 3);
        let mut bn = BatchNorm::new(4);
        bn.running_mean = vec![0.1, -0.2, 0.05, 0.0];
        bn.running_var = vec![0.5, 1.5, 2.0, 0.8];
        let mut model = Sequential::new(vec![
            Layer::Conv1d(Conv1d::uniform(cin, 4, width, &mut rng)),
            Layer::BatchNorm(bn),
            Layer::Activation(Activation::Tanh),
            Layer::Dense(Dense::uniform(4, 2, &mut rng)),
            Layer::Activation(Activation::Identity),
        ])?;
        randomize(&mut model, s.wrapping_add(100))?;
        let x = random_input(cin, 40 + 7 * k as usize, s.wrapping_add(200));
        for training in [true, false] {
            let r = gradcheck_model(&mut model, &x, training, 500, 30, 1e-5, s)?;
            let mode = if training { "train" } else { "eval" };
            out.push((format!("conv{width}+batchnorm({mode})+tanh+dense"), r));
        }
    }
    let mut model = Sequential::surrogate(seed.wrapping_add(7));
    randomize(&mut model, seed.wrapping_add(8))?;
    let x = random_input(1, 256, seed.wrapping_add(9));
    out.push((
        "surrogate".into(),
        gradcheck_model(&mut model, &x, true, 250, 20, 1e-5, seed.wrapping_add(10))?,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_suite_passes() {
        let reports = standard_suite(0).unwrap();
        assert_eq!(reports.len(), 9);
        for (name, r) in &reports {
            assert!(r.max_rel_error < 1e-5, "{name}: {r:?}");
        }
        assert!(reports.last().unwrap().1.params_checked >= 200);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // a gradient off by 1% must show up
        assert!(relative_error(1.01, 1.0) > 1e-3);
        assert!(relative_error(1e-9, 0.0) < 1e-2);
    }
}
