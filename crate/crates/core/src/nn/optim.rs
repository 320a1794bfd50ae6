use crate::error::{Error, Result};

/// Mean squared error and its gradient `2 (pred - target) / N`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            what: "mse pred vs target",
            left: pred.len(),
            right: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("mse input"));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let r = p - t;
            loss += r * r;
            2.0 * r / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Adam with bias correction over a flat parameter vector. The moment
/// buffers are sized on the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::LengthMismatch {
                what: "adam params vs grads",
                left: params.len(),
                right: grads.len(),
            });
        }
        if self.m.is_empty() {
            self.m = vec![0.0; params.len()];
            self.v = vec![0.0; params.len()];
        } else if self.m.len() != params.len() {
            return Err(Error::LengthMismatch {
                what: "adam state vs params",
                left: self.m.len(),
                right: params.len(),
            });
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_values() {
        let (l, g) = mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
        let (l, _) = mse_loss(&[1.5, 2.5, -0.5], &[1.0, 2.0, -1.0]).unwrap();
        assert!((l - 0.25).abs() < 1e-15);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mse_gradient_finite_difference() {
        let p = [0.3, -1.2, 2.0, 0.7];
        let t = [0.1, 0.4, 1.0, -0.2];
        let (_, g) = mse_loss(&p, &t).unwrap();
        let h = 1e-6;
        for k in 0..4 {
            let (mut a, mut b) = (p, p);
            a[k] += h;
            b[k] -= h;
            let fd = (mse_loss(&a, &t).unwrap().0 - mse_loss(&b, &t).unwrap().0) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = Adam::new(1e-3);
        let mut w = vec![0.5, -0.25];
        for _ in 0..5 {
            adam.step(&mut w, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(w, vec![0.5, -0.25]);
    }

    #[test]
    fn first_step_bounded_by_lr() {
        let mut adam = Adam::new(1e-3);
        let mut w = vec![0.0; 4];
        adam.step(&mut w, &[3.0, -1e-3, 1e6, -2.0]).unwrap();
        for (v, s) in w.iter().zip([-1.0, 1.0, -1.0, 1.0]) {
            assert!(v.abs() <= 1e-3 * (1.0 + 1e-8));
            assert!(v.signum() == s);
        }
    }

    #[test]
    fn quadratic_bowl_descends() {
        let mut adam = Adam::new(0.1);
        let mut w = vec![12.0, -9.0, 15.0];
        let mut prev = f64::INFINITY;
        for _ in 0..100 {
            let g: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
            adam.step(&mut w, &g).unwrap();
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm < prev, "{norm} >= {prev}");
            prev = norm;
        }
    }
}
