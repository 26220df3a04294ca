//! Plain SGD and Adam parameter updates.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

fn check_finite(name: &str, grad: &Tensor) -> Result<()> {
    if !grad.all_finite() {
        return Err(Error::NonFinite(format!("gradient of parameter {name}")));
    }
    Ok(())
}

/// One SGD step: `p -= lr * g`.
pub fn sgd_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    names: &[String],
    lr: f64,
) -> Result<()> {
    for ((p, g), name) in params.iter_mut().zip(grads).zip(names) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch(format!(
                "sgd_step on {name}: param {:?} vs grad {:?}",
                p.shape(),
                g.shape()
            )));
        }
        check_finite(name, g)?;
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam optimizer with first/second moment state per parameter tensor.
pub struct Adam {
    config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    /// Adjust the step size (for schedules); moment state is kept.
    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn new(config: AdamConfig, params: &[&mut Tensor]) -> Self {
        let m = params
            .iter()
            .map(|p| Tensor::zeros(p.rows(), p.cols()))
            .collect();
        let v = params
            .iter()
            .map(|p| Tensor::zeros(p.rows(), p.cols()))
            .collect();
        Adam {
            config,
            m,
            v,
            t: 0,
        }
    }

    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Tensor],
        names: &[String],
    ) -> Result<()> {
        self.t += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "adam_step on {}: param {:?} vs grad {:?}",
                    names[i],
                    p.shape(),
                    g.shape()
                )));
            }
            check_finite(&names[i], g)?;
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, (pv, gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gv;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gv * gv;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *pv -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn sgd_on_square_matches_analytic_step() {
        // f(w) = w^2, grad 2w; w0 = 1, lr = 0.1 -> w1 = 0.8.
        let mut w = Tensor::scalar(1.0);
        let grads = vec![Tensor::scalar(2.0)];
        sgd_step(&mut [&mut w], &grads, &names(1), 0.1).unwrap();
        assert!((w.item() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_converges_on_square() {
        let mut w = Tensor::scalar(1.0);
        let config = AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(config, &[&mut w.clone()]);
        let nm = names(1);
        for _ in 0..500 {
            let grads = vec![Tensor::scalar(2.0 * w.item())];
            adam.step(&mut [&mut w], &grads, &nm).unwrap();
        }
        assert!(w.item().abs() < 1e-2, "w = {}", w.item());
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = Tensor::row(&[0.5, -0.25]);
        let before = p.clone();
        let grads = vec![Tensor::row(&[0.0, 0.0])];
        let nm = names(1);
        let mut adam = Adam::new(AdamConfig::default(), &[&mut p.clone()]);
        adam.step(&mut [&mut p], &grads, &nm).unwrap();
        assert_eq!(p, before);
        sgd_step(&mut [&mut p], &grads, &nm, 0.1).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut p = Tensor::scalar(1.0);
        let grads = vec![Tensor::scalar(f64::NAN)];
        let err = sgd_step(&mut [&mut p], &grads, &["head.weight".to_string()], 0.1)
            .unwrap_err()
            .to_string();
        assert!(err.contains("head.weight"), "{err}");
    }
}
