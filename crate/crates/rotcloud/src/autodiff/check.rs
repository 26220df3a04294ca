//! Central finite-difference gradient checking.
//!
//! The checker rebuilds the graph from scratch for every perturbed input, so
//! it stays independent of the backward implementation it verifies.

use crate::autodiff::tape::{Tape, Var};
use crate::autodiff::tensor::Tensor;
use crate::error::Result;

/// Max relative error between analytic gradients and central differences,
/// over every element of every input tensor.
///
/// `build` receives fresh leaves for `inputs` and must return the scalar root.
/// Relative error uses `|a - b| / max(1, |a|, |b|)` so near-zero gradients are
/// compared absolutely.
pub fn finite_difference_max_rel_err<F>(build: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |tensors: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let root = build(&mut tape, &vars)?;
        Ok(tape.value(root).item())
    };

    // Analytic gradients.
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = build(&mut tape, &vars)?;
    tape.backward(root)?;
    let analytic: Vec<Vec<f64>> = vars.iter().map(|v| tape.grad(*v).data().to_vec()).collect();

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for ti in 0..inputs.len() {
        for j in 0..inputs[ti].len() {
            let orig = work[ti].data()[j];
            work[ti].data_mut()[j] = orig + eps;
            let f_plus = eval(&work)?;
            work[ti].data_mut()[j] = orig - eps;
            let f_minus = eval(&work)?;
            work[ti].data_mut()[j] = orig;

            let fd = (f_plus - f_minus) / (2.0 * eps);
            let a = analytic[ti][j];
            let rel = (fd - a).abs() / 1.0f64.max(fd.abs()).max(a.abs());
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
