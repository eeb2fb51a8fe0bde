use super::{NdArray, Tape, Var};
use crate::error::{Error, Result};

/// Default central-difference step.
pub const FD_EPS: f64 = 1e-5;

/// Denominator floor for the relative error. Central differences at
/// `FD_EPS` carry ~1e-10 of round-off, so gradients that are exactly zero
/// (e.g. an attention key bias, which softmax cancels) would otherwise
/// score a relative error of 1.
pub const FD_FLOOR: f64 = 1e-6;

/// Compares reverse-mode gradients of a scalar function against central
/// differences and returns the largest relative error over every input
/// element: `|analytic - numeric| / max(|analytic|, |numeric|, FD_FLOOR)`.
///
/// `f` receives fresh leaves for `inputs` on each evaluation and must be
/// deterministic.
pub fn finite_diff_check<F>(f: F, inputs: &[NdArray<f64>], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |arrays: &[NdArray<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = arrays.iter().map(|a| tape.leaf(a.clone())).collect();
        let out = f(&mut tape, &vars)?;
        scalar_of(&tape, out)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|a| tape.leaf(a.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, a)| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; a.len()]))
        .collect();

    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (which, grads) in analytic.iter().enumerate() {
        for (j, &an) in grads.iter().enumerate() {
            let orig = probe[which].data()[j];
            probe[which].data_mut()[j] = orig + eps;
            let up = eval(&probe)?;
            probe[which].data_mut()[j] = orig - eps;
            let down = eval(&probe)?;
            probe[which].data_mut()[j] = orig;
            let num = (up - down) / (2.0 * eps);
            let rel = (an - num).abs() / an.abs().max(num.abs()).max(FD_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

fn scalar_of(tape: &Tape<f64>, v: Var) -> Result<f64> {
    let val = tape.value(v);
    if val.len() != 1 {
        return Err(Error::Contract(format!(
            "finite-difference check needs a scalar output, got {:?}",
            val.shape()
        )));
    }
    Ok(val.data()[0])
}
