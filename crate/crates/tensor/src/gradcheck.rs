//! Central finite-difference gradient checking in `f64`.
//!
//! The graph under test is reduced to a scalar by contracting its output
//! with a fixed pseudo-random weight vector, so that outputs whose plain sum
//! is constant (normalized maps, softmax rows) still exercise every path.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Denominator floor of the relative error, so entries whose true
/// derivative is ~0 are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, element index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

fn probe_weight(i: usize) -> f64 {
    // deterministic, non-degenerate, roughly in [-1, 1]
    ((i as f64) * 0.618_033_988_75 + 0.25).fract() * 2.0 - 1.0 + 0.05
}

fn contract(tape: &Tape<f64>, out: Var) -> f64 {
    tape.value(out).iter().enumerate().map(|(i, v)| v * probe_weight(i)).sum()
}

/// Compares reverse-mode gradients of `build` against central differences
/// with step `h` for every element of every input.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], build: F, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(&t.clone().with_grad())).collect();
    let out = build(&mut tape, &vars)?;
    let n_out = tape.value(out).len();
    let weights = tape.constant(Tensor::from_fn(tape.shape(out).to_vec(), probe_weight));
    debug_assert_eq!(tape.value(weights).len(), n_out);
    let weighted = tape.mul(out, weights)?;
    let loss = tape.sum_all(weighted)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, analytic: 0.0, numeric: 0.0, checked: 0 };
    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.leaf(x)).collect();
        let o = build(&mut t, &vs)?;
        Ok(contract(&t, o))
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let zeros = vec![0.0; inputs[k].len()];
        let analytic = grads.wrt(*var).map(<[f64]>::to_vec).unwrap_or(zeros);
        for j in 0..inputs[k].len() {
            let orig = inputs[k].data()[j];
            work[k].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[k].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[k].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((k, j));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
