//! Finite-difference checking of layer and model parameters.

use cbnr_tensor::gradcheck::REL_ERROR_FLOOR;
use cbnr_tensor::{Tape, Tensor, Var};

use crate::error::Result;
use crate::nn::Module;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheckReport {
    pub max_rel_error: f64,
    /// `(parameter name, element index)` of the worst entry.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

fn probe(i: usize) -> f64 {
    ((i as f64) * 0.754_877_666 + 0.1).fract() * 2.0 - 1.0 + 0.03
}

fn contracted(tape: &Tape<f64>, out: Var) -> f64 {
    tape.value(out).iter().enumerate().map(|(i, v)| v * probe(i)).sum()
}

/// Compares reverse-mode gradients of every parameter of `module` against
/// central differences of `build`'s output contracted with fixed weights.
/// `build` must bind parameters with `Mode::Train`.
pub fn check_params<M, F>(module: &mut M, build: F, h: f64) -> Result<ParamCheckReport>
where
    M: Module<f64>,
    F: Fn(&M, &mut Tape<f64>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = build(module, &mut tape)?;
    let w = tape.constant(Tensor::from_fn(tape.shape(out).to_vec(), probe));
    let weighted = tape.mul(out, w)?;
    let loss = tape.sum_all(weighted)?;
    let grads = tape.backward(loss)?;

    let analytic: Vec<(String, Vec<f64>)> = module
        .params()
        .iter()
        .map(|p| (p.name.clone(), grads.named(&p.name).map_or_else(|| vec![0.0; p.value.len()], <[f64]>::to_vec)))
        .collect();
    let eval = |m: &M| -> Result<f64> {
        let mut t = Tape::new();
        let o = build(m, &mut t)?;
        Ok(contracted(&t, o))
    };
    let mut report = ParamCheckReport { max_rel_error: 0.0, worst: None, analytic: 0.0, numeric: 0.0, checked: 0 };
    for (k, (name, a)) in analytic.iter().enumerate() {
        for j in 0..a.len() {
            let orig = module.params()[k].value.data()[j];
            module.params_mut()[k].value.data_mut()[j] = orig + h;
            let plus = eval(module)?;
            module.params_mut()[k].value.data_mut()[j] = orig - h;
            let minus = eval(module)?;
            module.params_mut()[k].value.data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (a[j] - numeric).abs() / a[j].abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), j));
                report.analytic = a[j];
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
