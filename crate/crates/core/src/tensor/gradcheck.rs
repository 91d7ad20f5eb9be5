//! Central finite-difference checks against tape gradients.
//!
//! The numerical side only ever calls the forward closure, so it is
//! independent of every backward rule it is checking.

use super::{ParamId, ParameterSet, Tape, Var};
use crate::error::Result;

/// Outcome of a gradient check.
#[derive(Clone, Debug)]
pub struct GradReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, ABS_FLOOR)`.
    pub max_rel_error: f64,
    /// Parameter name and flat index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Denominator floor so that gradients that are zero on both sides do not
/// divide round-off noise by zero.
pub const ABS_FLOOR: f64 = 1e-6;

/// Checks every scalar of every parameter.
pub fn check<F>(params: &ParameterSet<f64>, step: f64, f: F) -> Result<GradReport>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
{
    check_sampled(params, step, usize::MAX, |_| true, f)
}

/// Checks at most `per_param` evenly spaced entries of each parameter
/// accepted by `select`.
pub fn check_sampled<F, S>(params: &ParameterSet<f64>, step: f64, per_param: usize, select: S, f: F) -> Result<GradReport>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
    S: Fn(&str) -> bool,
{
    let analytic = {
        let mut tape = Tape::new(params);
        let loss = f(&mut tape)?;
        tape.backward(loss)?.into_params()
    };
    let eval = |p: &ParameterSet<f64>| -> Result<f64> {
        let mut tape = Tape::new(p);
        let loss = f(&mut tape)?;
        Ok(tape.item(loss))
    };
    let mut work = params.clone();
    let mut report = GradReport { max_rel_error: 0.0, worst: None, checked: 0 };
    let ids: Vec<ParamId> = params.ids().collect();
    for id in ids {
        if !select(params.name(id)) {
            continue;
        }
        let n = params.get(id).len();
        let stride = if per_param >= n { 1 } else { n.div_ceil(per_param) };
        for k in (0..n).step_by(stride) {
            let orig = params.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = orig + step;
            let plus = eval(&work)?;
            work.get_mut(id).data_mut()[k] = orig - step;
            let minus = eval(&work)?;
            work.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.get(id).data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(ABS_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((params.name(id).to_string(), k));
            }
        }
    }
    Ok(report)
}
