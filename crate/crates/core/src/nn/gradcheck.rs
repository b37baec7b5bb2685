//! Central finite-difference verification of tape gradients.

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Worst disagreement found by [`gradient_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and element index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Relative error `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares the tape gradient of the scalar built by `loss` against central
/// differences with step `h`. `stride` checks every `stride`-th element of
/// each trainable parameter (1 checks everything).
pub fn gradient_check<F>(store: &mut ParamStore<f64>, h: f64, stride: usize, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
{
    if stride == 0 || !(h > 0.0) {
        return Err(Error::invalid("gradient check needs h > 0 and stride >= 1"));
    }
    let analytic = {
        let mut t = Tape::new(store);
        let l = loss(&mut t)?;
        t.backward(l)?
    };
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut t = Tape::new(s);
        let l = loss(&mut t)?;
        Ok(t.value(l).get(0, 0))
    };
    let ids: Vec<ParamId> = store.ids().filter(|&id| store.get(id).trainable).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for id in ids {
        for j in (0..store.get(id).len()).step_by(stride) {
            let orig = store.get(id).values[j];
            store.get_mut(id).values[j] = orig + h;
            let plus = eval(store);
            store.get_mut(id).values[j] = orig - h;
            let minus = eval(store);
            store.get_mut(id).values[j] = orig;
            let numeric = (plus? - minus?) / (2.0 * h);
            let a = analytic.get(id).map_or(0.0, |g| g[j]);
            let rel = relative_error(a, numeric);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst = Some((store.get(id).name.clone(), j));
            }
        }
    }
    Ok(report)
}
