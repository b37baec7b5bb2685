use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, ParamId, ParamStore};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter, plus the step
/// counter used for bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || params.iter().map(|(_, p)| vec![T::zero(); p.len()]).collect();
        Self {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One bias-corrected Adam update of the parameters selected by `active`.
/// Active parameters without a gradient are updated as if it were zero.
pub fn adam_step<T: Real>(
    params: &mut ParamStore<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
    lr: f64,
    active: impl Fn(ParamId) -> bool,
) -> Result<()> {
    if state.m.len() != params.len() || grads.by_param.len() != params.len() {
        return Err(Error::shape("optimiser state does not match the parameter list"));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let (c1, c2) = (
        T::from_f64(1.0 - cfg.beta1.powi(t)),
        T::from_f64(1.0 - cfg.beta2.powi(t)),
    );
    let (lr, eps) = (T::from_f64(lr), T::from_f64(cfg.eps));
    let ids: Vec<ParamId> = params.ids().collect();
    for id in ids {
        let p = params.get_mut(id);
        if !p.trainable || !active(id) {
            continue;
        }
        let (m, v) = (&mut state.m[id.index()], &mut state.v[id.index()]);
        if m.len() != p.len() || v.len() != p.len() {
            return Err(Error::shape(format!("optimiser state for {} has the wrong length", p.name)));
        }
        let g = grads.by_param[id.index()].as_deref();
        if g.is_some_and(|g| g.len() != p.len()) {
            return Err(Error::shape(format!("gradient for {} has the wrong length", p.name)));
        }
        for j in 0..p.len() {
            let gj = g.map_or(T::zero(), |g| g[j]);
            m[j] = b1 * m[j] + (T::one() - b1) * gj;
            v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            p.values[j] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("a", &[3], vec![1.0, -2.0, 0.5], true).unwrap();
        s.add("stat", &[1], vec![7.0], false).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = store();
        let before = s.clone();
        let mut st = AdamState::new(&s);
        let g = Gradients {
            by_param: vec![Some(vec![0.0; 3]), None],
        };
        adam_step(&mut s, &g, &mut st, &AdamConfig::default(), 1e-3, |_| true).unwrap();
        assert_eq!(s, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut s = store();
        let mut st = AdamState::new(&s);
        let g = Gradients {
            by_param: vec![Some(vec![1.0; 3]), None],
        };
        let cfg = AdamConfig::default();
        adam_step(&mut s, &g, &mut st, &cfg, 1e-3, |_| true).unwrap();
        let expected = 1e-3 / (1.0 + 1e-8);
        for (after, before) in s.values(ParamId(0)).iter().zip([1.0, -2.0, 0.5]) {
            assert!((before - after - expected).abs() < 1e-15);
        }
        assert_eq!(s.values(ParamId(1)), &[7.0]);
    }

    #[test]
    fn inactive_parameters_are_untouched() {
        let mut s = store();
        let before = s.clone();
        let mut st = AdamState::new(&s);
        let g = Gradients {
            by_param: vec![Some(vec![1.0; 3]), None],
        };
        adam_step(&mut s, &g, &mut st, &AdamConfig::default(), 1e-3, |_| false).unwrap();
        assert_eq!(s, before);
        assert!(st.m[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_trajectories() {
        let run = || {
            let mut s = store();
            let mut st = AdamState::new(&s);
            for k in 0..20 {
                let g = Gradients {
                    by_param: vec![Some(vec![k as f64 * 0.1, -0.3, 1.0 / (k + 1) as f64]), None],
                };
                adam_step(&mut s, &g, &mut st, &AdamConfig::default(), 1e-2, |_| true).unwrap();
            }
            s
        };
        assert_eq!(run(), run());
    }
}
