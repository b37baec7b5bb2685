use crate::error::{Error, Result};
use crate::nn::{Matrix, ParamStore, Tape, Var};
use crate::real::Real;

/// Component losses and their weighted total
/// `L = alpha * L_cls + (1 - alpha) * L_sem`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub l_cls: Option<f64>,
    pub l_sem: Option<f64>,
    pub alpha: f64,
    pub total: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")))
    }
}

/// Combines scalar component losses. A term whose weight is zero may be
/// absent.
pub fn multi_task_loss(l_cls: Option<f64>, l_sem: Option<f64>, alpha: f64) -> Result<LossBreakdown> {
    check_alpha(alpha)?;
    let term = |w: f64, l: Option<f64>, what: &str| match (w > 0.0, l) {
        (true, Some(v)) => Ok(w * v),
        (true, None) => Err(Error::Missing(format!("{what} loss required with weight {w}"))),
        (false, _) => Ok(0.0),
    };
    let total = term(alpha, l_cls, "classification")? + term(1.0 - alpha, l_sem, "segmentation")?;
    Ok(LossBreakdown {
        l_cls,
        l_sem,
        alpha,
        total,
    })
}

/// Records the weighted sum on a tape; zero-weight terms are left out of the
/// graph entirely.
pub fn weighted_loss<T: Real>(tape: &mut Tape<'_, T>, cls: Option<Var>, sem: Option<Var>, alpha: f64) -> Result<Var> {
    check_alpha(alpha)?;
    let mut parts = Vec::new();
    for (w, v, what) in [(alpha, cls, "classification"), (1.0 - alpha, sem, "segmentation")] {
        if w > 0.0 {
            let v = v.ok_or_else(|| Error::Missing(format!("{what} loss required with weight {w}")))?;
            parts.push(if w == 1.0 { v } else { tape.scale(v, T::from_f64(w)) });
        }
    }
    match parts.as_slice() {
        [a] => Ok(*a),
        [a, b] => tape.add(*a, *b),
        _ => unreachable!("alpha in [0, 1] keeps at least one term"),
    }
}

/// Mean softmax cross-entropy over rows whose target differs from
/// `ignore_id`.
pub fn cross_entropy<T: Real>(logits: &Matrix<T>, targets: &[usize], ignore_id: Option<usize>) -> Result<f64> {
    let store = ParamStore::<T>::new();
    let mut tape = Tape::new(&store);
    let x = tape.input(logits.clone());
    let t: Vec<Option<usize>> = targets.iter().map(|&t| (Some(t) != ignore_id).then_some(t)).collect();
    let l = tape.cross_entropy(x, &t)?;
    Ok(tape.value(l).get(0, 0).as_f64())
}

/// `lr_min + (lr_max - lr_min) * (1 + cos(pi * t / total)) / 2`.
pub fn cosine_lr(t: usize, total: usize, lr_max: f64, lr_min: f64) -> Result<f64> {
    if total == 0 || t > total {
        return Err(Error::invalid(format!("cosine schedule step {t} of {total}")));
    }
    if t == total {
        return Ok(lr_min);
    }
    let c = (std::f64::consts::PI * t as f64 / total as f64).cos();
    Ok(lr_min + 0.5 * (lr_max - lr_min) * (1.0 + c))
}

#[cfg(test)]
mod tests {
    use rand::{Rng as _, SeedableRng};

    use super::*;
    use crate::seed::Rng;

    #[test]
    fn cross_entropy_examples() {
        let uniform = Matrix::<f64>::zeros(1, 4);
        assert!((cross_entropy(&uniform, &[2], None).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!((4f64.ln() - 1.386294).abs() < 1e-6);

        let mut prev = f64::INFINITY;
        for m in 0..10 {
            let mut l = Matrix::<f64>::zeros(1, 3);
            l.row_mut(0)[1] = m as f64;
            let v = cross_entropy(&l, &[1], None).unwrap();
            assert!(v < prev);
            prev = v;
        }

        let mut rng = Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..50).map(|_| rng.random_range(-5.0..5.0)).collect();
        let logits = Matrix::from_vec(10, 5, data).unwrap();
        let targets: Vec<usize> = (0..10).map(|_| rng.random_range(0..5)).collect();
        let naive: f64 = (0..10)
            .map(|r| {
                let row = logits.row(r);
                let z: f64 = row.iter().map(|v| v.exp()).sum();
                -(row[targets[r]].exp() / z).ln()
            })
            .sum::<f64>()
            / 10.0;
        assert!((cross_entropy(&logits, &targets, None).unwrap() - naive).abs() < 1e-12);

        // ignored rows drop out of the mean
        let kept = cross_entropy(&logits, &targets, Some(targets[0])).unwrap();
        let manual: Vec<usize> = (0..10).filter(|&r| targets[r] != targets[0]).collect();
        let sub = Matrix::from_rows(&manual.iter().map(|&r| logits.row(r).to_vec()).collect::<Vec<_>>()).unwrap();
        let sub_t: Vec<usize> = manual.iter().map(|&r| targets[r]).collect();
        assert!((kept - cross_entropy(&sub, &sub_t, None).unwrap()).abs() < 1e-12);
        assert!(cross_entropy(&logits, &[0; 10], Some(0)).is_err());
    }

    #[test]
    fn weighted_sum_examples() {
        let l = |a| multi_task_loss(Some(2.0), Some(5.0), a).unwrap().total;
        assert_eq!(l(0.0), 5.0);
        assert_eq!(l(1.0), 2.0);
        assert_eq!(l(0.5), 3.5);
        assert!(multi_task_loss(Some(2.0), Some(5.0), 1.5).is_err());
        assert!(multi_task_loss(None, Some(5.0), 0.2).is_err());
        assert_eq!(multi_task_loss(None, Some(5.0), 0.0).unwrap().total, 5.0);
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 10, 1e-3, 1e-5).unwrap(), 1e-3);
        assert_eq!(cosine_lr(10, 10, 1e-3, 1e-5).unwrap(), 1e-5);
        assert!((cosine_lr(5, 10, 1e-3, 1e-5).unwrap() - (1e-3 + 1e-5) / 2.0).abs() < 1e-18);
        assert!(cosine_lr(11, 10, 1e-3, 0.0).is_err());
        assert!(cosine_lr(0, 0, 1e-3, 0.0).is_err());
    }
}
