//! Scene-level evaluation: accuracy, per-class recall and IoU, confusion
//! matrix and near-miss statistics.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scene_io::Taxonomy;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub num_scenes: usize,
    pub accuracy: f64,
    /// Scenes of each true class.
    pub class_counts: Vec<usize>,
    /// `None` for classes without true scenes.
    pub per_class_recall: Vec<Option<f64>>,
    /// `None` for classes absent from truths and predictions.
    pub per_class_iou: Vec<Option<f64>>,
    /// Mean IoU over evaluation-subset classes that occur in truths or
    /// predictions.
    pub mean_iou: f64,
    /// `confusion[t][p]`: scenes of true class `t` predicted as `p`.
    pub confusion: Vec<Vec<usize>>,
    /// Fraction of errors whose true class scored second; `None` when only
    /// hard labels were available or there were no errors.
    pub near_miss_rate: Option<f64>,
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// 1-based rank of `class` under the same tie-breaking as [`argmax`].
pub fn rank_of(scores: &[f64], class: usize) -> usize {
    let s = scores[class];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > s || (v == s && j < class))
        .count()
}

pub fn confusion_matrix(preds: &[usize], truths: &[usize], num_classes: usize) -> Result<Vec<Vec<usize>>> {
    if preds.len() != truths.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    let mut m = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &t) in preds.iter().zip(truths) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::invalid(format!("class id out of range 0..{num_classes}: true {t}, predicted {p}")));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Evaluates per-scene score vectors against true scene ids.
pub fn evaluate(scores: &[Vec<f64>], truths: &[usize], taxonomy: &Taxonomy) -> Result<EvalReport> {
    let k = taxonomy.num_scene_classes();
    if let Some(bad) = scores.iter().find(|s| s.len() != k) {
        return Err(Error::shape(format!("score vector of length {} for {k} classes", bad.len())));
    }
    let preds: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
    let mut report = evaluate_classes(&preds, truths, taxonomy)?;
    let errors: Vec<usize> = (0..preds.len()).filter(|&i| preds[i] != truths[i]).collect();
    report.near_miss_rate = (!errors.is_empty()).then(|| {
        let near = errors.iter().filter(|&&i| rank_of(&scores[i], truths[i]) == 2).count();
        near as f64 / errors.len() as f64
    });
    Ok(report)
}

/// Evaluates hard class predictions.
pub fn evaluate_classes(preds: &[usize], truths: &[usize], taxonomy: &Taxonomy) -> Result<EvalReport> {
    if truths.is_empty() {
        return Err(Error::Empty("no scenes to evaluate".into()));
    }
    let k = taxonomy.num_scene_classes();
    let confusion = confusion_matrix(preds, truths, k)?;
    let n = truths.len();
    let tp: Vec<usize> = (0..k).map(|c| confusion[c][c]).collect();
    let row: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<usize> = (0..k).map(|c| confusion.iter().map(|r| r[c]).sum()).collect();
    let per_class_recall = (0..k).map(|c| (row[c] > 0).then(|| tp[c] as f64 / row[c] as f64)).collect();
    let per_class_iou: Vec<Option<f64>> = (0..k)
        .map(|c| {
            let denom = row[c] + col[c] - tp[c];
            (denom > 0).then(|| tp[c] as f64 / denom as f64)
        })
        .collect();
    let subset: Vec<f64> = taxonomy.eval_ids().into_iter().filter_map(|c| per_class_iou[c]).collect();
    let mean_iou = if subset.is_empty() {
        0.0
    } else {
        subset.iter().sum::<f64>() / subset.len() as f64
    };
    Ok(EvalReport {
        num_scenes: n,
        accuracy: tp.iter().sum::<usize>() as f64 / n as f64,
        class_counts: row,
        per_class_recall,
        per_class_iou,
        mean_iou,
        confusion,
        near_miss_rate: None,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl EvalReport {
    /// `class,count,recall,iou` per class, then a `summary` row carrying the
    /// scene count, accuracy and mean IoU.
    pub fn to_csv(&self, taxonomy: &Taxonomy) -> String {
        let mut s = String::from("class,count,recall,iou\n");
        for (c, name) in taxonomy.scene_classes.iter().enumerate() {
            let _ = writeln!(
                s,
                "{name},{},{},{}",
                self.class_counts[c],
                opt(self.per_class_recall[c]),
                opt(self.per_class_iou[c])
            );
        }
        let _ = writeln!(s, "summary,{},{:.6},{:.6}", self.num_scenes, self.accuracy, self.mean_iou);
        s
    }

    /// Square matrix with a header row of predicted classes.
    pub fn confusion_csv(&self, taxonomy: &Taxonomy) -> String {
        let mut s = String::from("true\\pred");
        for name in &taxonomy.scene_classes {
            let _ = write!(s, ",{name}");
        }
        s.push('\n');
        for (name, row) in taxonomy.scene_classes.iter().zip(&self.confusion) {
            s.push_str(name);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    /// Mean recall over evaluation-subset classes with true scenes.
    pub fn mean_recall(&self, taxonomy: &Taxonomy) -> f64 {
        let r: Vec<f64> = taxonomy.eval_ids().into_iter().filter_map(|c| self.per_class_recall[c]).collect();
        if r.is_empty() {
            0.0
        } else {
            r.iter().sum::<f64>() / r.len() as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng as _, SeedableRng};

    use super::*;
    use crate::seed::Rng;

    fn tax() -> Taxonomy {
        Taxonomy::default()
    }

    fn one_hot(c: usize) -> Vec<f64> {
        let mut v = vec![0.0; 21];
        v[c] = 1.0;
        v
    }

    #[test]
    fn perfect_predictions() {
        let t = tax();
        let truths: Vec<usize> = (0..21).collect();
        let scores: Vec<_> = truths.iter().map(|&c| one_hot(c)).collect();
        let r = evaluate(&scores, &truths, &t).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.mean_iou, 1.0);
        assert_eq!(r.near_miss_rate, None);
        for (i, row) in r.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), 1);
            assert_eq!(row[i], 1);
        }
    }

    #[test]
    fn three_scene_fixture() {
        // apartment = 0 and bathroom = 1 are both in the evaluation subset
        let t = tax();
        let r = evaluate_classes(&[0, 1, 1], &[0, 0, 1], &t).unwrap();
        assert_eq!(r.per_class_iou[0], Some(0.5));
        assert_eq!(r.per_class_iou[1], Some(0.5));
        assert_eq!(r.mean_iou, 0.5);
        assert_eq!(r.accuracy, 2.0 / 3.0);
        assert_eq!(r.per_class_recall[0], Some(0.5));
        assert_eq!(r.per_class_recall[1], Some(1.0));
        assert_eq!(r.per_class_recall[2], None);
        assert_eq!(r.per_class_iou[2], None);
        assert_eq!(r.class_counts[..3], [2, 1, 0]);
    }

    #[test]
    fn non_subset_classes_do_not_enter_mean_iou() {
        let t = tax();
        let closet = t.scene_id("closet").unwrap();
        let r = evaluate_classes(&[0, closet], &[0, 0], &t).unwrap();
        assert_eq!(r.per_class_iou[0], Some(0.5));
        assert_eq!(r.per_class_iou[closet], Some(0.0));
        assert_eq!(r.mean_iou, 0.5);
    }

    #[test]
    fn near_miss_uses_rank_two() {
        let t = tax();
        let mut second = vec![0.0; 21];
        second[4] = 3.0;
        second[2] = 2.0;
        let mut third = vec![0.0; 21];
        third[4] = 3.0;
        third[5] = 2.5;
        third[2] = 2.0;
        let r = evaluate(&[second.clone(), third.clone()], &[2, 2], &t).unwrap();
        assert_eq!(r.near_miss_rate, Some(0.5));
        assert_eq!(rank_of(&second, 2), 2);
        assert_eq!(rank_of(&third, 2), 3);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }

    #[test]
    fn confusion_matrix_properties() {
        let m = confusion_matrix(&[4], &[4], 21).unwrap();
        assert_eq!(m.iter().flatten().sum::<usize>(), 1);
        assert_eq!(m[4][4], 1);
        assert!(confusion_matrix(&[21], &[0], 21).is_err());
        assert!(confusion_matrix(&[0, 1], &[0], 21).is_err());

        let mut rng = Rng::seed_from_u64(3);
        let t = tax();
        for _ in 0..50 {
            let n = rng.random_range(1..60);
            let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..21)).collect();
            let q: Vec<usize> = (0..n).map(|_| rng.random_range(0..21)).collect();
            let a = confusion_matrix(&p, &q, 21).unwrap();
            let b = confusion_matrix(&q, &p, 21).unwrap();
            for i in 0..21 {
                for j in 0..21 {
                    assert_eq!(a[i][j], b[j][i]);
                }
            }
            let r = evaluate_classes(&p, &q, &t).unwrap();
            let trace: usize = (0..21).map(|i| a[i][i]).sum();
            assert_eq!(r.accuracy, trace as f64 / n as f64);
            for c in 0..21 {
                if let (Some(iou), Some(rec)) = (r.per_class_iou[c], r.per_class_recall[c]) {
                    assert!(iou <= rec);
                }
            }
            // scene order does not matter
            let (mut p2, mut q2) = (p.clone(), q.clone());
            p2.reverse();
            q2.reverse();
            assert_eq!(evaluate_classes(&p2, &q2, &t).unwrap(), r);
        }
    }

    #[test]
    fn csv_layout() {
        let t = tax();
        let r = evaluate_classes(&[0, 1, 1], &[0, 0, 1], &t).unwrap();
        let csv = r.to_csv(&t);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class,count,recall,iou");
        assert_eq!(lines[1], "apartment,2,0.500000,0.500000");
        assert_eq!(lines[3], "bedroom,0,,");
        assert_eq!(lines[22], "summary,3,0.666667,0.500000");
        assert_eq!(r.confusion_csv(&t).lines().count(), 22);
        assert!(evaluate_classes(&[], &[], &t).is_err());
    }
}
