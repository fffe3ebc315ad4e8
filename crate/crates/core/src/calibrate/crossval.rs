use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{calibrated_ll_on, fit_temperature, log_likelihood, MetricReport, Temperature};
use crate::error::{Error, Result};
use crate::metrics::accuracy;
use crate::predcache::{LabelVector, PredictionMatrix};
use crate::rng::stream;
use crate::scalar::Scalar;

const SPLIT_STREAM: u64 = 0xc5_0000;

/// Index halves `(a, b)` of one split. Stratified halving puts
/// `floor(count / 2)` objects of each class into `a`.
fn split_halves(labels: &[usize], stratified: bool, seed: u64, split: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rng = stream(seed, &[SPLIT_STREAM, split as u64]);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut take = |mut idx: Vec<usize>| {
        idx.shuffle(&mut rng);
        let half = idx.len() / 2;
        a.extend_from_slice(&idx[..half]);
        b.extend_from_slice(&idx[half..]);
    };
    if stratified {
        let n_classes = labels.iter().max().map_or(0, |&c| c + 1);
        let mut by_class = vec![Vec::new(); n_classes];
        for (i, &c) in labels.iter().enumerate() {
            by_class[c].push(i);
        }
        for idx in by_class.into_iter().filter(|v| !v.is_empty()) {
            take(idx);
        }
    } else {
        take((0..labels.len()).collect());
    }
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

struct SplitScores<F> {
    accuracy: F,
    ll: F,
    cll: F,
    tau: F,
}

/// Repeated half/half evaluation: for each split, fit the temperature on the
/// first half and score accuracy, log-likelihood and calibrated
/// log-likelihood on the second; the report holds the mean over splits.
///
/// Falls back to unstratified halving (and sets `unstratified`) when some
/// class has a single object.
pub fn test_time_cross_validation<F: Scalar>(
    m: &PredictionMatrix<F>,
    y: &LabelVector,
    n_splits: usize,
    seed: u64,
) -> Result<MetricReport<F>> {
    y.check_against(m)?;
    if n_splits == 0 {
        return Err(Error::Config("n_splits must be at least 1".into()));
    }
    if m.n_objects() < 2 {
        return Err(Error::ShapeMismatch(
            "cross-validation needs at least two objects".into(),
        ));
    }
    let mut counts = vec![0usize; m.n_classes()];
    for &c in y.as_slice() {
        counts[c] += 1;
    }
    let stratified = !counts.contains(&1);

    let scores: Vec<SplitScores<F>> = (0..n_splits)
        .into_par_iter()
        .map(|s| {
            let (ia, ib) = split_halves(y.as_slice(), stratified, seed, s);
            let (ma, ya) = (m.select_rows(&ia), y.select(&ia));
            let (mb, yb) = (m.select_rows(&ib), y.select(&ib));
            let tau = fit_temperature(&ma, &ya)?;
            Ok(SplitScores {
                accuracy: accuracy(&mb, &yb)?,
                ll: log_likelihood(&mb, &yb)?,
                cll: calibrated_ll_on(&mb, &yb, tau)?,
                tau: tau.value(),
            })
        })
        .collect::<Result<_>>()?;

    let k = F::from_count(n_splits);
    let mean = |f: fn(&SplitScores<F>) -> F| scores.iter().map(f).sum::<F>() / k;
    Ok(MetricReport {
        accuracy: mean(|s| s.accuracy),
        log_likelihood: mean(|s| s.ll),
        calibrated_ll: mean(|s| s.cll),
        tau: Temperature::new(mean(|s| s.tau.ln()).exp())?,
        n_splits,
        seed,
        unstratified: !stratified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_are_a_partition_and_stratified() {
        let labels: Vec<usize> = (0..23).map(|i| i % 3).collect();
        let (a, b) = split_halves(&labels, true, 5, 0);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        for c in 0..3 {
            let na = a.iter().filter(|&&i| labels[i] == c).count();
            let total = labels.iter().filter(|&&l| l == c).count();
            assert_eq!(na, total / 2);
        }
        assert_ne!(split_halves(&labels, true, 5, 1).0, a);
    }

    #[test]
    fn singleton_class_triggers_fallback() {
        let m = PredictionMatrix::<f64>::uniform(5, 3);
        let y = LabelVector::new(vec![0, 0, 1, 1, 2]);
        let r = test_time_cross_validation(&m, &y, 3, 1).unwrap();
        assert!(r.unstratified);
        let y = LabelVector::new(vec![0, 0, 1, 1, 1]);
        assert!(!test_time_cross_validation(&m, &y, 3, 1).unwrap().unstratified);
    }

    #[test]
    fn single_split_is_reproducible() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let p = 0.1 + 0.8 * (i as f64 / 39.0);
                vec![p, 1.0 - p]
            })
            .collect();
        let m = PredictionMatrix::from_rows(&rows).unwrap();
        let y = LabelVector::new((0..40).map(|i| (i * 7 % 3 == 0) as usize).collect());
        let a = test_time_cross_validation(&m, &y, 1, 42).unwrap();
        let b = test_time_cross_validation(&m, &y, 1, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_splits, 1);
    }
}
