//! Prediction matrices, their on-disk cache, and the model adapters that
//! produce them.

mod adapter;
mod cache_file;
mod predict;
mod subprocess;
mod toy;

pub use adapter::{cache_file_name, Classifier, ModelAdapter};
pub use cache_file::{read_cache, read_cache_from, write_cache, write_cache_to, CACHE_HEADER_LEN, CACHE_MAGIC};
pub use predict::{predict_images, predict_policy, predict_under_subpolicy};
pub use subprocess::{serve, SubprocessClassifier, PROTOCOL_VERSION};
pub use toy::{ToyClassifier, ToyConfig};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row sums of a valid matrix are within this of 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// `n_objects x n_classes` class probabilities, one row per object.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix<F> {
    n_objects: usize,
    n_classes: usize,
    data: Vec<F>,
}

impl<F: Scalar> PredictionMatrix<F> {
    /// Build from row-major data, checking entries lie in `[0, 1]` and rows
    /// sum to 1 within [`ROW_SUM_TOLERANCE`].
    pub fn from_flat(n_objects: usize, n_classes: usize, data: Vec<F>) -> Result<Self> {
        Self::from_flat_with_tolerance(n_objects, n_classes, data, ROW_SUM_TOLERANCE)
    }

    pub(crate) fn from_flat_with_tolerance(n_objects: usize, n_classes: usize, data: Vec<F>, tol: f64) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::ShapeMismatch(
                "prediction matrix needs at least one class".into(),
            ));
        }
        if data.len() != n_objects * n_classes {
            return Err(Error::ShapeMismatch(format!(
                "{n_objects}x{n_classes} matrix needs {} entries, got {}",
                n_objects * n_classes,
                data.len()
            )));
        }
        for (i, row) in data.chunks_exact(n_classes).enumerate() {
            if let Some(bad) = row.iter().find(|p| !(**p >= F::zero() && **p <= F::one())) {
                return Err(Error::Format(format!("row {i} has probability {bad} outside [0, 1]")));
            }
            let sum: f64 = row.iter().map(|p| p.to_f64_lossy()).sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::Format(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(Self {
            n_objects,
            n_classes,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let n_classes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_classes) {
            return Err(Error::ShapeMismatch("rows have different lengths".into()));
        }
        Self::from_flat(rows.len(), n_classes, rows.concat())
    }

    /// Uniform rows.
    pub fn uniform(n_objects: usize, n_classes: usize) -> Self {
        let p = F::one() / F::from_count(n_classes);
        Self {
            n_objects,
            n_classes,
            data: vec![p; n_objects * n_classes],
        }
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_flat_unchecked(n_objects: usize, n_classes: usize, data: Vec<F>) -> Self {
        debug_assert_eq!(data.len(), n_objects * n_classes);
        Self {
            n_objects,
            n_classes,
            data,
        }
    }

    pub fn n_objects(&self) -> usize {
        self.n_objects
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_objects, self.n_classes)
    }

    pub fn as_flat(&self) -> &[F] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, F> {
        self.data.chunks_exact(self.n_classes)
    }

    pub fn get(&self, i: usize, c: usize) -> F {
        self.data[i * self.n_classes + c]
    }

    /// Index of the largest entry of row `i`; ties go to the lowest class.
    pub fn argmax(&self, i: usize) -> usize {
        argmax_row(self.row(i))
    }

    /// Rows at the given indices, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.n_classes);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self::from_flat_unchecked(idx.len(), self.n_classes, data)
    }

    /// Convert the scalar type (e.g. f64 to the f32 storage type).
    pub fn cast<G: Scalar>(&self) -> PredictionMatrix<G> {
        PredictionMatrix {
            n_objects: self.n_objects,
            n_classes: self.n_classes,
            data: self.data.iter().map(|&p| G::c(p.to_f64_lossy())).collect(),
        }
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "matrices are {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// `((t - 1) / t) * self + (1 / t) * other`: the running-mean update
    /// after adding the `t`-th matrix.
    pub fn running_mix(&self, other: &Self, t: usize) -> Result<Self> {
        self.check_same_shape(other)?;
        let t = F::from_count(t);
        let keep = (t - F::one()) / t;
        let add = F::one() / t;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| keep * a + add * b)
            .collect();
        Ok(Self::from_flat_unchecked(self.n_objects, self.n_classes, data))
    }

    /// Zero matrix of the given shape, the starting state of a running mean.
    pub(crate) fn zeros(n_objects: usize, n_classes: usize) -> Self {
        Self::from_flat_unchecked(n_objects, n_classes, vec![F::zero(); n_objects * n_classes])
    }
}

pub(crate) fn argmax_row<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (c, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = c;
        }
    }
    best
}

/// Class label per object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self::new(idx.iter().map(|&i| self.labels[i]).collect())
    }

    /// Labels must match the matrix's object count and class range.
    pub fn check_against<F: Scalar>(&self, m: &PredictionMatrix<F>) -> Result<()> {
        if self.labels.len() != m.n_objects() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} objects",
                self.labels.len(),
                m.n_objects()
            )));
        }
        if let Some((i, &y)) = self.labels.iter().enumerate().find(|(_, &y)| y >= m.n_classes()) {
            return Err(Error::ShapeMismatch(format!(
                "label {y} of object {i} is outside 0..{}",
                m.n_classes()
            )));
        }
        Ok(())
    }

    /// Parse one integer label per line.
    pub fn parse(text: &str) -> Result<Self> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.trim()
                    .parse()
                    .map_err(|_| Error::parse(i + 1, "label", format!("`{}` is not a class index", l.trim())))
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn to_text(&self) -> String {
        self.labels.iter().map(|y| format!("{y}\n")).collect()
    }
}

impl From<Vec<usize>> for LabelVector {
    fn from(v: Vec<usize>) -> Self {
        Self::new(v)
    }
}

/// Elementwise mean of equally shaped matrices: the test-time augmentation
/// average over sub-policies.
pub fn average_predictions<F: Scalar>(ms: &[PredictionMatrix<F>]) -> Result<PredictionMatrix<F>> {
    let first = ms
        .first()
        .ok_or_else(|| Error::ShapeMismatch("cannot average an empty list of matrices".into()))?;
    let mut sum = vec![F::zero(); first.data.len()];
    for m in ms {
        first.check_same_shape(m)?;
        for (s, &p) in sum.iter_mut().zip(&m.data) {
            *s += p;
        }
    }
    let k = F::from_count(ms.len());
    let data = sum.into_iter().map(|s| s / k).collect();
    Ok(PredictionMatrix::from_flat_unchecked(
        first.n_objects,
        first.n_classes,
        data,
    ))
}

/// Pre-average ensemble members: `members[j][i]` is member `j`'s matrix for
/// candidate `i`; the result has one averaged matrix per candidate.
pub fn ensemble_candidates<F: Scalar>(members: &[Vec<PredictionMatrix<F>>]) -> Result<Vec<PredictionMatrix<F>>> {
    let n = members.first().map_or(0, Vec::len);
    if members.iter().any(|m| m.len() != n) {
        return Err(Error::ShapeMismatch(
            "ensemble members have different pool sizes".into(),
        ));
    }
    (0..n)
        .map(|i| {
            let per_member: Vec<_> = members.iter().map(|m| m[i].clone()).collect();
            average_predictions(&per_member)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> PredictionMatrix<f64> {
        PredictionMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn validation() {
        assert!(PredictionMatrix::<f64>::from_flat(1, 2, vec![0.5, 0.6]).is_err());
        assert!(PredictionMatrix::<f64>::from_flat(1, 2, vec![1.5, -0.5]).is_err());
        assert!(PredictionMatrix::<f64>::from_flat(1, 2, vec![0.5]).is_err());
        assert!(PredictionMatrix::<f64>::from_flat(1, 2, vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn averaging_examples() {
        let a = m(&[&[1.0, 0.0, 0.0]]);
        let b = m(&[&[0.0, 1.0, 0.0]]);
        assert_eq!(average_predictions(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(average_predictions(&[a.clone(), b]).unwrap(), m(&[&[0.5, 0.5, 0.0]]));
        let c = m(&[&[0.2, 0.3, 0.5], &[0.7, 0.2, 0.1]]);
        let avg = average_predictions(&vec![c.clone(); 7]).unwrap();
        for (x, y) in avg.as_flat().iter().zip(c.as_flat()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(average_predictions::<f64>(&[]).is_err());
        assert!(average_predictions(&[c, a]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        let x = m(&[&[0.5, 0.5], &[0.2, 0.8]]);
        assert_eq!(x.argmax(0), 0);
        assert_eq!(x.argmax(1), 1);
    }

    #[test]
    fn labels_parse_and_check() {
        let y = LabelVector::parse("0\n2\n\n1\n").unwrap();
        assert_eq!(y.as_slice(), &[0, 2, 1]);
        assert!(LabelVector::parse("0\nx\n").is_err());
        let u = PredictionMatrix::<f64>::uniform(3, 2);
        assert!(y.check_against(&u).is_err());
    }

    fn matrix_strategy(n: usize, k: usize) -> impl Strategy<Value = PredictionMatrix<f64>> {
        proptest::collection::vec(0.01f64..1.0, n * k).prop_map(move |raw| {
            let data: Vec<f64> = raw
                .chunks(k)
                .flat_map(|r| {
                    let s: f64 = r.iter().sum();
                    r.iter().map(move |v| v / s).collect::<Vec<_>>()
                })
                .collect();
            PredictionMatrix::from_flat(n, k, data).unwrap()
        })
    }

    proptest! {
        #[test]
        fn average_stays_on_simplex_and_ignores_order(ms in proptest::collection::vec(matrix_strategy(4, 3), 1..6)) {
            let avg = average_predictions(&ms).unwrap();
            for row in avg.rows() {
                let s: f64 = row.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-6);
                prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
            }
            let mut rev = ms.clone();
            rev.reverse();
            let back = average_predictions(&rev).unwrap();
            for (a, b) in avg.as_flat().iter().zip(back.as_flat()) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }

        #[test]
        fn running_mix_equals_batch_mean(ms in proptest::collection::vec(matrix_strategy(3, 4), 1..12)) {
            let mut pi = PredictionMatrix::zeros(3, 4);
            for (t, m) in ms.iter().enumerate() {
                pi = pi.running_mix(m, t + 1).unwrap();
            }
            let batch = average_predictions(&ms).unwrap();
            for (a, b) in pi.as_flat().iter().zip(batch.as_flat()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn ensemble_mean_of_means_commutes(
            members in proptest::collection::vec(proptest::collection::vec(matrix_strategy(2, 3), 3), 2..4)
        ) {
            // Averaging members per candidate then over candidates equals
            // averaging every (member, candidate) matrix at once.
            let pre = ensemble_candidates(&members).unwrap();
            let lhs = average_predictions(&pre).unwrap();
            let all: Vec<_> = members.iter().flatten().cloned().collect();
            let rhs = average_predictions(&all).unwrap();
            for (a, b) in lhs.as_flat().iter().zip(rhs.as_flat()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
