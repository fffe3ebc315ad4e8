//! Temperature scaling and the calibrated log-likelihood.
//!
//! Temperature acts on the log of (averaged) probabilities:
//! `softmax(ln(p + 1e-12) / tau)`. The calibrated log-likelihood is the mean
//! log-likelihood after fitting `tau` by golden-section search on `ln tau`.

mod crossval;
mod golden;

pub use crossval::test_time_cross_validation;

use std::fmt;

use golden::golden_section_maximize;

use crate::error::{Error, Result};
use crate::metrics::accuracy;
use crate::predcache::{LabelVector, PredictionMatrix};
use crate::scalar::Scalar;

/// Probability floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;
pub const TAU_MIN: f64 = 0.05;
pub const TAU_MAX: f64 = 20.0;
/// Bracket width at which the search on `ln tau` stops.
pub const LN_TAU_TOLERANCE: f64 = 1e-4;
/// Below this spread of the objective across the box, `tau = 1` is returned.
pub const FLAT_OBJECTIVE: f64 = 1e-12;

/// Softmax temperature, `tau > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature<F>(F);

impl<F: Scalar> Temperature<F> {
    pub fn new(tau: F) -> Result<Self> {
        if !(tau.is_finite() && tau > F::zero()) {
            return Err(Error::Config(format!(
                "temperature must be positive and finite, got {tau}"
            )));
        }
        Ok(Self(tau))
    }

    pub fn one() -> Self {
        Self(F::one())
    }

    pub fn value(self) -> F {
        self.0
    }
}

impl<F: fmt::Display> fmt::Display for Temperature<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

fn floored_log<F: Scalar>(p: F) -> F {
    (p + F::c(PROB_FLOOR)).ln()
}

/// Softmax of `logs * inv_tau` into `out`.
#[inline]
fn tempered_softmax<F: Scalar>(logs: &[F], inv_tau: F, out: &mut [F]) {
    let mut max = F::neg_infinity();
    for (o, &l) in out.iter_mut().zip(logs) {
        *o = l * inv_tau;
        if *o > max {
            max = *o;
        }
    }
    let mut sum = F::zero();
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn rescale_with_temperature<F: Scalar>(m: &PredictionMatrix<F>, tau: Temperature<F>) -> PredictionMatrix<F> {
    let k = m.n_classes();
    let inv_tau = F::one() / tau.value();
    let mut data = vec![F::zero(); m.as_flat().len()];
    let mut logs = vec![F::zero(); k];
    for (row, out) in m.rows().zip(data.chunks_exact_mut(k)) {
        for (l, &p) in logs.iter_mut().zip(row) {
            *l = floored_log(p);
        }
        tempered_softmax(&logs, inv_tau, out);
    }
    PredictionMatrix::from_flat_unchecked(m.n_objects(), k, data)
}

/// Mean of `ln(p[i, y_i] + 1e-12)`.
pub fn log_likelihood<F: Scalar>(m: &PredictionMatrix<F>, y: &LabelVector) -> Result<F> {
    y.check_against(m)?;
    if m.n_objects() == 0 {
        return Err(Error::ShapeMismatch("log-likelihood of zero objects".into()));
    }
    let total: F = m.rows().zip(y.as_slice()).map(|(row, &c)| floored_log(row[c])).sum();
    Ok(total / F::from_count(m.n_objects()))
}

/// Log-probabilities precomputed once so the temperature objective can be
/// evaluated many times.
struct TemperatureObjective<'a, F> {
    logs: Vec<F>,
    k: usize,
    labels: &'a [usize],
}

impl<'a, F: Scalar> TemperatureObjective<'a, F> {
    fn new(m: &PredictionMatrix<F>, y: &'a LabelVector) -> Self {
        Self {
            logs: m.as_flat().iter().map(|&p| floored_log(p)).collect(),
            k: m.n_classes(),
            labels: y.as_slice(),
        }
    }

    /// Same arithmetic as `log_likelihood(rescale_with_temperature(m, tau))`.
    fn ll(&self, tau: F) -> F {
        let inv_tau = F::one() / tau;
        let mut out = vec![F::zero(); self.k];
        let total: F = self
            .logs
            .chunks_exact(self.k)
            .zip(self.labels)
            .map(|(logs, &c)| {
                tempered_softmax(logs, inv_tau, &mut out);
                floored_log(out[c])
            })
            .sum();
        total / F::from_count(self.labels.len())
    }
}

/// Temperature maximizing the log-likelihood of `m` on `y` within
/// `[TAU_MIN, TAU_MAX]`.
pub fn fit_temperature<F: Scalar>(m: &PredictionMatrix<F>, y: &LabelVector) -> Result<Temperature<F>> {
    fit_with_value(m, y).map(|(tau, _)| tau)
}

fn fit_with_value<F: Scalar>(m: &PredictionMatrix<F>, y: &LabelVector) -> Result<(Temperature<F>, F)> {
    y.check_against(m)?;
    if m.n_objects() == 0 {
        return Err(Error::ShapeMismatch("cannot fit a temperature on zero objects".into()));
    }
    let objective = TemperatureObjective::new(m, y);
    let eval = |u: f64| objective.ll(F::c(u.exp())).to_f64_lossy();
    let (lo, hi) = (TAU_MIN.ln(), TAU_MAX.ln());
    let (u_best, v_best) = golden_section_maximize(|u| finite_or_min(eval(u)), lo, hi, LN_TAU_TOLERANCE);

    // The search only sees interior points; the box edges and tau = 1 are
    // checked explicitly.
    let candidates = [
        (0.0, finite_or_min(eval(0.0))),
        (u_best, v_best),
        (lo, finite_or_min(eval(lo))),
        (hi, finite_or_min(eval(hi))),
    ];
    let max = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let min = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let (u, _) = if max - min < FLAT_OBJECTIVE {
        candidates[0]
    } else {
        candidates
            .iter()
            .copied()
            .fold(candidates[0], |best, c| if c.1 > best.1 { c } else { best })
    };
    let tau = if u == 0.0 { F::one() } else { F::c(u.exp()) };
    Ok((Temperature(tau), objective.ll(tau)))
}

fn finite_or_min(v: f64) -> f64 {
    if v.is_nan() {
        f64::MIN
    } else {
        v
    }
}

/// Log-likelihood of `m` after rescaling by a given temperature.
pub fn calibrated_ll_on<F: Scalar>(m: &PredictionMatrix<F>, y: &LabelVector, tau: Temperature<F>) -> Result<F> {
    y.check_against(m)?;
    if m.n_objects() == 0 {
        return Err(Error::ShapeMismatch("log-likelihood of zero objects".into()));
    }
    Ok(TemperatureObjective::new(m, y).ll(tau.value()))
}

/// Log-likelihood after fitting the temperature on the same data, with the
/// fitted temperature.
pub fn calibrated_ll<F: Scalar>(m: &PredictionMatrix<F>, y: &LabelVector) -> Result<(F, Temperature<F>)> {
    let (tau, ll) = fit_with_value(m, y)?;
    Ok((ll, tau))
}

/// Accuracy, log-likelihood and calibrated log-likelihood of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport<F> {
    pub accuracy: F,
    pub log_likelihood: F,
    pub calibrated_ll: F,
    /// Fitted temperature (geometric mean over splits for cross-validation).
    pub tau: Temperature<F>,
    /// 0 when the temperature was fitted on the evaluated data itself.
    pub n_splits: usize,
    pub seed: u64,
    /// Set when stratified splitting was impossible.
    pub unstratified: bool,
}

impl<F: Scalar> MetricReport<F> {
    /// All metrics on one set, temperature fitted on that same set.
    pub fn evaluate(m: &PredictionMatrix<F>, y: &LabelVector) -> Result<Self> {
        let (cll, tau) = calibrated_ll(m, y)?;
        Ok(Self {
            accuracy: accuracy(m, y)?,
            log_likelihood: log_likelihood(m, y)?,
            calibrated_ll: cll,
            tau,
            n_splits: 0,
            seed: 0,
            unstratified: false,
        })
    }

    /// `key value` lines, one per field.
    pub fn to_text(&self) -> String {
        format!(
            "tta-gps-report v1\nseed {}\nn_splits {}\ntau {:.6}\naccuracy {:.6}\nlog_likelihood {:.6}\ncalibrated_ll {:.6}\nunstratified {}\n",
            self.seed,
            self.n_splits,
            self.tau.value(),
            self.accuracy,
            self.log_likelihood,
            self.calibrated_ll,
            self.unstratified
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn two_class(rows: &[(f64, usize)]) -> (PredictionMatrix<f64>, LabelVector) {
        let data: Vec<f64> = rows.iter().flat_map(|&(p, _)| [p, 1.0 - p]).collect();
        (
            PredictionMatrix::from_flat(rows.len(), 2, data).unwrap(),
            LabelVector::new(rows.iter().map(|r| r.1).collect()),
        )
    }

    /// Exactly calibrated: for each confidence p (of class 0), a fraction p
    /// of the objects carries label 0.
    pub(crate) fn calibrated_fixture(scale: usize) -> (PredictionMatrix<f64>, LabelVector) {
        let mut rows = Vec::new();
        for (p, n0, n1) in [(0.9, 9, 1), (0.7, 7, 3), (0.6, 3, 2), (0.2, 1, 4), (0.05, 1, 19)] {
            for _ in 0..scale {
                rows.extend(std::iter::repeat_n((p, 0), n0));
                rows.extend(std::iter::repeat_n((p, 1), n1));
            }
        }
        two_class(&rows)
    }

    fn grid_best(m: &PredictionMatrix<f64>, y: &LabelVector, points: usize) -> (f64, f64) {
        (0..points)
            .map(|i| {
                let tau = TAU_MIN + (TAU_MAX - TAU_MIN) * i as f64 / (points - 1) as f64;
                let ll = log_likelihood(&rescale_with_temperature(m, Temperature::new(tau).unwrap()), y).unwrap();
                (tau, ll)
            })
            .fold((f64::NAN, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
    }

    #[test]
    fn unit_temperature_is_identity() {
        let (m, _) = calibrated_fixture(1);
        let r = rescale_with_temperature(&m, Temperature::one());
        for (a, b) in r.as_flat().iter().zip(m.as_flat()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn high_temperature_flattens_two_class_row() {
        let (m, _) = two_class(&[(0.9, 0)]);
        let r = rescale_with_temperature(&m, Temperature::new(20.0).unwrap());
        // Closed form: 1 / (1 + (1/9)^(1/20)).
        let want = 1.0 / (1.0 + (0.1f64 / 0.9).powf(1.0 / 20.0));
        assert!((r.get(0, 0) - want).abs() < 1e-12);
        assert!((r.get(0, 0) - 0.5).abs() < 0.03 && (r.get(0, 1) - 0.5).abs() < 0.03);
    }

    #[test]
    fn log_likelihood_examples() {
        let (m, y) = two_class(&[(1.0, 0), (0.0, 1)]);
        assert!(log_likelihood(&m, &y).unwrap().abs() < 1e-11);
        let u = PredictionMatrix::<f64>::uniform(4, 5);
        let y = LabelVector::new(vec![0, 1, 4, 2]);
        assert!((log_likelihood(&u, &y).unwrap() + 5f64.ln()).abs() < 1e-9);
        let (m, y) = two_class(&[(0.5, 0), (0.5, 1)]);
        assert!((log_likelihood(&m, &y).unwrap() + 2f64.ln()).abs() < 1e-9);
        assert!(log_likelihood(&m, &LabelVector::new(vec![0])).is_err());
    }

    #[test]
    fn calibrated_fixture_fits_unit_temperature() {
        let (m, y) = calibrated_fixture(1);
        let (grid_tau, _) = grid_best(&m, &y, 20001);
        assert!((grid_tau - 1.0).abs() < 0.01, "oracle grid says {grid_tau}");
        let tau = fit_temperature(&m, &y).unwrap().value();
        assert!((tau - 1.0).abs() < 0.05, "{tau}");
    }

    #[test]
    fn inverse_recovery() {
        let (m0, y) = calibrated_fixture(1);
        let m = rescale_with_temperature(&m0, Temperature::new(0.5).unwrap());
        let tau = fit_temperature(&m, &y).unwrap().value();
        assert!((tau - 2.0).abs() < 0.1, "{tau}");
    }

    #[test]
    fn uniform_predictions_return_unit_temperature() {
        let u = PredictionMatrix::<f64>::uniform(6, 3);
        let y = LabelVector::new(vec![0, 1, 2, 0, 1, 2]);
        let (cll, tau) = calibrated_ll(&u, &y).unwrap();
        assert_eq!(tau.value(), 1.0);
        assert!((cll + 3f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn single_confident_correct_object() {
        let (m, y) = two_class(&[(1.0, 0)]);
        let (cll, _) = calibrated_ll(&m, &y).unwrap();
        assert!(cll >= log_likelihood(&m, &y).unwrap());
    }

    #[test]
    fn sharpened_predictions_gain_from_calibration() {
        let (m0, y) = calibrated_fixture(2);
        let sharp = rescale_with_temperature(&m0, Temperature::new(0.1).unwrap());
        let ll = log_likelihood(&sharp, &y).unwrap();
        let (cll, _) = calibrated_ll(&sharp, &y).unwrap();
        assert!(cll > ll + 0.1, "cll {cll} ll {ll}");
    }

    #[test]
    fn works_in_single_precision() {
        let (m0, y) = calibrated_fixture(1);
        let m: PredictionMatrix<f32> = rescale_with_temperature(&m0, Temperature::new(0.5).unwrap()).cast();
        let tau = fit_temperature(&m, &y).unwrap().value();
        assert!((tau - 2.0).abs() < 0.1, "{tau}");
    }

    #[test]
    fn report_text_lists_fields() {
        let (m, y) = calibrated_fixture(1);
        let text = MetricReport::evaluate(&m, &y).unwrap().to_text();
        for key in ["seed", "n_splits", "tau", "accuracy", "log_likelihood", "calibrated_ll"] {
            assert!(text.lines().any(|l| l.starts_with(key)), "{key}");
        }
    }

    fn random_matrix(n: usize, k: usize, seed: u64, sharpness: f64) -> (PredictionMatrix<f64>, LabelVector) {
        let mut rng = stream(seed, &[]);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powf(sharpness) + 1e-9).collect();
            let s: f64 = raw.iter().sum();
            data.extend(raw.iter().map(|v| v / s));
            labels.push(rng.random_range(0..k));
        }
        (
            PredictionMatrix::from_flat(n, k, data).unwrap(),
            LabelVector::new(labels),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn argmax_survives_any_temperature(seed in 0u64..1000, tau in 0.05f64..20.0) {
            let (m, _) = random_matrix(30, 4, seed, 3.0);
            let r = rescale_with_temperature(&m, Temperature::new(tau).unwrap());
            for i in 0..m.n_objects() {
                prop_assert_eq!(r.argmax(i), m.argmax(i));
            }
        }

        #[test]
        fn fit_beats_dense_grid(seed in 0u64..1000, sharp in 0.3f64..6.0) {
            let (m, y) = random_matrix(40, 3, seed, sharp);
            let (cll, _) = calibrated_ll(&m, &y).unwrap();
            let (_, best) = grid_best(&m, &y, 2001);
            prop_assert!(cll >= best - 1e-6, "cll {} grid {}", cll, best);
            prop_assert!(cll >= log_likelihood(&m, &y).unwrap());
        }

        #[test]
        fn class_relabeling_leaves_cll_unchanged(seed in 0u64..1000) {
            let (m, y) = random_matrix(25, 3, seed, 2.0);
            let perm = [2usize, 0, 1];
            let data: Vec<f64> = m.rows().flat_map(|r| {
                let mut out = vec![0.0; 3];
                for c in 0..3 { out[perm[c]] = r[c]; }
                out
            }).collect();
            let mp = PredictionMatrix::from_flat(25, 3, data).unwrap();
            let yp = LabelVector::new(y.as_slice().iter().map(|&c| perm[c]).collect());
            let (a, _) = calibrated_ll(&m, &y).unwrap();
            let (b, _) = calibrated_ll(&mp, &yp).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn ll_is_continuous_in_tau(seed in 0u64..1000, tau in 0.05f64..19.0) {
            let (m, y) = random_matrix(20, 3, seed, 2.0);
            let a = log_likelihood(&rescale_with_temperature(&m, Temperature::new(tau).unwrap()), &y).unwrap();
            let b = log_likelihood(&rescale_with_temperature(&m, Temperature::new(tau * (1.0 + 1e-12)).unwrap()), &y).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
