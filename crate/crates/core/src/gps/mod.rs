//! Greedy policy search over cached candidate predictions, plus the
//! magnitude grid-search baseline and the objective ablation.
//!
//! Starting from an empty policy, step `t` adds the candidate `s` that
//! maximizes `objective(((t - 1) / t) * pi + (1 / t) * pi_s, y)`, where `pi`
//! is the running mean of the chosen candidates. The pool is never pruned,
//! so a candidate can be chosen more than once. Ties go to the lowest id.

mod grid;

pub use grid::{grid_search_magnitude, MagnitudeGridResult};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::calibrate::{calibrated_ll, log_likelihood, MetricReport};
use crate::error::{Error, Result};
use crate::metrics::accuracy;
use crate::predcache::{LabelVector, PredictionMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SearchObjective {
    Accuracy,
    LogLikelihood,
    CalibratedLogLikelihood,
}

impl SearchObjective {
    pub const ALL: [SearchObjective; 3] = [Self::Accuracy, Self::LogLikelihood, Self::CalibratedLogLikelihood];

    pub fn name(self) -> &'static str {
        match self {
            Self::Accuracy => "acc",
            Self::LogLikelihood => "ll",
            Self::CalibratedLogLikelihood => "cll",
        }
    }

    pub fn evaluate<F: Scalar>(self, m: &PredictionMatrix<F>, y: &LabelVector) -> Result<F> {
        match self {
            Self::Accuracy => accuracy(m, y),
            Self::LogLikelihood => log_likelihood(m, y),
            Self::CalibratedLogLikelihood => calibrated_ll(m, y).map(|(v, _)| v),
        }
    }
}

impl fmt::Display for SearchObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SearchObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "acc" | "accuracy" => Ok(Self::Accuracy),
            "ll" | "log-likelihood" => Ok(Self::LogLikelihood),
            "cll" | "calibrated-log-likelihood" => Ok(Self::CalibratedLogLikelihood),
            _ => Err(Error::Config(format!(
                "unknown objective {s:?} (expected acc, ll or cll)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    /// 1-based step index.
    pub t: usize,
    pub chosen: usize,
    /// Objective of the running mean after adding `chosen`.
    pub value: f64,
    /// How many times `chosen` has been picked so far, this step included.
    pub repeat: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    pub objective: SearchObjective,
    pub pool_size: usize,
    pub policy_size: usize,
    pub steps: Vec<TraceStep>,
}

impl SearchTrace {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "tta-gps-trace v1\nobjective {}\npool_size {}\npolicy_size {}\n# t id value repeat\n",
            self.objective, self.pool_size, self.policy_size
        );
        for s in &self.steps {
            out.push_str(&format!("{} {} {:.9} {}\n", s.t, s.chosen, s.value, s.repeat));
        }
        out
    }

    /// Number of distinct candidates in the policy.
    pub fn distinct(&self) -> usize {
        self.steps.iter().filter(|s| s.repeat == 1).count()
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome<F> {
    /// Chosen candidate ids in selection order, with repeats.
    pub ids: Vec<usize>,
    pub trace: SearchTrace,
    /// Running mean of the chosen candidates.
    pub mean: PredictionMatrix<F>,
}

fn check_pool<F: Scalar>(candidates: &[PredictionMatrix<F>], y: &LabelVector, steps: usize) -> Result<()> {
    let first = candidates
        .first()
        .ok_or_else(|| Error::Config("empty candidate pool".into()))?;
    if steps == 0 {
        return Err(Error::Config("policy size T must be at least 1".into()));
    }
    y.check_against(first)?;
    if let Some((i, c)) = candidates.iter().enumerate().find(|(_, c)| c.shape() != first.shape()) {
        return Err(Error::ShapeMismatch(format!(
            "candidate {i} has shape {:?}, candidate 0 has {:?}",
            c.shape(),
            first.shape()
        )));
    }
    Ok(())
}

/// Index of the largest value, lowest index on ties. NaN never wins.
fn argmax_first<F: Scalar>(values: &[F]) -> Option<(usize, F)> {
    values
        .iter()
        .copied()
        .enumerate()
        .fold(None, |best, (i, v)| match best {
            _ if v.is_nan() => best,
            Some((_, b)) if v <= b => best,
            _ => Some((i, v)),
        })
}

/// Greedy policy search of size `steps` over `candidates` (one prediction
/// matrix per sub-policy id, ids being positions in the slice).
pub fn greedy_search<F: Scalar>(
    candidates: &[PredictionMatrix<F>],
    y: &LabelVector,
    steps: usize,
    objective: SearchObjective,
) -> Result<SearchOutcome<F>> {
    check_pool(candidates, y, steps)?;
    let (n, k) = candidates[0].shape();
    let mut mean = PredictionMatrix::zeros(n, k);
    let mut ids = Vec::with_capacity(steps);
    let mut picks = vec![0usize; candidates.len()];
    let mut trace = Vec::with_capacity(steps);
    for t in 1..=steps {
        let scores = candidates
            .par_iter()
            .map(|c| objective.evaluate(&mean.running_mix(c, t)?, y))
            .collect::<Result<Vec<F>>>()?;
        let (best, value) = argmax_first(&scores)
            .ok_or_else(|| Error::Degenerate(format!("objective undefined for every candidate at step {t}")))?;
        mean = mean.running_mix(&candidates[best], t)?;
        picks[best] += 1;
        ids.push(best);
        trace.push(TraceStep {
            t,
            chosen: best,
            value: value.to_f64_lossy(),
            repeat: picks[best],
        });
    }
    Ok(SearchOutcome {
        ids,
        trace: SearchTrace {
            objective,
            pool_size: candidates.len(),
            policy_size: steps,
            steps: trace,
        },
        mean,
    })
}

#[derive(Debug, Clone)]
pub struct AblationRow<F> {
    pub objective: SearchObjective,
    pub ids: Vec<usize>,
    /// Metrics of the final running mean on the search data.
    pub report: MetricReport<F>,
}

/// One greedy search per objective on identical inputs.
pub fn objective_ablation<F: Scalar>(
    candidates: &[PredictionMatrix<F>],
    y: &LabelVector,
    steps: usize,
) -> Result<Vec<AblationRow<F>>> {
    SearchObjective::ALL
        .iter()
        .map(|&objective| {
            let out = greedy_search(candidates, y, steps, objective)?;
            Ok(AblationRow {
                objective,
                report: MetricReport::evaluate(&out.mean, y)?,
                ids: out.ids,
            })
        })
        .collect()
}
