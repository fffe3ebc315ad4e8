//! Accuracy and corruption-robustness errors.
//!
//! A corruption table holds the top-1 error `E[c][s]` for every corruption
//! `c` and severity `s = 1..=5`. Per corruption, `uCE = mean_s E` and
//! `CE = sum_s E / sum_s E_baseline`; averaging over corruptions gives muCE
//! and mCE. Tables are generic so exact rationals can be used in tests.

use std::fmt::{self, Display};
use std::str::FromStr;

use num_traits::{FromPrimitive, Num};

use crate::error::{Error, Result};
use crate::predcache::{LabelVector, PredictionMatrix};
use crate::scalar::Scalar;

pub const SEVERITIES: usize = 5;
const HEADER: &str = "corruption 1 2 3 4 5";

/// Fraction of rows whose argmax (lowest class on ties) equals the label.
pub fn accuracy<F: Scalar>(m: &PredictionMatrix<F>, y: &LabelVector) -> Result<F> {
    y.check_against(m)?;
    if m.n_objects() == 0 {
        return Err(Error::ShapeMismatch("accuracy of zero objects".into()));
    }
    let hits = (0..m.n_objects()).filter(|&i| m.argmax(i) == y.get(i)).count();
    Ok(F::from_count(hits) / F::from_count(m.n_objects()))
}

/// Numeric cell type of a corruption table.
pub trait ErrorValue: Num + Copy + PartialOrd + FromPrimitive + Display {}
impl<T: Num + Copy + PartialOrd + FromPrimitive + Display> ErrorValue for T {}

/// Per-corruption, per-severity error rates.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionErrorTable<T> {
    names: Vec<String>,
    errors: Vec<[T; SEVERITIES]>,
}

/// Normalizer table (central-crop errors of a reference model). Same shape
/// as the table it normalizes; a zero severity sum is rejected at use.
pub type BaselineErrorTable<T> = CorruptionErrorTable<T>;

impl<T: ErrorValue> CorruptionErrorTable<T> {
    pub fn new(rows: Vec<(String, [T; SEVERITIES])>) -> Result<Self> {
        let mut names = Vec::with_capacity(rows.len());
        let mut errors = Vec::with_capacity(rows.len());
        for (name, row) in rows {
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(Error::Format(format!("invalid corruption name {name:?}")));
            }
            if names.contains(&name) {
                return Err(Error::Format(format!("duplicate corruption {name}")));
            }
            if let Some(e) = row.iter().find(|&&e| e < T::zero() || e > T::one()) {
                return Err(Error::Format(format!("error {e} of {name} outside [0, 1]")));
            }
            names.push(name);
            errors.push(row);
        }
        Ok(Self { names, errors })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn row(&self, corruption: &str) -> Result<&[T; SEVERITIES]> {
        self.names
            .iter()
            .position(|n| n == corruption)
            .map(|i| &self.errors[i])
            .ok_or_else(|| Error::UnknownCorruption(corruption.to_string()))
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[T; SEVERITIES])> {
        self.names.iter().map(String::as_str).zip(&self.errors)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\n");
        for (name, row) in self.rows() {
            out.push_str(name);
            for e in row {
                out.push_str(&format!(" {e}"));
            }
            out.push('\n');
        }
        out
    }
}

impl<T: ErrorValue + FromStr> CorruptionErrorTable<T> {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, l)) if l.split_whitespace().eq(HEADER.split_whitespace()) => {}
            Some((n, _)) => return Err(Error::parse(n, "header", format!("expected `{HEADER}`"))),
            None => return Err(Error::parse(1, "header", "empty table")),
        }
        let mut rows = Vec::new();
        for (n, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != SEVERITIES + 1 {
                return Err(Error::parse(
                    n,
                    "row",
                    format!("expected a name and {SEVERITIES} errors"),
                ));
            }
            let mut row = [T::zero(); SEVERITIES];
            for (s, f) in fields[1..].iter().enumerate() {
                row[s] = f
                    .parse()
                    .map_err(|_| Error::parse(n, format!("severity {}", s + 1), format!("bad number {f:?}")))?;
            }
            rows.push((fields[0].to_string(), row));
        }
        Self::new(rows)
    }
}

impl<F: Scalar + ErrorValue> CorruptionErrorTable<F> {
    /// Error table from predictions on every `(corruption, severity)` set;
    /// severities are 1-based. Corruptions keep their first-seen order.
    pub fn from_predictions<'a>(
        entries: impl IntoIterator<Item = (&'a str, usize, &'a PredictionMatrix<F>, &'a LabelVector)>,
    ) -> Result<Self> {
        let mut rows: Vec<(String, [Option<F>; SEVERITIES])> = Vec::new();
        for (name, severity, m, y) in entries {
            if !(1..=SEVERITIES).contains(&severity) {
                return Err(Error::Format(format!(
                    "severity {severity} of {name} outside 1..={SEVERITIES}"
                )));
            }
            let i = match rows.iter().position(|r| r.0 == name) {
                Some(i) => i,
                None => {
                    rows.push((name.to_string(), [None; SEVERITIES]));
                    rows.len() - 1
                }
            };
            rows[i].1[severity - 1] = Some(F::one() - accuracy(m, y)?);
        }
        let rows = rows
            .into_iter()
            .map(|(name, cells)| {
                let mut row = [F::zero(); SEVERITIES];
                for (s, cell) in cells.iter().enumerate() {
                    row[s] = cell.ok_or_else(|| Error::Format(format!("{name} is missing severity {}", s + 1)))?;
                }
                Ok((name, row))
            })
            .collect::<Result<_>>()?;
        Self::new(rows)
    }
}

impl<T: ErrorValue> fmt::Display for CorruptionErrorTable<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn count<T: ErrorValue>(n: usize) -> T {
    T::from_usize(n).expect("count representable")
}

fn severity_sum<T: ErrorValue>(row: &[T; SEVERITIES]) -> T {
    row.iter().fold(T::zero(), |acc, &e| acc + e)
}

/// uCE: mean error over the five severities.
pub fn unnormalized_corruption_error<T: ErrorValue>(t: &CorruptionErrorTable<T>, corruption: &str) -> Result<T> {
    Ok(severity_sum(t.row(corruption)?) / count(SEVERITIES))
}

/// CE: severity-summed error relative to the baseline's.
pub fn normalized_corruption_error<T: ErrorValue>(
    t: &CorruptionErrorTable<T>,
    baseline: &BaselineErrorTable<T>,
    corruption: &str,
) -> Result<T> {
    let num = severity_sum(t.row(corruption)?);
    let den = severity_sum(baseline.row(corruption)?);
    if den <= T::zero() {
        return Err(Error::UndefinedNormalizer(corruption.to_string()));
    }
    Ok(num / den)
}

/// muCE without a baseline, mCE with one.
pub fn mean_corruption_error<T: ErrorValue>(
    t: &CorruptionErrorTable<T>,
    baseline: Option<&BaselineErrorTable<T>>,
) -> Result<T> {
    if t.is_empty() {
        return Err(Error::Format("empty corruption table".into()));
    }
    let mut total = T::zero();
    for name in t.names() {
        total = total
            + match baseline {
                Some(b) => normalized_corruption_error(t, b, name)?,
                None => unnormalized_corruption_error(t, name)?,
            };
    }
    Ok(total / count(t.len()))
}
