//! Mean absolute error and cumulative scores.

use std::fmt::Write as _;

use thiserror::Error;

pub const DEFAULT_CS_MAX: usize = 15;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{pred} predictions for {truth} labels")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("no predictions")]
    Empty,
    #[error("fold {0:?} has no predictions")]
    EmptyFold(String),
}

fn check(pred: &[f64], truth: &[f64]) -> Result<(), MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

fn abs_errors<'a>(pred: &'a [f64], truth: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    pred.iter().zip(truth).map(|(p, t)| (p - t).abs())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, MetricsError> {
    check(pred, truth)?;
    Ok(abs_errors(pred, truth).sum::<f64>() / pred.len() as f64)
}

/// Fraction of samples whose absolute error is at most `j` years.
pub fn cumulative_score(pred: &[f64], truth: &[f64], j: f64) -> Result<f64, MetricsError> {
    check(pred, truth)?;
    let hits = abs_errors(pred, truth).filter(|&e| e <= j).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Test-set predictions of one leave-one-person-out fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPredictions {
    pub person_id: String,
    pub pred: Vec<f64>,
    pub truth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldSummary {
    pub person_id: String,
    pub n: usize,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n: usize,
    /// Pooled over all test predictions, not averaged over folds.
    pub mae: f64,
    /// Population standard deviation of the pooled absolute errors.
    pub std_abs_error: f64,
    pub per_fold: Vec<FoldSummary>,
    /// `cs_curve[j]` is the cumulative score at `j` years.
    pub cs_curve: Vec<f64>,
}

pub fn aggregate(folds: &[FoldPredictions], cs_max: usize) -> Result<EvalReport, MetricsError> {
    if folds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut per_fold = Vec::with_capacity(folds.len());
    let mut errors = Vec::new();
    for f in folds {
        let m = match mae(&f.pred, &f.truth) {
            Err(MetricsError::Empty) => return Err(MetricsError::EmptyFold(f.person_id.clone())),
            r => r?,
        };
        per_fold.push(FoldSummary {
            person_id: f.person_id.clone(),
            n: f.pred.len(),
            mae: m,
        });
        errors.extend(abs_errors(&f.pred, &f.truth));
    }
    let n = errors.len();
    let mae = errors.iter().sum::<f64>() / n as f64;
    let var = errors.iter().map(|e| (e - mae) * (e - mae)).sum::<f64>() / n as f64;
    let cs_curve = (0..=cs_max)
        .map(|j| errors.iter().filter(|&&e| e <= j as f64).count() as f64 / n as f64)
        .collect();
    Ok(EvalReport {
        n,
        mae,
        std_abs_error: var.sqrt(),
        per_fold,
        cs_curve,
    })
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "summary,{},{}", self.n, self.mae).unwrap();
        writeln!(s, "std_abs_error,{}", self.std_abs_error).unwrap();
        for (j, v) in self.cs_curve.iter().enumerate() {
            writeln!(s, "cs,{j},{v}").unwrap();
        }
        for f in &self.per_fold {
            writeln!(s, "fold,{},{},{}", f.person_id, f.n, f.mae).unwrap();
        }
        s
    }
}
