//! `GLOHSEL 1` text files holding a selection result.
//!
//! ```text
//! GLOHSEL 1
//! lambda=<decimal>
//! epsilon=<decimal>
//! <bin_index> <w_task1> <w_task2> ...
//! ```
//!
//! Only selected bins are listed, in ascending order.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{SelectionResult, WeightMatrix};
use crate::scalar::Real;

const HEADER: &str = "GLOHSEL 1";

#[derive(Debug, Error)]
pub enum SelectionFileError {
    #[error("selection file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Parsed contents of a selection file.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionFile {
    pub lambda: f64,
    pub epsilon: f64,
    /// `(bin, per-task weights)`, bins ascending.
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl SelectionFile {
    pub fn from_result<T: Real>(sel: &SelectionResult<T>) -> Self {
        let w = sel.weights.as_array();
        Self {
            lambda: sel.lambda.to_f64_lossy(),
            epsilon: sel.epsilon.to_f64_lossy(),
            rows: sel
                .selected
                .iter()
                .map(|&k| (k, w.row(k).iter().map(|v| v.to_f64_lossy()).collect()))
                .collect(),
        }
    }

    pub fn selected(&self) -> Vec<usize> {
        self.rows.iter().map(|(k, _)| *k).collect()
    }

    /// Rebuilds a full `n_bins x n_tasks` result.
    pub fn to_result<T: Real>(&self, n_bins: usize, n_tasks: usize) -> Option<SelectionResult<T>> {
        let mut w = WeightMatrix::<T>::zeros(n_bins, n_tasks).into_array();
        for (k, ws) in &self.rows {
            if *k >= n_bins || ws.len() != n_tasks {
                return None;
            }
            w.row_mut(*k)
                .iter_mut()
                .zip(ws)
                .for_each(|(o, &v)| *o = T::lit(v));
        }
        Some(SelectionResult {
            lambda: T::lit(self.lambda),
            weights: WeightMatrix::from_array(w),
            selected: self.selected(),
            epsilon: T::lit(self.epsilon),
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{HEADER}\nlambda={}\nepsilon={}\n",
            self.lambda, self.epsilon
        );
        for (k, ws) in &self.rows {
            write!(s, "{k}").unwrap();
            for w in ws {
                write!(s, " {w}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, SelectionFileError> {
        let err = |line: usize, msg: String| SelectionFileError::Parse { line, msg };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        match lines.next() {
            Some((_, HEADER)) => {}
            _ => return Err(err(1, format!("expected {HEADER:?}"))),
        }
        let mut keyed = |key: &str| -> Result<f64, SelectionFileError> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| err(0, format!("missing {key} line")))?;
            line.strip_prefix(key)
                .and_then(|v| v.strip_prefix('='))
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| err(n, format!("expected {key}=<decimal>")))
        };
        let lambda = keyed("lambda")?;
        let epsilon = keyed("epsilon")?;
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let k = parts
                .next()
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or_else(|| err(n, "bad bin index".into()))?;
            let ws = parts
                .map(|t| t.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| err(n, e.to_string()))?;
            if ws.is_empty() {
                return Err(err(n, "no task weights".into()));
            }
            if let Some((prev, prev_ws)) = rows.last() {
                if *prev >= k {
                    return Err(err(n, "bins not strictly ascending".into()));
                }
                if prev_ws.len() != ws.len() {
                    return Err(err(n, "inconsistent task count".into()));
                }
            }
            rows.push((k, ws));
        }
        Ok(Self {
            lambda,
            epsilon,
            rows,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), SelectionFileError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, SelectionFileError> {
        Self::parse(&fs::read_to_string(path)?)
    }
}
