//! Sparse bin selection by regularized least squares.
//!
//! Every task `l` has its own design matrix `X_l` (`N_l x K`) and labels
//! `y_l`. The coefficients form a `K x L` matrix `W` whose column `l` is the
//! task-`l` regressor and whose row `k` groups bin `k` across tasks. Two
//! penalties are supported:
//!
//! * [`Mode::Mtl`]: `lambda * sum_k ||W[k, :]||_2`, which zeroes whole rows and
//!   so selects the same bins for every task;
//! * [`Mode::Stl`]: `lambda * sum ||W||_1`, independent lasso per task.
//!
//! The smooth part is `sum_l (1/N_l) ||y_l - X_l w_l||^2`. [`solve`] runs an
//! accelerated proximal gradient method with backtracking; [`oracle`] holds a
//! block-coordinate-descent solver that is only used to cross-check it.

mod fista;
mod linalg;
pub mod oracle;
mod path;
mod prox;
pub mod selfile;

pub use fista::{solve, solve_from, SolveOutcome};
pub use oracle::solve_cd_oracle;
pub use path::{fit_for_budget, fit_for_budget_with_epsilon, MAX_BISECTION_STEPS};
pub use prox::{group_soft_threshold, soft_threshold};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum MtlError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("lambda must be nonnegative, got {0}")]
    NegativeLambda(f64),
    #[error("non-finite value encountered after {iterations} iterations")]
    NonFiniteEncountered { iterations: usize },
    #[error("budget {budget} outside 1..={k}")]
    BudgetOutOfRange { budget: usize, k: usize },
    #[error("invalid task data: {0}")]
    InvalidTask(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
}

/// One task's samples: rows of `x` are feature vectors, `y` the labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset<T> {
    pub task_id: String,
    x: Array2<T>,
    y: Array1<T>,
}

impl<T: Real> TaskDataset<T> {
    pub fn new(task_id: impl Into<String>, x: Array2<T>, y: Array1<T>) -> Result<Self, MtlError> {
        let task_id = task_id.into();
        if x.nrows() == 0 {
            return Err(MtlError::InvalidTask(format!(
                "task {task_id} has no samples"
            )));
        }
        if x.nrows() != y.len() {
            return Err(MtlError::ShapeMismatch(format!(
                "task {task_id}: {} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
            return Err(MtlError::InvalidTask(format!(
                "task {task_id} contains non-finite values"
            )));
        }
        let x = if x.is_standard_layout() {
            x
        } else {
            x.as_standard_layout().into_owned()
        };
        Ok(Self { task_id, x, y })
    }

    pub fn x(&self) -> &Array2<T> {
        &self.x
    }

    pub fn y(&self) -> &Array1<T> {
        &self.y
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn into_parts(self) -> (String, Array2<T>, Array1<T>) {
        (self.task_id, self.x, self.y)
    }
}

/// `K x L` coefficient matrix: rows are bins, columns are tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T>(Array2<T>);

impl<T: Real> WeightMatrix<T> {
    pub fn zeros(k: usize, l: usize) -> Self {
        Self(Array2::zeros((k, l)))
    }

    pub fn from_array(a: Array2<T>) -> Self {
        Self(a)
    }

    pub fn as_array(&self) -> &Array2<T> {
        &self.0
    }

    pub fn into_array(self) -> Array2<T> {
        self.0
    }

    pub fn n_bins(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_tasks(&self) -> usize {
        self.0.ncols()
    }

    pub fn row_norms(&self) -> Vec<T> {
        self.0
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt())
            .collect()
    }

    /// Ascending indices of rows whose Euclidean norm exceeds `epsilon`.
    pub fn support(&self, epsilon: T) -> Vec<usize> {
        self.row_norms()
            .into_iter()
            .enumerate()
            .filter(|&(_, n)| n > epsilon)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == T::zero())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Row-wise l2,1 penalty shared across tasks.
    #[default]
    Mtl,
    /// Element-wise l1 penalty; tasks decouple.
    Stl,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Mtl => "mtl",
            Mode::Stl => "stl",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mtl" => Ok(Mode::Mtl),
            "stl" => Ok(Mode::Stl),
            other => Err(format!("unknown mode {other:?} (expected mtl or stl)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop once the relative objective change drops below this.
    pub rel_tol: f64,
    pub initial_step: f64,
    /// Backtracking factor applied to the step on a failed decrease test.
    pub shrink: f64,
    pub mode: Mode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            rel_tol: 1e-6,
            initial_step: 1.0,
            shrink: 0.5,
            mode: Mode::Mtl,
        }
    }
}

impl SolverOptions {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), MtlError> {
        if self.max_iters == 0 {
            return Err(MtlError::InvalidOptions("max_iters must be >= 1".into()));
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return Err(MtlError::InvalidOptions("rel_tol must be > 0".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(MtlError::InvalidOptions("shrink must lie in (0, 1)".into()));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(MtlError::InvalidOptions("initial_step must be > 0".into()));
        }
        Ok(())
    }
}

pub const DEFAULT_SELECTION_EPSILON: f64 = 1e-8;

/// Outcome of a budgeted selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult<T> {
    pub lambda: T,
    pub weights: WeightMatrix<T>,
    /// Ascending bin indices whose coefficient row norm exceeds `epsilon`.
    pub selected: Vec<usize>,
    pub epsilon: T,
}

impl<T: Real> SelectionResult<T> {
    pub fn new(lambda: T, weights: WeightMatrix<T>, epsilon: T) -> Self {
        let selected = weights.support(epsilon);
        Self {
            lambda,
            weights,
            selected,
            epsilon,
        }
    }
}

/// Returns `(K, L)` after checking that all tasks agree on `K`.
pub(crate) fn check_tasks<T: Real>(data: &[TaskDataset<T>]) -> Result<(usize, usize), MtlError> {
    let first = data
        .first()
        .ok_or_else(|| MtlError::ShapeMismatch("no tasks".into()))?;
    let k = first.n_features();
    if let Some(t) = data.iter().find(|t| t.n_features() != k) {
        return Err(MtlError::ShapeMismatch(format!(
            "task {} has {} features, task {} has {k}",
            t.task_id,
            t.n_features(),
            first.task_id
        )));
    }
    Ok((k, data.len()))
}

fn check_weights<T: Real>(w: &WeightMatrix<T>, k: usize, l: usize) -> Result<(), MtlError> {
    if w.0.dim() != (k, l) {
        return Err(MtlError::ShapeMismatch(format!(
            "weights are {:?}, data needs ({k}, {l})",
            w.0.dim()
        )));
    }
    Ok(())
}

pub(crate) fn check_lambda<T: Real>(lambda: T) -> Result<(), MtlError> {
    if lambda < T::zero() || lambda.is_nan() {
        return Err(MtlError::NegativeLambda(lambda.to_f64_lossy()));
    }
    Ok(())
}

/// Value of the regularizer for `w` (without the lambda factor).
pub fn penalty<T: Real>(w: &WeightMatrix<T>, mode: Mode) -> T {
    match mode {
        Mode::Mtl => w.row_norms().into_iter().sum(),
        Mode::Stl => w.0.iter().map(|v| v.abs()).sum(),
    }
}

/// Smooth part: `sum_l (1/N_l) ||y_l - X_l w_l||^2`.
pub fn smooth_loss<T: Real>(w: &WeightMatrix<T>, data: &[TaskDataset<T>]) -> Result<T, MtlError> {
    let (k, l) = check_tasks(data)?;
    check_weights(w, k, l)?;
    let mut total = T::zero();
    for (task, col) in data.iter().zip(w.0.columns()) {
        let col = col.to_vec();
        let mut fwd = vec![T::zero(); task.n_samples()];
        linalg::x_dot(task.x().view(), &col, &mut fwd);
        let sq: T = fwd
            .iter()
            .zip(task.y())
            .map(|(&p, &y)| (y - p) * (y - p))
            .sum();
        total += sq / T::from_usize_lossy(task.n_samples());
    }
    Ok(total)
}

/// Gradient of [`smooth_loss`]: column `l` is `(2/N_l) X_l^T (X_l w_l - y_l)`.
pub fn smooth_gradient<T: Real>(
    w: &WeightMatrix<T>,
    data: &[TaskDataset<T>],
) -> Result<Array2<T>, MtlError> {
    let (k, l) = check_tasks(data)?;
    check_weights(w, k, l)?;
    let mut grad = Array2::zeros((k, l));
    let mut buf = vec![T::zero(); k];
    for (li, task) in data.iter().enumerate() {
        let col = w.0.column(li).to_vec();
        let mut r = vec![T::zero(); task.n_samples()];
        linalg::x_dot(task.x().view(), &col, &mut r);
        let scale = T::lit(2.0) / T::from_usize_lossy(task.n_samples());
        r.iter_mut()
            .zip(task.y())
            .for_each(|(ri, &yi)| *ri = (*ri - yi) * scale);
        linalg::xt_dot(task.x().view(), &r, &mut buf);
        grad.column_mut(li).assign(&Array1::from(buf.clone()));
    }
    Ok(grad)
}

/// Full objective: smooth loss plus `lambda` times the penalty of `mode`.
pub fn objective<T: Real>(
    w: &WeightMatrix<T>,
    data: &[TaskDataset<T>],
    lambda: T,
    mode: Mode,
) -> Result<T, MtlError> {
    check_lambda(lambda)?;
    Ok(smooth_loss(w, data)? + lambda * penalty(w, mode))
}

/// Negated smooth gradient at `W = 0`, i.e. `(2/N_l) X_l^T y_l` per column.
fn gradient_at_zero<T: Real>(data: &[TaskDataset<T>]) -> Result<Array2<T>, MtlError> {
    let (k, l) = check_tasks(data)?;
    let mut g = Array2::zeros((k, l));
    let mut buf = vec![T::zero(); k];
    for (li, task) in data.iter().enumerate() {
        let scale = T::lit(2.0) / T::from_usize_lossy(task.n_samples());
        let r: Vec<T> = task.y().iter().map(|&v| v * scale).collect();
        linalg::xt_dot(task.x().view(), &r, &mut buf);
        g.column_mut(li).assign(&Array1::from(buf.clone()));
    }
    Ok(g)
}

/// Smallest `lambda` at which `W = 0` minimizes the objective.
pub fn lambda_max<T: Real>(data: &[TaskDataset<T>], mode: Mode) -> Result<T, MtlError> {
    let g = gradient_at_zero(data)?;
    Ok(match mode {
        Mode::Mtl => WeightMatrix(g)
            .row_norms()
            .into_iter()
            .fold(T::zero(), T::max),
        Mode::Stl => g.iter().fold(T::zero(), |m, v| m.max(v.abs())),
    })
}
