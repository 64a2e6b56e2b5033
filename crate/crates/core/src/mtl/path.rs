use super::fista::solve_from;
use super::{
    check_tasks, lambda_max, MtlError, SelectionResult, SolverOptions, TaskDataset, WeightMatrix,
    DEFAULT_SELECTION_EPSILON,
};
use crate::scalar::Real;

pub const MAX_BISECTION_STEPS: usize = 40;

/// Bisection stops once the bracket is this narrow relative to `lambda_max`.
const MIN_RELATIVE_BRACKET: f64 = 1e-6;

/// Bisects `lambda` on `[0, lambda_max]` for the largest support of at most
/// `budget` bins; equal supports prefer the smaller `lambda`.
///
/// Each solve is warm-started from the previous one.
pub fn fit_for_budget<T: Real>(
    data: &[TaskDataset<T>],
    budget: usize,
    opts: &SolverOptions,
) -> Result<SelectionResult<T>, MtlError> {
    fit_for_budget_with_epsilon(data, budget, opts, T::lit(DEFAULT_SELECTION_EPSILON))
}

pub fn fit_for_budget_with_epsilon<T: Real>(
    data: &[TaskDataset<T>],
    budget: usize,
    opts: &SolverOptions,
    epsilon: T,
) -> Result<SelectionResult<T>, MtlError> {
    let (k, l) = check_tasks(data)?;
    if budget == 0 || budget > k {
        return Err(MtlError::BudgetOutOfRange { budget, k });
    }
    opts.validate()?;
    let lmax = lambda_max(data, opts.mode)?;
    let mut best = SelectionResult::new(lmax, WeightMatrix::zeros(k, l), epsilon);
    if lmax == T::zero() {
        return Ok(best);
    }

    if budget == k {
        let out = solve_from(data, T::zero(), opts, None)?;
        return Ok(SelectionResult::new(T::zero(), out.weights, epsilon));
    }

    let two = T::lit(2.0);
    let min_width = lmax * T::lit(MIN_RELATIVE_BRACKET);
    let (mut lo, mut hi) = (T::zero(), lmax);
    let mut warm: Option<WeightMatrix<T>> = None;
    for _ in 0..MAX_BISECTION_STEPS {
        if hi - lo <= min_width {
            break;
        }
        let mid = (lo + hi) / two;
        let out = solve_from(data, mid, opts, warm.as_ref())?;
        let candidate = SelectionResult::new(mid, out.weights.clone(), epsilon);
        let size = candidate.selected.len();
        if size <= budget {
            if size > best.selected.len() || (size == best.selected.len() && mid < best.lambda) {
                best = candidate;
            }
            hi = mid;
        } else {
            lo = mid;
        }
        warm = Some(out.weights);
    }
    Ok(best)
}
