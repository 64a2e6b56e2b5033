use ndarray::Array2;

use super::linalg::{x_dot, xt_dot};
use super::prox::{group_soft_threshold_in_place, soft_threshold};
use super::{
    check_lambda, check_tasks, lambda_max, objective, Mode, MtlError, SolverOptions, TaskDataset,
    WeightMatrix,
};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct SolveOutcome<T> {
    pub weights: WeightMatrix<T>,
    pub objective: T,
    pub iterations: usize,
    /// False when `max_iters` was reached before the stopping rule fired.
    pub converged: bool,
}

/// Accelerated proximal gradient from a zero start.
pub fn solve<T: Real>(
    data: &[TaskDataset<T>],
    lambda: T,
    opts: &SolverOptions,
) -> Result<WeightMatrix<T>, MtlError> {
    solve_from(data, lambda, opts, None).map(|o| o.weights)
}

/// Accelerated proximal gradient, optionally warm-started.
///
/// For `lambda >= lambda_max` the zero matrix is optimal and returned as is.
pub fn solve_from<T: Real>(
    data: &[TaskDataset<T>],
    lambda: T,
    opts: &SolverOptions,
    warm: Option<&WeightMatrix<T>>,
) -> Result<SolveOutcome<T>, MtlError> {
    opts.validate()?;
    check_lambda(lambda)?;
    let (k, l) = check_tasks(data)?;
    if let Some(w) = warm {
        if w.as_array().dim() != (k, l) {
            return Err(MtlError::ShapeMismatch(format!(
                "warm start is {:?}, data needs ({k}, {l})",
                w.as_array().dim()
            )));
        }
    }
    if lambda >= lambda_max(data, opts.mode)? {
        let weights = WeightMatrix::zeros(k, l);
        let objective = objective(&weights, data, lambda, opts.mode)?;
        return Ok(SolveOutcome {
            weights,
            objective,
            iterations: 0,
            converged: true,
        });
    }
    let start = warm.cloned().unwrap_or_else(|| WeightMatrix::zeros(k, l));
    run(data, lambda, opts, start)
}

struct Columns<T> {
    // one length-K vector per task
    w: Vec<Vec<T>>,
    // X_l w_l per task
    fwd: Vec<Vec<T>>,
}

fn penalty_cols<T: Real>(cols: &[Vec<T>], mode: Mode) -> T {
    match mode {
        Mode::Stl => cols.iter().flatten().map(|v| v.abs()).sum(),
        Mode::Mtl => {
            let k = cols[0].len();
            (0..k)
                .map(|j| cols.iter().map(|c| c[j] * c[j]).sum::<T>().sqrt())
                .sum()
        }
    }
}

fn prox_cols<T: Real>(cols: &mut [Vec<T>], tau: T, mode: Mode) {
    match mode {
        Mode::Stl => cols
            .iter_mut()
            .flatten()
            .for_each(|v| *v = soft_threshold(*v, tau)),
        Mode::Mtl => {
            let k = cols[0].len();
            let mut row = vec![T::zero(); cols.len()];
            for j in 0..k {
                row.iter_mut().zip(cols.iter()).for_each(|(r, c)| *r = c[j]);
                group_soft_threshold_in_place(&mut row, tau);
                row.iter().zip(cols.iter_mut()).for_each(|(&r, c)| c[j] = r);
            }
        }
    }
}

fn loss_from_fwd<T: Real>(fwd: &[Vec<T>], data: &[TaskDataset<T>]) -> T {
    fwd.iter()
        .zip(data)
        .map(|(f, t)| {
            let sq: T = f.iter().zip(t.y()).map(|(&p, &y)| (p - y) * (p - y)).sum();
            sq / T::from_usize_lossy(t.n_samples())
        })
        .sum()
}

fn forward<T: Real>(w: &[Vec<T>], data: &[TaskDataset<T>]) -> Vec<Vec<T>> {
    w.iter()
        .zip(data)
        .map(|(col, t)| {
            let mut out = vec![T::zero(); t.n_samples()];
            x_dot(t.x().view(), col, &mut out);
            out
        })
        .collect()
}

fn all_finite<T: Real>(cols: &[Vec<T>]) -> bool {
    cols.iter().flatten().all(|v| v.is_finite())
}

pub(crate) fn run<T: Real>(
    data: &[TaskDataset<T>],
    lambda: T,
    opts: &SolverOptions,
    start: WeightMatrix<T>,
) -> Result<SolveOutcome<T>, MtlError> {
    let (k, l) = check_tasks(data)?;
    let mode = opts.mode;
    let shrink = T::lit(opts.shrink);
    let rel_tol = T::lit(opts.rel_tol);
    let min_step = T::min_positive_value().sqrt();
    let slack_scale = T::epsilon() * T::lit(16.0);

    let w0: Vec<Vec<T>> = (0..l)
        .map(|c| start.as_array().column(c).to_vec())
        .collect();
    let fwd0 = forward(&w0, data);
    let mut cur = Columns { w: w0, fwd: fwd0 };
    let mut prev = Columns {
        w: cur.w.clone(),
        fwd: cur.fwd.clone(),
    };
    let mut f_prev = loss_from_fwd(&cur.fwd, data) + lambda * penalty_cols(&cur.w, mode);
    if !f_prev.is_finite() {
        return Err(MtlError::NonFiniteEncountered { iterations: 0 });
    }

    let mut theta = T::one();
    let mut beta = T::zero();
    let mut step = T::lit(opts.initial_step);
    let mut grad: Vec<Vec<T>> = vec![vec![T::zero(); k]; l];
    let mut resid: Vec<Vec<T>> = data
        .iter()
        .map(|t| vec![T::zero(); t.n_samples()])
        .collect();
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iters {
        iterations = it;
        // extrapolated point and its forward products (linear in w)
        let y: Vec<Vec<T>> = cur
            .w
            .iter()
            .zip(&prev.w)
            .map(|(c, p)| c.iter().zip(p).map(|(&a, &b)| a + beta * (a - b)).collect())
            .collect();
        let fwd_y: Vec<Vec<T>> = cur
            .fwd
            .iter()
            .zip(&prev.fwd)
            .map(|(c, p)| c.iter().zip(p).map(|(&a, &b)| a + beta * (a - b)).collect())
            .collect();

        let mut f_y = T::zero();
        for (li, task) in data.iter().enumerate() {
            let n = T::from_usize_lossy(task.n_samples());
            let scale = T::lit(2.0) / n;
            let mut sq = T::zero();
            for ((r, &p), &target) in resid[li].iter_mut().zip(&fwd_y[li]).zip(task.y()) {
                let d = p - target;
                sq += d * d;
                *r = d * scale;
            }
            f_y += sq / n;
            xt_dot(task.x().view(), &resid[li], &mut grad[li]);
        }
        if !f_y.is_finite() || !all_finite(&grad) {
            return Err(MtlError::NonFiniteEncountered { iterations: it });
        }

        // backtracking on the smooth part
        let (z, fwd_z, f_z) = loop {
            let mut z: Vec<Vec<T>> = y
                .iter()
                .zip(&grad)
                .map(|(yc, gc)| yc.iter().zip(gc).map(|(&a, &g)| a - step * g).collect())
                .collect();
            prox_cols(&mut z, step * lambda, mode);
            let fwd_z = forward(&z, data);
            let f_z = loss_from_fwd(&fwd_z, data);
            let mut lin = T::zero();
            let mut quad = T::zero();
            for ((zc, yc), gc) in z.iter().zip(&y).zip(&grad) {
                for ((&a, &b), &g) in zc.iter().zip(yc).zip(gc) {
                    let d = a - b;
                    lin += g * d;
                    quad += d * d;
                }
            }
            let bound = f_y + lin + quad / (T::lit(2.0) * step);
            let slack = slack_scale * f_y.abs().max(T::one());
            if f_z.is_finite() && f_z <= bound + slack {
                break (z, fwd_z, f_z);
            }
            step *= shrink;
            if step < min_step {
                return Err(MtlError::NonFiniteEncountered { iterations: it });
            }
        };

        let f_new = f_z + lambda * penalty_cols(&z, mode);
        if !f_new.is_finite() {
            return Err(MtlError::NonFiniteEncountered { iterations: it });
        }
        prev = std::mem::replace(&mut cur, Columns { w: z, fwd: fwd_z });

        let theta_next = (T::one() + (T::one() + T::lit(4.0) * theta * theta).sqrt()) / T::lit(2.0);
        beta = (theta - T::one()) / theta_next;
        theta = theta_next;

        let change = (f_new - f_prev).abs() / f_prev.abs().max(T::one());
        f_prev = f_new;
        if change < rel_tol {
            converged = true;
            break;
        }
    }

    let mut out = Array2::zeros((k, l));
    for (li, col) in cur.w.iter().enumerate() {
        out.column_mut(li)
            .iter_mut()
            .zip(col)
            .for_each(|(o, &v)| *o = v);
    }
    let weights = WeightMatrix::from_array(out);
    let objective = objective(&weights, data, lambda, mode)?;
    Ok(SolveOutcome {
        weights,
        objective,
        iterations,
        converged,
    })
}
