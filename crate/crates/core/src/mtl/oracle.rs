//! Cyclic block-coordinate descent over the rows of `W`.
//!
//! Much slower than [`super::solve`] on wide problems; kept as an independent
//! reference for checking it on small instances.

use ndarray::Array2;

use super::prox::soft_threshold;
use super::{check_lambda, check_tasks, Mode, MtlError, SolverOptions, TaskDataset, WeightMatrix};
use crate::scalar::Real;

/// Minimizes `sum_l (c_l u_l^2 - g_l u_l) + lambda ||u||_2` over `u`.
///
/// The stationarity condition gives `u_l = g_l / (2 c_l + lambda / nu)` with
/// `nu = ||u||`, so `nu` is the root of `sum_l (g_l / (2 c_l nu + lambda))^2 = 1`,
/// found by bisection.
pub(crate) fn solve_row<T: Real>(g: &[T], c: &[T], lambda: T) -> Vec<T> {
    let two = T::lit(2.0);
    let gnorm = g.iter().map(|&v| v * v).sum::<T>().sqrt();
    if gnorm <= lambda {
        return vec![T::zero(); g.len()];
    }
    if lambda == T::zero() {
        return g
            .iter()
            .zip(c)
            .map(|(&gl, &cl)| {
                if cl > T::zero() {
                    gl / (two * cl)
                } else {
                    T::zero()
                }
            })
            .collect();
    }
    let h = |nu: T| -> T {
        g.iter()
            .zip(c)
            .map(|(&gl, &cl)| {
                let d = gl / (two * cl * nu + lambda);
                d * d
            })
            .sum()
    };
    let c_min = g
        .iter()
        .zip(c)
        .filter(|(gl, _)| **gl != T::zero())
        .map(|(_, &cl)| cl)
        .fold(T::infinity(), T::min);
    let mut lo = T::zero();
    let mut hi = gnorm / (two * c_min);
    for _ in 0..200 {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) > T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = (lo + hi) / two;
    g.iter()
        .zip(c)
        .map(|(&gl, &cl)| gl * nu / (two * cl * nu + lambda))
        .collect()
}

/// Block-coordinate descent reference solver.
///
/// Sweeps until the relative objective decrease over a full sweep falls below
/// `opts.rel_tol`, or `opts.max_iters` sweeps have run.
pub fn solve_cd_oracle<T: Real>(
    data: &[TaskDataset<T>],
    lambda: T,
    opts: &SolverOptions,
) -> Result<WeightMatrix<T>, MtlError> {
    opts.validate()?;
    check_lambda(lambda)?;
    let (k, l) = check_tasks(data)?;
    let two = T::lit(2.0);
    let inv_n: Vec<T> = data
        .iter()
        .map(|t| T::one() / T::from_usize_lossy(t.n_samples()))
        .collect();
    // c[k][l] = ||x_k^l||^2 / N_l
    let c: Vec<Vec<T>> = (0..k)
        .map(|j| {
            data.iter()
                .zip(&inv_n)
                .map(|(t, &s)| t.x().column(j).iter().map(|&v| v * v).sum::<T>() * s)
                .collect()
        })
        .collect();

    let mut w = Array2::<T>::zeros((k, l));
    let mut resid: Vec<Vec<T>> = data.iter().map(|t| t.y().to_vec()).collect();
    let objective = |resid: &[Vec<T>], w: &Array2<T>| -> T {
        let loss: T = resid
            .iter()
            .zip(&inv_n)
            .map(|(r, &s)| r.iter().map(|&v| v * v).sum::<T>() * s)
            .sum();
        let pen: T = match opts.mode {
            Mode::Mtl => w
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt())
                .sum(),
            Mode::Stl => w.iter().map(|v| v.abs()).sum(),
        };
        loss + lambda * pen
    };
    let mut f_prev = objective(&resid, &w);
    let rel_tol = T::lit(opts.rel_tol);

    let mut g = vec![T::zero(); l];
    for sweep in 1..=opts.max_iters {
        for j in 0..k {
            for (li, task) in data.iter().enumerate() {
                let col = task.x().column(j);
                let dot: T = col.iter().zip(&resid[li]).map(|(&a, &b)| a * b).sum();
                // gradient with row j's own contribution added back
                g[li] = two * inv_n[li] * dot + two * c[j][li] * w[[j, li]];
            }
            let u = match opts.mode {
                Mode::Mtl => solve_row(&g, &c[j], lambda),
                Mode::Stl => g
                    .iter()
                    .zip(&c[j])
                    .map(|(&gl, &cl)| {
                        if cl > T::zero() {
                            soft_threshold(gl, lambda) / (two * cl)
                        } else {
                            T::zero()
                        }
                    })
                    .collect(),
            };
            for (li, task) in data.iter().enumerate() {
                let delta = u[li] - w[[j, li]];
                if delta != T::zero() {
                    let col = task.x().column(j);
                    resid[li]
                        .iter_mut()
                        .zip(col.iter())
                        .for_each(|(r, &x)| *r -= x * delta);
                    w[[j, li]] = u[li];
                }
            }
        }
        let f = objective(&resid, &w);
        if !f.is_finite() {
            return Err(MtlError::NonFiniteEncountered { iterations: sweep });
        }
        let change = (f_prev - f).abs() / f_prev.abs().max(T::one());
        f_prev = f;
        if change < rel_tol {
            break;
        }
    }
    Ok(WeightMatrix::from_array(w))
}
