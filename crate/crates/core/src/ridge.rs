//! Ridge refit on the selected bins.
//!
//! The sparse solver shrinks its coefficients towards zero, so the final
//! per-task regressors are refit with ridge regression on the selected bins
//! only. Columns and labels are centered, which gives each model an
//! intercept; predictions are clamped to the training label range.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mtl::TaskDataset;
use crate::scalar::Real;

pub const POOLED_TASK: &str = "pooled";

#[derive(Debug, Error)]
pub enum RidgeError {
    #[error("normal equations are singular (alpha = {alpha})")]
    SingularSystem { alpha: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("alpha grid is empty")]
    GridEmpty,
    #[error("{n} samples cannot be split into {k} folds")]
    TooFewSamples { n: usize, k: usize },
    #[error("invalid alpha {0}")]
    InvalidAlpha(f64),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("feature vector of length {len} is too short for bin {needed}")]
    FeatureTooShort { len: usize, needed: usize },
    #[error("model file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit<T> {
    pub weights: Array1<T>,
    pub intercept: T,
}

/// Solves `A x = b` for symmetric positive-definite `A` by Cholesky.
///
/// Returns `None` when a pivot is not safely positive.
pub(crate) fn cholesky_solve<T: Real>(a: &Array2<T>, b: &Array1<T>) -> Option<Array1<T>> {
    let n = a.nrows();
    let max_diag = a.diag().iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let tol = T::epsilon() * T::from_usize_lossy(n.max(1)) * T::lit(16.0) * max_diag;
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for p in 0..j {
            d -= l[[j, p]] * l[[j, p]];
        }
        if d.is_nan() || d <= tol {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for p in 0..j {
                s -= l[[i, p]] * l[[j, p]];
            }
            l[[i, j]] = s / d;
        }
    }
    // forward then backward substitution
    let mut z = Array1::<T>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for p in 0..i {
            s -= l[[i, p]] * z[p];
        }
        z[i] = s / l[[i, i]];
    }
    let mut x = Array1::<T>::zeros(n);
    for i in (0..n).rev() {
        let mut s = z[i];
        for p in i + 1..n {
            s -= l[[p, i]] * x[p];
        }
        x[i] = s / l[[i, i]];
    }
    Some(x)
}

/// Ridge regression with an unpenalized intercept.
pub fn fit_ridge<T: Real>(
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    alpha: T,
) -> Result<RidgeFit<T>, RidgeError> {
    let (n, p) = x.dim();
    if n == 0 || n != y.len() {
        return Err(RidgeError::ShapeMismatch(format!(
            "{n} rows and {} labels",
            y.len()
        )));
    }
    if !(alpha.is_finite() && alpha >= T::zero()) {
        return Err(RidgeError::InvalidAlpha(alpha.to_f64_lossy()));
    }
    let x_mean = x.mean_axis(Axis(0)).expect("n > 0");
    let y_mean = y.mean().expect("n > 0");
    if p == 0 {
        return Ok(RidgeFit {
            weights: Array1::zeros(0),
            intercept: y_mean,
        });
    }
    let xc = &x - &x_mean.view().insert_axis(Axis(0));
    let yc = y.mapv(|v| v - y_mean);
    let mut gram = xc.t().dot(&xc);
    for i in 0..p {
        gram[[i, i]] += alpha;
    }
    let rhs = xc.t().dot(&yc);
    let weights = cholesky_solve(&gram, &rhs).ok_or(RidgeError::SingularSystem {
        alpha: alpha.to_f64_lossy(),
    })?;
    let intercept = y_mean - x_mean.dot(&weights);
    Ok(RidgeFit { weights, intercept })
}

impl<T: Real> RidgeFit<T> {
    pub fn predict_row(&self, x: ArrayView1<'_, T>) -> T {
        x.dot(&self.weights) + self.intercept
    }
}

/// Picks the alpha with the lowest k-fold validation MAE (ties go to the
/// larger alpha). Rows are shuffled with `seed`, then cut into contiguous folds.
pub fn select_alpha<T: Real>(
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    grid: &[T],
    k: usize,
    seed: u64,
) -> Result<T, RidgeError> {
    if grid.is_empty() {
        return Err(RidgeError::GridEmpty);
    }
    let n = x.nrows();
    if n != y.len() {
        return Err(RidgeError::ShapeMismatch(format!(
            "{n} rows and {} labels",
            y.len()
        )));
    }
    if k < 2 || n < k {
        return Err(RidgeError::TooFewSamples { n, k });
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let bounds: Vec<usize> = (0..=k).map(|f| f * n / k).collect();

    let mut best: Option<(T, T)> = None;
    for &alpha in grid {
        let mut total = T::zero();
        let mut usable = true;
        for f in 0..k {
            let val: Vec<usize> = order[bounds[f]..bounds[f + 1]].to_vec();
            let train: Vec<usize> = order[..bounds[f]]
                .iter()
                .chain(&order[bounds[f + 1]..])
                .copied()
                .collect();
            let xt = x.select(Axis(0), &train);
            let yt = y.select(Axis(0), &train);
            let fit = match fit_ridge(xt.view(), yt.view(), alpha) {
                Ok(fit) => fit,
                Err(RidgeError::SingularSystem { .. }) => {
                    usable = false;
                    break;
                }
                Err(e) => return Err(e),
            };
            let err: T = val
                .iter()
                .map(|&i| (fit.predict_row(x.row(i)) - y[i]).abs())
                .sum();
            total += err / T::from_usize_lossy(val.len());
        }
        if !usable {
            continue;
        }
        let mae = total / T::from_usize_lossy(k);
        best = match best {
            Some((b_mae, b_alpha)) if mae > b_mae || (mae == b_mae && alpha <= b_alpha) => {
                Some((b_mae, b_alpha))
            }
            _ => Some((mae, alpha)),
        };
    }
    best.map(|(_, a)| a).ok_or(RidgeError::SingularSystem {
        alpha: grid
            .iter()
            .fold(f64::NEG_INFINITY, |m, a| m.max(a.to_f64_lossy())),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeConfig {
    pub alpha_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            alpha_grid: (-3..=3).map(|e| 10f64.powi(e)).collect(),
            folds: 5,
            seed: 0,
        }
    }
}

/// Ridge regressor for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRidge<T> {
    pub task: String,
    pub alpha: T,
    pub weights: Vec<T>,
    pub intercept: T,
    pub clamp: (T, T),
}

/// Per-task ridge regressors sharing one set of selected bins.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel<T> {
    pub selected: Vec<usize>,
    pub tasks: Vec<TaskRidge<T>>,
}

/// Fits one task's regressor on the `selected` columns of `task.x()`.
///
/// The alpha comes from [`select_alpha`] when the task has enough samples
/// for the configured folds; tiny tasks fall back to fewer folds, and a
/// single-sample task takes the largest alpha.
pub fn fit_task<T: Real>(
    task: &TaskDataset<T>,
    selected: &[usize],
    cfg: &RidgeConfig,
) -> Result<TaskRidge<T>, RidgeError> {
    let k = task.n_features();
    if let Some(&bad) = selected.iter().find(|&&s| s >= k) {
        return Err(RidgeError::FeatureTooShort {
            len: k,
            needed: bad,
        });
    }
    if cfg.alpha_grid.is_empty() {
        return Err(RidgeError::GridEmpty);
    }
    let xs = task.x().select(Axis(1), selected);
    let y = task.y();
    let grid: Vec<T> = cfg.alpha_grid.iter().map(|&a| T::lit(a)).collect();
    let n = task.n_samples();
    let folds = cfg.folds.min(n);
    let alpha = if folds >= 2 {
        select_alpha(xs.view(), y.view(), &grid, folds, cfg.seed)?
    } else {
        grid.iter().copied().fold(T::neg_infinity(), T::max)
    };
    let fit = fit_ridge(xs.view(), y.view(), alpha)?;
    let lo = y.iter().copied().fold(T::infinity(), T::min);
    let hi = y.iter().copied().fold(T::neg_infinity(), T::max);
    Ok(TaskRidge {
        task: task.task_id.clone(),
        alpha,
        weights: fit.weights.to_vec(),
        intercept: fit.intercept,
        clamp: (lo, hi),
    })
}

impl<T: Real> RidgeModel<T> {
    pub fn fit(
        tasks: &[TaskDataset<T>],
        selected: &[usize],
        cfg: &RidgeConfig,
    ) -> Result<Self, RidgeError> {
        let tasks = tasks
            .iter()
            .map(|t| fit_task(t, selected, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            selected: selected.to_vec(),
            tasks,
        })
    }

    pub fn task(&self, label: &str) -> Option<&TaskRidge<T>> {
        self.tasks.iter().find(|t| t.task == label)
    }

    /// Linear output before clamping.
    pub fn predict_raw(&self, x: &[T], task: &str) -> Result<T, RidgeError> {
        let model = self
            .task(task)
            .ok_or_else(|| RidgeError::UnknownTask(task.to_string()))?;
        if let Some(&last) = self.selected.last() {
            if x.len() <= last {
                return Err(RidgeError::FeatureTooShort {
                    len: x.len(),
                    needed: last,
                });
            }
        }
        Ok(self
            .selected
            .iter()
            .zip(&model.weights)
            .map(|(&k, &w)| x[k] * w)
            .sum::<T>()
            + model.intercept)
    }

    pub fn predict(&self, x: &[T], task: &str) -> Result<T, RidgeError> {
        let raw = self.predict_raw(x, task)?;
        let (lo, hi) = self.task(task).expect("checked in predict_raw").clamp;
        Ok(raw.max(lo).min(hi))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("GLOHRIDGE 1\n");
        for t in &self.tasks {
            writeln!(s, "task={}", t.task).unwrap();
            writeln!(s, "alpha={}", t.alpha).unwrap();
            writeln!(s, "intercept={}", t.intercept).unwrap();
            writeln!(s, "clamp={} {}", t.clamp.0, t.clamp.1).unwrap();
            for (k, w) in self.selected.iter().zip(&t.weights) {
                writeln!(s, "{k} {w}").unwrap();
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, RidgeError> {
        let err = |line: usize, msg: &str| RidgeError::Parse {
            line,
            msg: msg.to_string(),
        };
        let num = |line: usize, v: &str| -> Result<T, RidgeError> {
            v.trim()
                .parse::<f64>()
                .map(T::lit)
                .map_err(|_| err(line, "expected a decimal"))
        };
        let mut lines = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty())
            .peekable();
        match lines.next() {
            Some((_, "GLOHRIDGE 1")) => {}
            _ => return Err(err(1, "expected \"GLOHRIDGE 1\"")),
        }
        let mut tasks = Vec::new();
        let mut selected: Option<Vec<usize>> = None;
        while let Some((n, line)) = lines.next() {
            let task = line
                .strip_prefix("task=")
                .ok_or_else(|| err(n, "expected task=<label>"))?
                .to_string();
            let mut field = |key: &str| -> Result<(usize, String), RidgeError> {
                let (n, l) = lines
                    .next()
                    .ok_or_else(|| err(n, "unexpected end of file"))?;
                l.strip_prefix(key)
                    .map(|v| (n, v.to_string()))
                    .ok_or_else(|| err(n, &format!("expected {key}")))
            };
            let (an, a) = field("alpha=")?;
            let (inn, i) = field("intercept=")?;
            let (cn, c) = field("clamp=")?;
            let mut parts = c.split_whitespace();
            let lo = num(cn, parts.next().unwrap_or(""))?;
            let hi = num(cn, parts.next().unwrap_or(""))?;
            if lo > hi {
                return Err(err(cn, "clamp min exceeds max"));
            }
            let mut bins = Vec::new();
            let mut weights = Vec::new();
            while let Some(&(bn, l)) = lines.peek() {
                if l.starts_with("task=") {
                    break;
                }
                lines.next();
                let mut parts = l.split_whitespace();
                let k = parts
                    .next()
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| err(bn, "bad bin index"))?;
                let w = num(bn, parts.next().unwrap_or(""))?;
                bins.push(k);
                weights.push(w);
            }
            match &selected {
                None => selected = Some(bins),
                Some(s) if *s == bins => {}
                Some(_) => return Err(err(n, "tasks disagree on selected bins")),
            }
            tasks.push(TaskRidge {
                task,
                alpha: num(an, &a)?,
                weights,
                intercept: num(inn, &i)?,
                clamp: (lo, hi),
            });
        }
        Ok(Self {
            selected: selected.unwrap_or_default(),
            tasks,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), RidgeError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, RidgeError> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn randn(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
    }

    #[test]
    fn orthonormal_design() {
        // centered, orthonormal columns
        let s = 0.5f64;
        let x = array![[s, s], [s, -s], [-s, s], [-s, -s]];
        let y: Array1<f64> = array![3.0, 1.0, 2.0, -2.0];
        let fit = fit_ridge(x.view(), y.view(), 0.0).unwrap();
        let yc = y.mapv(|v| v - 1.0);
        let expect = x.t().dot(&yc);
        for (a, b) in fit.weights.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((fit.intercept - 1.0).abs() < 1e-12);
    }

    #[test]
    fn heavy_penalty_gives_mean() {
        let x = randn(15, 4, 3);
        let y = randn(15, 1, 4).column(0).mapv(|v| v * 10.0 + 30.0);
        let fit = fit_ridge(x.view(), y.view(), 1e12).unwrap();
        assert!(fit.weights.iter().all(|w| w.abs() < 1e-8));
        assert!((fit.intercept - y.mean().unwrap()).abs() < 1e-6);
    }

    #[test]
    fn singular_without_penalty() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let y = array![1.0, 2.0, 3.0];
        assert!(matches!(
            fit_ridge(x.view(), y.view(), 0.0),
            Err(RidgeError::SingularSystem { .. })
        ));
        assert!(fit_ridge(x.view(), y.view(), 0.1).is_ok());
        assert!(matches!(
            fit_ridge(x.view(), array![1.0].view(), 0.1),
            Err(RidgeError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn no_selected_bins_predicts_mean() {
        let x = Array2::<f64>::zeros((3, 0));
        let fit = fit_ridge(x.view(), array![1.0, 2.0, 6.0].view(), 1.0).unwrap();
        assert_eq!(fit.intercept, 3.0);
    }

    #[test]
    fn alpha_selection_noiseless() {
        let x = randn(40, 5, 1);
        let y = x.dot(&array![1.0, -2.0, 0.5, 3.0, 1.5]);
        let a = select_alpha(x.view(), y.view(), &[1e-6, 1e3], 5, 7).unwrap();
        assert_eq!(a, 1e-6);
    }

    #[test]
    fn alpha_selection_noise() {
        let x = randn(30, 10, 2);
        let y = randn(30, 1, 3).column(0).to_owned();
        let a = select_alpha(x.view(), y.view(), &[1e-6, 1e6], 5, 7).unwrap();
        assert_eq!(a, 1e6);
    }

    #[test]
    fn alpha_selection_edges() {
        let x = randn(10, 2, 1);
        let y = x.column(0).to_owned();
        assert_eq!(select_alpha(x.view(), y.view(), &[0.5], 5, 0).unwrap(), 0.5);
        assert!(matches!(
            select_alpha(x.view(), y.view(), &[], 5, 0),
            Err(RidgeError::GridEmpty)
        ));
        assert!(matches!(
            select_alpha(x.view(), y.view(), &[1.0, 2.0], 11, 0),
            Err(RidgeError::TooFewSamples { .. })
        ));
        // constant labels: every alpha is perfect, so the tie goes to the larger one
        let flat = Array1::from_elem(10, 4.0);
        assert_eq!(
            select_alpha(x.view(), flat.view(), &[0.1, 10.0, 1.0], 5, 0).unwrap(),
            10.0
        );
    }

    fn model() -> RidgeModel<f64> {
        RidgeModel {
            selected: vec![1, 4],
            tasks: vec![
                TaskRidge {
                    task: "male".into(),
                    alpha: 0.01,
                    weights: vec![2.0, -1.0],
                    intercept: 10.0,
                    clamp: (0.0, 69.0),
                },
                TaskRidge {
                    task: "female".into(),
                    alpha: 1.0,
                    weights: vec![0.0, 0.0],
                    intercept: -4.0,
                    clamp: (0.0, 69.0),
                },
            ],
        }
    }

    #[test]
    fn prediction_rules() {
        let m = model();
        let x = [9.0, 3.0, 9.0, 9.0, 1.0];
        assert_eq!(m.predict(&x, "male").unwrap(), 15.0);
        // zero weights: intercept -4, clamped to 0
        assert_eq!(m.predict_raw(&x, "female").unwrap(), -4.0);
        assert_eq!(m.predict(&x, "female").unwrap(), 0.0);
        assert!(matches!(
            m.predict(&x, "child"),
            Err(RidgeError::UnknownTask(_))
        ));
        assert!(matches!(
            m.predict(&x[..4], "male"),
            Err(RidgeError::FeatureTooShort { .. })
        ));
    }

    #[test]
    fn exact_fit_recovers_label() {
        let x = randn(30, 6, 9);
        let y = x
            .dot(&array![1.0, 0.0, -1.0, 2.0, 0.5, 0.0])
            .mapv(|v| v + 20.0);
        let task = TaskDataset::new("male", x.clone(), y.clone()).unwrap();
        let cfg = RidgeConfig {
            alpha_grid: vec![1e-9],
            ..RidgeConfig::default()
        };
        let m = RidgeModel::fit(&[task], &[0, 2, 3, 4], &cfg).unwrap();
        for i in 0..30 {
            let p = m.predict(x.row(i).as_slice().unwrap(), "male").unwrap();
            assert!((p - y[i]).abs() < 1e-3);
        }
    }

    #[test]
    fn model_file_round_trip() {
        let m = model();
        let text = m.to_text();
        assert!(text.starts_with(
            "GLOHRIDGE 1\ntask=male\nalpha=0.01\nintercept=10\nclamp=0 69\n1 2\n4 -1\n"
        ));
        assert_eq!(RidgeModel::<f64>::parse(&text).unwrap(), m);
        assert!(RidgeModel::<f64>::parse("GLOHRIDGE 2\n").is_err());
        assert!(
            RidgeModel::<f64>::parse("GLOHRIDGE 1\ntask=a\nalpha=1\nintercept=0\nclamp=5 1\n")
                .is_err()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn normal_equation_residual(seed in any::<u64>(), n in 3usize..25, p in 1usize..6, alpha in 1e-3f64..1e2) {
            let x = randn(n, p, seed);
            let y = randn(n, 1, seed ^ 1).column(0).mapv(|v| 5.0 * v + 12.0);
            let fit = fit_ridge(x.view(), y.view(), alpha).unwrap();
            let xm = x.mean_axis(Axis(0)).unwrap();
            let xc = &x - &xm.view().insert_axis(Axis(0));
            let yc = y.mapv(|v| v - y.mean().unwrap());
            let rhs = xc.t().dot(&yc);
            let lhs = xc.t().dot(&xc).dot(&fit.weights) + &fit.weights * alpha;
            let res = (&lhs - &rhs).mapv(|v| v * v).sum().sqrt();
            let bound = 1e-8 * (1.0 + rhs.mapv(|v| v * v).sum().sqrt());
            prop_assert!(res <= bound, "{res} > {bound}");
        }

        #[test]
        fn shrinkage_is_monotone(seed in any::<u64>(), a1 in 1e-3f64..10.0, factor in 1.01f64..100.0) {
            let x = randn(20, 4, seed);
            let y = randn(20, 1, seed ^ 7).column(0).to_owned();
            let norm = |a: f64| fit_ridge(x.view(), y.view(), a).unwrap().weights.mapv(|v| v * v).sum().sqrt();
            prop_assert!(norm(a1) + 1e-10 >= norm(a1 * factor));
        }

        #[test]
        fn label_shift_shifts_predictions(seed in any::<u64>(), c in -50.0f64..50.0) {
            let x = randn(12, 3, seed);
            let y = randn(12, 1, seed ^ 3).column(0).mapv(|v| v + 30.0);
            let a = fit_ridge(x.view(), y.view(), 0.5).unwrap();
            let b = fit_ridge(x.view(), y.mapv(|v| v + c).view(), 0.5).unwrap();
            for i in 0..12 {
                let d = b.predict_row(x.row(i)) - a.predict_row(x.row(i)) - c;
                prop_assert!(d.abs() < 1e-9);
            }
        }

        #[test]
        fn unselected_bins_do_not_matter(seed in any::<u64>(), junk in -1e3f64..1e3) {
            let m = model();
            let mut x: Vec<f64> = randn(1, 6, seed).row(0).to_vec();
            let before = m.predict(&x, "male").unwrap();
            for k in [0, 2, 3, 5] {
                x[k] = junk;
            }
            prop_assert_eq!(before, m.predict(&x, "male").unwrap());
        }
    }
}
