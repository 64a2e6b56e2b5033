use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::dataset::{
    parse_manifest, partition_by_task, split_lopo, synth_generate, Gender, Manifest, Sample,
    SynthSpec, MAX_AGE,
};
use crate::gloh::{extract_gloh, gfv};
use crate::imageio::{check_dims, load_pgm};
use crate::metrics::{aggregate, EvalReport, FoldPredictions};
use crate::mtl::selfile::SelectionFile;
use crate::mtl::{fit_for_budget_with_epsilon, SelectionResult, TaskDataset};
use crate::ridge::{RidgeError, RidgeModel, POOLED_TASK};

use super::{PipelineError, RunConfig};

pub const TRUTH_HEADER: &str = "GLOHTRUTH 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractSummary {
    pub n: usize,
    pub k: usize,
}

fn resolve(base: Option<&Path>, path: &Path) -> PathBuf {
    match base {
        Some(b) if path.is_relative() => b.join(path),
        _ => path.to_path_buf(),
    }
}

/// Descriptors of every manifest image, one row per sample.
///
/// Relative image paths are resolved against `base_dir`. Images are processed
/// in parallel; on failure the error of the first failing row is returned.
pub fn extract_features(
    manifest: &Manifest,
    base_dir: Option<&Path>,
    cfg: &RunConfig,
) -> Result<Array2<f32>, PipelineError> {
    cfg.validate()?;
    if manifest.is_empty() {
        return Err(PipelineError::Empty("manifest".into()));
    }
    let (h, w) = (cfg.image_height, cfg.image_width);
    let k = cfg.gloh.feature_dim(h, w)?;
    let rows: Vec<Result<Vec<f32>, PipelineError>> = manifest
        .samples()
        .par_iter()
        .map(|s| {
            let path = resolve(base_dir, &s.image_path);
            let img = load_pgm(&path)
                .and_then(|img| check_dims(img, h, w))
                .map_err(|source| PipelineError::Image {
                    path: path.clone(),
                    source,
                })?;
            let fv = extract_gloh::<f32>(&img, &cfg.gloh)
                .map_err(|source| PipelineError::Gloh { path, source })?;
            Ok(fv.into_values())
        })
        .collect();
    let mut out = Array2::<f32>::zeros((manifest.len(), k));
    for (i, row) in rows.into_iter().enumerate() {
        out.row_mut(i).assign(&ArrayView1::from(&row?));
    }
    Ok(out)
}

pub fn cmd_extract(
    manifest_path: &Path,
    out_path: &Path,
    cfg: &RunConfig,
) -> Result<ExtractSummary, PipelineError> {
    let manifest = parse_manifest(manifest_path)?;
    let features = extract_features(&manifest, manifest_path.parent(), cfg)?;
    gfv::write(out_path, features.view())?;
    Ok(ExtractSummary {
        n: features.nrows(),
        k: features.ncols(),
    })
}

/// Column statistics of the training rows.
struct Scaler {
    mean: Array1<f64>,
    scale: Array1<f64>,
}

impl Scaler {
    fn fit_apply(x: &mut Array2<f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).expect("at least one row");
        let scale = x
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 1e-12 { s } else { 1.0 });
        *x -= &mean;
        *x /= &scale;
        Self { mean, scale }
    }
}

/// Training rows arranged for selection and refitting.
struct Prepared {
    /// Per-gender tasks; labels are centered when the config asks for it.
    tasks: Vec<TaskDataset<f64>>,
    /// Amount subtracted from each task's labels.
    offsets: Vec<f64>,
    pooled_x: Array2<f64>,
    pooled_y: Array1<f64>,
    scaler: Option<Scaler>,
}

fn prepare(
    manifest: &Manifest,
    features: ArrayView2<'_, f64>,
    rows: &[usize],
    cfg: &RunConfig,
) -> Result<Prepared, PipelineError> {
    if rows.is_empty() {
        return Err(PipelineError::Empty("training set".into()));
    }
    let samples: Vec<Sample> = rows
        .iter()
        .map(|&r| manifest.samples()[r].clone())
        .collect();
    let pooled_y = samples.iter().map(|s| f64::from(s.age)).collect();
    let sub = Manifest::new(samples)?;
    let mut pooled_x = features.select(Axis(0), rows);
    let scaler = cfg.standardize.then(|| Scaler::fit_apply(&mut pooled_x));
    let all: Vec<usize> = (0..rows.len()).collect();
    let mut offsets = Vec::new();
    let tasks = partition_by_task(&all, &sub, pooled_x.view())?
        .into_iter()
        .map(|t| {
            let (id, x, y) = t.into_parts();
            let m = if cfg.center_labels {
                y.mean().expect("tasks are non-empty")
            } else {
                0.0
            };
            offsets.push(m);
            TaskDataset::new(id, x, y.mapv(|v| v - m))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Prepared {
        tasks,
        offsets,
        pooled_x,
        pooled_y,
        scaler,
    })
}

fn run_selection(p: &Prepared, cfg: &RunConfig) -> Result<SelectionResult<f64>, PipelineError> {
    Ok(fit_for_budget_with_epsilon(
        &p.tasks,
        cfg.budget,
        &cfg.solver,
        cfg.epsilon,
    )?)
}

fn fit_refit(
    p: &Prepared,
    selected: &[usize],
    cfg: &RunConfig,
) -> Result<RidgeModel<f64>, PipelineError> {
    let k = p.pooled_x.ncols();
    if let Some(&bad) = selected.iter().find(|&&s| s >= k) {
        return Err(RidgeError::FeatureTooShort {
            len: k,
            needed: bad,
        }
        .into());
    }
    let mut tasks = p
        .tasks
        .iter()
        .zip(&p.offsets)
        .map(|(t, &m)| {
            TaskDataset::new(
                t.task_id.clone(),
                t.x().select(Axis(1), selected),
                t.y().mapv(|v| v + m),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    tasks.push(TaskDataset::new(
        POOLED_TASK,
        p.pooled_x.select(Axis(1), selected),
        p.pooled_y.clone(),
    )?);
    let local: Vec<usize> = (0..selected.len()).collect();
    let mut model = RidgeModel::fit(&tasks, &local, &cfg.ridge)?;
    model.selected = selected.to_vec();
    // express the model on raw features
    if let Some(s) = &p.scaler {
        for t in &mut model.tasks {
            for (w, &k) in t.weights.iter_mut().zip(selected) {
                t.intercept -= *w * s.mean[k] / s.scale[k];
                *w /= s.scale[k];
            }
        }
    }
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    /// `None` when the bins were supplied by the caller.
    pub selection: Option<SelectionResult<f64>>,
    pub ridge: RidgeModel<f64>,
}

/// Selects bins on `rows` (unless `preselected` is given) and refits
/// per-gender and pooled ridge models on them.
///
/// The returned ridge model always applies to raw, unstandardized features.
pub fn fit_model(
    manifest: &Manifest,
    features: ArrayView2<'_, f64>,
    rows: &[usize],
    cfg: &RunConfig,
    preselected: Option<&[usize]>,
) -> Result<FittedModel, PipelineError> {
    let p = prepare(manifest, features, rows, cfg)?;
    let selection = match preselected {
        Some(_) => None,
        None => Some(run_selection(&p, cfg)?),
    };
    let selected = preselected.unwrap_or_else(|| &selection.as_ref().unwrap().selected);
    let ridge = fit_refit(&p, selected, cfg)?;
    Ok(FittedModel { selection, ridge })
}

/// Bin selection on `rows` alone.
pub fn select_bins(
    manifest: &Manifest,
    features: ArrayView2<'_, f64>,
    rows: &[usize],
    cfg: &RunConfig,
) -> Result<SelectionResult<f64>, PipelineError> {
    run_selection(&prepare(manifest, features, rows, cfg)?, cfg)
}

/// Predicts every row; rows without a known gender use the pooled model.
pub fn predict_rows(
    model: &RidgeModel<f64>,
    features: ArrayView2<'_, f64>,
    genders: Option<&[Gender]>,
) -> Result<Vec<f64>, PipelineError> {
    if let Some(g) = genders {
        if g.len() != features.nrows() {
            return Err(PipelineError::RowCountMismatch {
                features: features.nrows(),
                manifest: g.len(),
            });
        }
    }
    (0..features.nrows())
        .map(|i| {
            let label = genders
                .and_then(|g| g[i].task_label())
                .unwrap_or(POOLED_TASK);
            let row = features.row(i).to_vec();
            Ok(model.predict(&row, label)?)
        })
        .collect()
}

fn check_rows(manifest: &Manifest, features: ArrayView2<'_, f64>) -> Result<(), PipelineError> {
    if features.nrows() != manifest.len() {
        return Err(PipelineError::RowCountMismatch {
            features: features.nrows(),
            manifest: manifest.len(),
        });
    }
    Ok(())
}

/// Applies the configured age filter; returns the kept manifest and rows.
fn filtered(manifest: &Manifest, cfg: &RunConfig) -> (Manifest, Vec<usize>) {
    match cfg.age_range {
        Some((lo, hi)) => manifest.filter_age(lo, hi),
        None => (manifest.clone(), (0..manifest.len()).collect()),
    }
}

/// Leave-one-person-out evaluation of the full pipeline.
///
/// Folds run one after another; the solver inside each fold is parallel.
pub fn evaluate(
    manifest: &Manifest,
    features: ArrayView2<'_, f64>,
    cfg: &RunConfig,
) -> Result<EvalReport, PipelineError> {
    cfg.validate()?;
    check_rows(manifest, features)?;
    let (m, rows) = filtered(manifest, cfg);
    if m.is_empty() {
        return Err(PipelineError::Empty("filtered manifest".into()));
    }
    let kept;
    let f = if rows.len() == manifest.len() {
        features
    } else {
        kept = features.select(Axis(0), &rows);
        kept.view()
    };
    let mut preds = Vec::new();
    for fold in split_lopo(&m)? {
        let fitted = fit_model(&m, f, &fold.train_rows, cfg, None)?;
        let test = f.select(Axis(0), &fold.test_rows);
        let genders: Vec<Gender> = fold
            .test_rows
            .iter()
            .map(|&r| m.samples()[r].gender)
            .collect();
        let pred = predict_rows(&fitted.ridge, test.view(), Some(&genders))?;
        let truth = fold
            .test_rows
            .iter()
            .map(|&r| f64::from(m.samples()[r].age))
            .collect();
        preds.push(FoldPredictions {
            person_id: fold.held_out_person,
            pred,
            truth,
        });
    }
    Ok(aggregate(&preds, cfg.cs_max)?)
}

fn load_inputs(
    manifest_path: &Path,
    features_path: &Path,
) -> Result<(Manifest, Array2<f64>), PipelineError> {
    let manifest = parse_manifest(manifest_path)?;
    let features = gfv::read::<f64>(features_path)?;
    check_rows(&manifest, features.view())?;
    Ok((manifest, features))
}

/// Runs [`evaluate`] on files; the report CSV goes to `out` when given.
pub fn cmd_evaluate(
    manifest_path: &Path,
    features_path: &Path,
    out: Option<&Path>,
    cfg: &RunConfig,
) -> Result<EvalReport, PipelineError> {
    let (manifest, features) = load_inputs(manifest_path, features_path)?;
    let report = evaluate(&manifest, features.view(), cfg)?;
    if let Some(out) = out {
        fs::write(out, report.to_csv())?;
    }
    Ok(report)
}

/// Selection on all (age-filtered) rows, written as a GLOHSEL file.
pub fn cmd_select(
    manifest_path: &Path,
    features_path: &Path,
    out: &Path,
    cfg: &RunConfig,
) -> Result<SelectionResult<f64>, PipelineError> {
    cfg.validate()?;
    let (manifest, features) = load_inputs(manifest_path, features_path)?;
    let (_, rows) = filtered(&manifest, cfg);
    let sel = select_bins(&manifest, features.view(), &rows, cfg)?;
    SelectionFile::from_result(&sel).write(out)?;
    Ok(sel)
}

/// Trains on all (age-filtered) rows and writes a GLOHRIDGE file. Bins come
/// from `selection` when given, otherwise they are selected here.
pub fn cmd_train(
    manifest_path: &Path,
    features_path: &Path,
    selection: Option<&Path>,
    out: &Path,
    cfg: &RunConfig,
) -> Result<RidgeModel<f64>, PipelineError> {
    cfg.validate()?;
    let (manifest, features) = load_inputs(manifest_path, features_path)?;
    let (_, rows) = filtered(&manifest, cfg);
    let pre = selection
        .map(SelectionFile::read)
        .transpose()?
        .map(|s| s.selected());
    let fitted = fit_model(&manifest, features.view(), &rows, cfg, pre.as_deref())?;
    fitted.ridge.write(out)?;
    Ok(fitted.ridge)
}

/// Predicts ages for every feature row and writes `row,pred_age` CSV.
/// Genders come from `manifest` when given; otherwise the pooled model is used.
pub fn cmd_predict(
    model_path: &Path,
    features_path: &Path,
    manifest_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<Vec<f64>, PipelineError> {
    let model = RidgeModel::<f64>::read(model_path)?;
    let features = gfv::read::<f64>(features_path)?;
    let genders = match manifest_path {
        Some(p) => {
            let m = parse_manifest(p)?;
            check_rows(&m, features.view())?;
            Some(m.samples().iter().map(|s| s.gender).collect::<Vec<_>>())
        }
        None => None,
    };
    let pred = predict_rows(&model, features.view(), genders.as_deref())?;
    if let Some(out) = out {
        let mut s = String::from("row,pred_age\n");
        for (i, p) in pred.iter().enumerate() {
            writeln!(s, "{i},{p}").unwrap();
        }
        fs::write(out, s)?;
    }
    Ok(pred)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    /// At most two tasks: task 0 is written as male, task 1 as female. A
    /// single task is written with unknown gender.
    pub spec: SynthSpec,
    /// Added to the linear labels before rounding them to whole years.
    pub age_offset: f64,
    pub samples_per_person: usize,
}

impl SynthOptions {
    pub fn new(spec: SynthSpec) -> Self {
        Self {
            spec,
            age_offset: 35.0,
            samples_per_person: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub n_rows: usize,
    pub support: Vec<usize>,
}

/// Writes a synthetic benchmark into `out_dir`:
///
/// * `manifest.csv`: one row per sample with integer ages; image paths are
///   placeholders that are never read;
/// * `features.gfv`: all rows in manifest order;
/// * `task_<l>.gfv`: the rows of task `l`;
/// * `truth.txt`: planted support and coefficients.
pub fn cmd_synth(opts: &SynthOptions, out_dir: &Path) -> Result<SynthSummary, PipelineError> {
    let spec = &opts.spec;
    let invalid = |m: String| PipelineError::Dataset(crate::dataset::DatasetError::InvalidSpec(m));
    if spec.n_tasks > 2 {
        return Err(invalid(format!(
            "{} tasks; at most 2 are supported",
            spec.n_tasks
        )));
    }
    if opts.samples_per_person == 0 {
        return Err(invalid("samples_per_person must be >= 1".into()));
    }
    if !opts.age_offset.is_finite() {
        return Err(invalid("age_offset must be finite".into()));
    }
    let data = synth_generate::<f64>(spec)?;
    fs::create_dir_all(out_dir)?;

    let mut samples = Vec::new();
    for (t, task) in data.tasks.iter().enumerate() {
        let gender = match (spec.n_tasks, t) {
            (1, _) => Gender::Unknown,
            (_, 0) => Gender::Male,
            _ => Gender::Female,
        };
        for (i, &y) in task.y().iter().enumerate() {
            let age = (opts.age_offset + y).round().clamp(0.0, f64::from(MAX_AGE));
            samples.push(Sample {
                image_path: format!("synth/t{t}_{i:06}.pgm").into(),
                person_id: format!("t{t}p{:04}", i / opts.samples_per_person),
                age: age as u32,
                gender,
            });
        }
        gfv::write(out_dir.join(format!("task_{t}.gfv")), task.x().view())?;
    }
    let manifest = Manifest::new(samples)?;
    manifest.write(out_dir.join("manifest.csv"))?;
    let views: Vec<ArrayView2<'_, f64>> = data.tasks.iter().map(|t| t.x().view()).collect();
    let all = ndarray::concatenate(Axis(0), &views).expect("tasks share K");
    gfv::write(out_dir.join("features.gfv"), all.view())?;

    let mut truth = String::from(TRUTH_HEADER);
    truth.push('\n');
    writeln!(truth, "seed={}", spec.seed).unwrap();
    writeln!(truth, "n_features={}", spec.n_features).unwrap();
    writeln!(truth, "n_tasks={}", spec.n_tasks).unwrap();
    writeln!(truth, "n_per_task={}", spec.n_per_task).unwrap();
    writeln!(truth, "noise_sigma={}", spec.noise_sigma).unwrap();
    writeln!(truth, "age_offset={}", opts.age_offset).unwrap();
    let support: Vec<String> = data.support.iter().map(|k| k.to_string()).collect();
    writeln!(truth, "support={}", support.join(" ")).unwrap();
    for &k in &data.support {
        let w: Vec<String> = data
            .weights
            .as_array()
            .row(k)
            .iter()
            .map(|v| v.to_string())
            .collect();
        writeln!(truth, "{k} {}", w.join(" ")).unwrap();
    }
    fs::write(out_dir.join("truth.txt"), truth)?;

    Ok(SynthSummary {
        n_rows: manifest.len(),
        support: data.support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SynthSpec;

    fn spec(seed: u64, sigma: f64) -> SynthSpec {
        SynthSpec {
            n_features: 60,
            n_tasks: 2,
            n_per_task: 40,
            support_size: 4,
            noise_sigma: sigma,
            seed,
        }
    }

    #[test]
    fn synth_files_are_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let opts = SynthOptions::new(spec(7, 0.1));
        cmd_synth(&opts, a.path()).unwrap();
        cmd_synth(&opts, b.path()).unwrap();
        for f in [
            "manifest.csv",
            "features.gfv",
            "task_0.gfv",
            "task_1.gfv",
            "truth.txt",
        ] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let m = parse_manifest(a.path().join("manifest.csv")).unwrap();
        assert_eq!(m.len(), 80);
        assert_eq!(split_lopo(&m).unwrap().len(), 16);
    }

    #[test]
    fn synth_rejects_three_tasks() {
        let mut s = spec(1, 0.0);
        s.n_tasks = 3;
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_synth(&SynthOptions::new(s), dir.path()).unwrap_err();
        assert_eq!(err.code(), "InvalidSpec");
    }

    #[test]
    fn standardized_model_applies_to_raw_features() {
        let dir = tempfile::tempdir().unwrap();
        cmd_synth(&SynthOptions::new(spec(3, 0.0)), dir.path()).unwrap();
        let m = parse_manifest(dir.path().join("manifest.csv")).unwrap();
        let f = gfv::read::<f64>(dir.path().join("features.gfv")).unwrap();
        // shift and scale the columns; a standardized fit must not care
        let g = f.mapv(|v| 3.0 * v + 7.0);
        let rows: Vec<usize> = (0..m.len()).collect();
        let mut cfg = RunConfig {
            budget: 4,
            ..RunConfig::default()
        };
        cfg.standardize = true;
        let a = fit_model(&m, f.view(), &rows, &cfg, None).unwrap();
        let b = fit_model(&m, g.view(), &rows, &cfg, None).unwrap();
        assert_eq!(
            a.selection.as_ref().unwrap().selected,
            b.selection.as_ref().unwrap().selected
        );
        let pa = predict_rows(&a.ridge, f.view(), None).unwrap();
        let pb = predict_rows(&b.ridge, g.view(), None).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn preselected_bins_are_used() {
        let dir = tempfile::tempdir().unwrap();
        cmd_synth(&SynthOptions::new(spec(5, 0.0)), dir.path()).unwrap();
        let m = parse_manifest(dir.path().join("manifest.csv")).unwrap();
        let f = gfv::read::<f64>(dir.path().join("features.gfv")).unwrap();
        let rows: Vec<usize> = (0..m.len()).collect();
        let cfg = RunConfig::default();
        let fit = fit_model(&m, f.view(), &rows, &cfg, Some(&[2, 9])).unwrap();
        assert!(fit.selection.is_none());
        assert_eq!(fit.ridge.selected, vec![2, 9]);
        assert_eq!(fit.ridge.tasks.len(), 3);
        let err = fit_model(&m, f.view(), &rows, &cfg, Some(&[60])).unwrap_err();
        assert_eq!(err.code(), "FeatureTooShort");
    }

    #[test]
    fn evaluate_checks_rows() {
        let dir = tempfile::tempdir().unwrap();
        cmd_synth(&SynthOptions::new(spec(5, 0.0)), dir.path()).unwrap();
        let m = parse_manifest(dir.path().join("manifest.csv")).unwrap();
        let f = gfv::read::<f64>(dir.path().join("task_0.gfv")).unwrap();
        let err = evaluate(&m, f.view(), &RunConfig::default()).unwrap_err();
        assert_eq!(err.code(), "RowCountMismatch");
    }
}
