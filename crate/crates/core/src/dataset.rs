//! Sample manifests, leave-one-person-out folds, per-gender tasks and
//! synthetic instances with a planted support.
//!
//! Synthetic data is drawn from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64`, which produces the same stream on every platform.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::mtl::{MtlError, TaskDataset, WeightMatrix};
use crate::scalar::Real;

pub const MANIFEST_HEADER: &str = "path,person_id,age,gender";
pub const MAX_AGE: u32 = 130;
pub const MALE_TASK: &str = "male";
pub const FEMALE_TASK: &str = "female";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest line {line}: {msg}")]
    MalformedRow { line: usize, msg: String },
    #[error("path {path:?} appears on lines {first} and {second}")]
    DuplicatePath {
        path: String,
        first: usize,
        second: usize,
    },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("leave-one-person-out needs at least two persons")]
    SinglePerson,
    #[error("no training rows for task {0}")]
    EmptyTask(String),
    #[error("feature matrix has {features} rows but the manifest has {manifest}")]
    RowCountMismatch { features: usize, manifest: usize },
    #[error("row index {row} out of range for {len} samples")]
    RowOutOfRange { row: usize, len: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Task(#[from] MtlError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub fn token(self) -> &'static str {
        match self {
            Gender::Male => "m",
            Gender::Female => "f",
            Gender::Unknown => "",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        match s {
            "m" => Some(Gender::Male),
            "f" => Some(Gender::Female),
            "" => Some(Gender::Unknown),
            _ => None,
        }
    }

    /// Task label used for per-gender datasets and ridge models.
    pub fn task_label(self) -> Option<&'static str> {
        match self {
            Gender::Male => Some(MALE_TASK),
            Gender::Female => Some(FEMALE_TASK),
            Gender::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub image_path: PathBuf,
    pub person_id: String,
    pub age: u32,
    pub gender: Gender,
}

impl Sample {
    fn check(&self) -> Result<(), String> {
        let path = self.image_path.to_string_lossy();
        if path.is_empty() {
            return Err("empty path".into());
        }
        if self.person_id.is_empty() {
            return Err("empty person_id".into());
        }
        if self.age > MAX_AGE {
            return Err(format!("age {} exceeds {MAX_AGE}", self.age));
        }
        let bad = |s: &str| s.contains([',', '\n', '\r']);
        if bad(&path) || bad(&self.person_id) {
            return Err("fields may not contain commas or line breaks".into());
        }
        Ok(())
    }
}

/// Ordered samples; the order defines the row order of feature files.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    samples: Vec<Sample>,
}

impl Manifest {
    pub fn new(samples: Vec<Sample>) -> Result<Self, DatasetError> {
        let mut seen: HashMap<&Path, usize> = HashMap::new();
        for (i, s) in samples.iter().enumerate() {
            s.check()
                .map_err(|m| DatasetError::InvalidSample(format!("row {i}: {m}")))?;
            if let Some(&first) = seen.get(s.image_path.as_path()) {
                return Err(DatasetError::DuplicatePath {
                    path: s.image_path.to_string_lossy().into_owned(),
                    first: first + 2,
                    second: i + 2,
                });
            }
            seen.insert(&s.image_path, i);
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples with `lo <= age <= hi`, plus their row indices in `self`.
    pub fn filter_age(&self, lo: u32, hi: u32) -> (Manifest, Vec<usize>) {
        let rows: Vec<usize> = (0..self.len())
            .filter(|&i| (lo..=hi).contains(&self.samples[i].age))
            .collect();
        let samples = rows.iter().map(|&i| self.samples[i].clone()).collect();
        (Manifest { samples }, rows)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(MANIFEST_HEADER);
        s.push('\n');
        for x in &self.samples {
            writeln!(
                s,
                "{},{},{},{}",
                x.image_path.to_string_lossy(),
                x.person_id,
                x.age,
                x.gender.token()
            )
            .unwrap();
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_csv())
    }
}

pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Manifest, DatasetError> {
    parse_manifest_str(&fs::read_to_string(path)?)
}

/// Parses manifest CSV text. Line numbers in errors are 1-based, header included.
pub fn parse_manifest_str(text: &str) -> Result<Manifest, DatasetError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    let malformed = |line: usize, msg: String| DatasetError::MalformedRow { line, msg };
    match lines.next() {
        Some(h) if h.trim() == MANIFEST_HEADER => {}
        Some(h) => {
            return Err(malformed(
                1,
                format!("expected header {MANIFEST_HEADER:?}, got {h:?}"),
            ))
        }
        None => return Err(malformed(1, "missing header".into())),
    }
    let mut samples = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [path, person, age, gender] = fields[..] else {
            return Err(malformed(
                line_no,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        };
        let age: u32 = age.trim().parse().map_err(|_| {
            malformed(
                line_no,
                format!("age {age:?} is not a non-negative integer"),
            )
        })?;
        if age > MAX_AGE {
            return Err(malformed(line_no, format!("age {age} exceeds {MAX_AGE}")));
        }
        let gender = Gender::from_token(gender.trim())
            .ok_or_else(|| malformed(line_no, format!("gender {gender:?} is not m, f or empty")))?;
        if path.is_empty() {
            return Err(malformed(line_no, "empty path".into()));
        }
        if person.is_empty() {
            return Err(malformed(line_no, "empty person_id".into()));
        }
        if let Some(&first) = seen.get(path) {
            return Err(DatasetError::DuplicatePath {
                path: path.to_string(),
                first,
                second: line_no,
            });
        }
        seen.insert(path.to_string(), line_no);
        samples.push(Sample {
            image_path: PathBuf::from(path),
            person_id: person.to_string(),
            age,
            gender,
        });
    }
    Ok(Manifest { samples })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub held_out_person: String,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// One fold per distinct person, in order of first appearance.
pub fn split_lopo(manifest: &Manifest) -> Result<Vec<Fold>, DatasetError> {
    let mut persons: Vec<&str> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut owner = Vec::with_capacity(manifest.len());
    for s in manifest.samples() {
        let next = persons.len();
        let p = *index.entry(s.person_id.as_str()).or_insert(next);
        if p == next {
            persons.push(&s.person_id);
        }
        owner.push(p);
    }
    if persons.len() < 2 {
        return Err(DatasetError::SinglePerson);
    }
    Ok(persons
        .iter()
        .enumerate()
        .map(|(p, &name)| {
            let (test_rows, train_rows) = (0..owner.len()).partition(|&i| owner[i] == p);
            Fold {
                held_out_person: name.to_string(),
                train_rows,
                test_rows,
            }
        })
        .collect())
}

/// Male and female task datasets built from `rows`, labels are ages.
///
/// Unknown-gender rows go into both tasks.
pub fn partition_by_task<T: Real>(
    rows: &[usize],
    manifest: &Manifest,
    features: ArrayView2<'_, T>,
) -> Result<Vec<TaskDataset<T>>, DatasetError> {
    if features.nrows() != manifest.len() {
        return Err(DatasetError::RowCountMismatch {
            features: features.nrows(),
            manifest: manifest.len(),
        });
    }
    if let Some(&row) = rows.iter().find(|&&r| r >= manifest.len()) {
        return Err(DatasetError::RowOutOfRange {
            row,
            len: manifest.len(),
        });
    }
    let mut sorted = rows.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    [(MALE_TASK, Gender::Male), (FEMALE_TASK, Gender::Female)]
        .into_iter()
        .map(|(label, g)| {
            let idx: Vec<usize> = sorted
                .iter()
                .copied()
                .filter(|&r| {
                    let s = manifest.samples()[r].gender;
                    s == g || s == Gender::Unknown
                })
                .collect();
            if idx.is_empty() {
                return Err(DatasetError::EmptyTask(label.to_string()));
            }
            let x = features.select(Axis(0), &idx);
            let y = idx
                .iter()
                .map(|&r| T::from_usize_lossy(manifest.samples()[r].age as usize))
                .collect::<Array1<T>>();
            Ok(TaskDataset::new(label, x, y)?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_features: usize,
    pub n_tasks: usize,
    pub n_per_task: usize,
    pub support_size: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidSpec(m));
        if self.n_features == 0
            || self.n_tasks == 0
            || self.n_per_task == 0
            || self.support_size == 0
        {
            return bad("all counts must be at least 1".into());
        }
        if self.support_size > self.n_features {
            return bad(format!(
                "support size {} exceeds feature count {}",
                self.support_size, self.n_features
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!(
                "noise sigma {} must be finite and >= 0",
                self.noise_sigma
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData<T> {
    pub tasks: Vec<TaskDataset<T>>,
    pub weights: WeightMatrix<T>,
    /// Planted rows, ascending.
    pub support: Vec<usize>,
}

/// Draws a synthetic multi-task regression instance.
///
/// Draw order: support, then coefficients (support row by row, task by task),
/// then each task's design matrix and noise.
pub fn synth_generate<T: Real>(spec: &SynthSpec) -> Result<SynthData<T>, DatasetError> {
    spec.validate()?;
    let (k, l, n) = (spec.n_features, spec.n_tasks, spec.n_per_task);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut support = index::sample(&mut rng, k, spec.support_size).into_vec();
    support.sort_unstable();
    let mut w = Array2::<T>::zeros((k, l));
    for &row in &support {
        for t in 0..l {
            let mag: f64 = rng.random_range(1.0..=2.0);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            w[[row, t]] = T::lit(sign * mag);
        }
    }
    let mut tasks = Vec::with_capacity(l);
    for t in 0..l {
        let x = Array2::from_shape_simple_fn((n, k), || T::lit(rng.sample(StandardNormal)));
        let mut y = x.dot(&w.column(t));
        for v in y.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += T::lit(spec.noise_sigma * e);
        }
        tasks.push(TaskDataset::new(format!("t{t}"), x, y)?);
    }
    Ok(SynthData {
        tasks,
        weights: WeightMatrix::from_array(w),
        support,
    })
}

/// Distinct person ids in order of first appearance.
pub fn persons(manifest: &Manifest) -> Vec<String> {
    let mut seen = HashSet::new();
    manifest
        .samples()
        .iter()
        .filter(|s| seen.insert(s.person_id.as_str()))
        .map(|s| s.person_id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::s;
    use proptest::prelude::*;

    fn sample(path: &str, person: &str, age: u32, gender: Gender) -> Sample {
        Sample {
            image_path: path.into(),
            person_id: person.into(),
            age,
            gender,
        }
    }

    #[test]
    fn parse_valid_rows() {
        let text = "path,person_id,age,gender\r\na.pgm,001,3,m\r\nb.pgm,001,10,f\nc.pgm,002,0,\n";
        let m = parse_manifest_str(text).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.samples()[0], sample("a.pgm", "001", 3, Gender::Male));
        assert_eq!(m.samples()[1].gender, Gender::Female);
        assert_eq!(m.samples()[2], sample("c.pgm", "002", 0, Gender::Unknown));
    }

    #[test]
    fn parse_errors() {
        let bad_age = parse_manifest_str("path,person_id,age,gender\na,1,3,m\nb,1,abc,f\n");
        assert!(matches!(
            bad_age,
            Err(DatasetError::MalformedRow { line: 3, .. })
        ));
        let arity = parse_manifest_str("path,person_id,age,gender\na,1,3\n");
        assert!(matches!(
            arity,
            Err(DatasetError::MalformedRow { line: 2, .. })
        ));
        let gender = parse_manifest_str("path,person_id,age,gender\na,1,3,x\n");
        assert!(matches!(
            gender,
            Err(DatasetError::MalformedRow { line: 2, .. })
        ));
        let old = parse_manifest_str("path,person_id,age,gender\na,1,131,m\n");
        assert!(matches!(old, Err(DatasetError::MalformedRow { .. })));
        let dup = parse_manifest_str("path,person_id,age,gender\na,1,3,m\na,2,4,f\n");
        assert!(matches!(
            dup,
            Err(DatasetError::DuplicatePath {
                first: 2,
                second: 3,
                ..
            })
        ));
        assert!(matches!(
            parse_manifest_str("file,person,age,gender\n"),
            Err(DatasetError::MalformedRow { line: 1, .. })
        ));
        assert!(parse_manifest_str("path,person_id,age,gender\n")
            .unwrap()
            .is_empty());
    }

    #[test]
    fn manifest_validation() {
        let dup = Manifest::new(vec![
            sample("a", "1", 1, Gender::Male),
            sample("a", "2", 1, Gender::Male),
        ]);
        assert!(matches!(dup, Err(DatasetError::DuplicatePath { .. })));
        assert!(Manifest::new(vec![sample("a,b", "1", 1, Gender::Male)]).is_err());
        assert!(Manifest::new(vec![sample("a", "", 1, Gender::Male)]).is_err());
    }

    #[test]
    fn lopo_small() {
        let m = Manifest::new(vec![
            sample("0", "A", 1, Gender::Male),
            sample("1", "A", 2, Gender::Male),
            sample("2", "B", 3, Gender::Female),
        ])
        .unwrap();
        let folds = split_lopo(&m).unwrap();
        assert_eq!(folds.len(), 2);
        assert_eq!(folds[0].held_out_person, "A");
        assert_eq!(folds[0].test_rows, vec![0, 1]);
        assert_eq!(folds[0].train_rows, vec![2]);
        assert_eq!(folds[1].test_rows, vec![2]);
        assert_eq!(folds[1].train_rows, vec![0, 1]);

        let one = Manifest::new(vec![sample("0", "A", 1, Gender::Male)]).unwrap();
        assert!(matches!(split_lopo(&one), Err(DatasetError::SinglePerson)));
    }

    #[test]
    fn lopo_fold_count() {
        let samples = (0..1002)
            .map(|i| {
                sample(
                    &format!("{i}.pgm"),
                    &format!("{:03}", i % 82),
                    20,
                    Gender::Male,
                )
            })
            .collect();
        let folds = split_lopo(&Manifest::new(samples).unwrap()).unwrap();
        assert_eq!(folds.len(), 82);
    }

    fn features(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, 3), |(i, j)| (i * 3 + j) as f64)
    }

    #[test]
    fn task_partition() {
        let m = Manifest::new(vec![
            sample("0", "A", 1, Gender::Male),
            sample("1", "A", 2, Gender::Male),
            sample("2", "B", 3, Gender::Female),
            sample("3", "B", 4, Gender::Female),
            sample("4", "C", 5, Gender::Female),
            sample("5", "D", 6, Gender::Unknown),
        ])
        .unwrap();
        let f = features(6);
        let t = partition_by_task(&[0, 1, 2, 3, 4], &m, f.view()).unwrap();
        assert_eq!((t[0].n_samples(), t[1].n_samples()), (2, 3));
        assert_eq!(t[0].task_id, MALE_TASK);
        assert_eq!(t[1].y().to_vec(), vec![3.0, 4.0, 5.0]);
        assert_eq!(t[1].x().row(0).to_vec(), vec![6.0, 7.0, 8.0]);

        let t = partition_by_task(&[5, 0, 2], &m, f.view()).unwrap();
        assert_eq!((t[0].n_samples(), t[1].n_samples()), (2, 2));
        // manifest order within a task
        assert_eq!(t[0].y().to_vec(), vec![1.0, 6.0]);

        assert!(matches!(
            partition_by_task(&[0, 1], &m, f.view()),
            Err(DatasetError::EmptyTask(t)) if t == FEMALE_TASK
        ));
        assert!(matches!(
            partition_by_task(&[0], &m, features(5).view()),
            Err(DatasetError::RowCountMismatch { .. })
        ));
    }

    #[test]
    fn age_filter() {
        let m = Manifest::new(vec![
            sample("0", "A", 1, Gender::Male),
            sample("1", "A", 40, Gender::Male),
            sample("2", "B", 30, Gender::Female),
        ])
        .unwrap();
        let (f, rows) = m.filter_age(0, 30);
        assert_eq!(rows, vec![0, 2]);
        assert_eq!(f.len(), 2);
    }

    fn spec(seed: u64) -> SynthSpec {
        SynthSpec {
            n_features: 40,
            n_tasks: 2,
            n_per_task: 25,
            support_size: 5,
            noise_sigma: 0.0,
            seed,
        }
    }

    #[test]
    fn synth_structure() {
        let d = synth_generate::<f64>(&spec(7)).unwrap();
        assert_eq!(d.support.len(), 5);
        assert_eq!(d.weights.support(0.0), d.support);
        for &k in &d.support {
            for t in 0..2 {
                let v = d.weights.as_array()[[k, t]].abs();
                assert!((1.0..=2.0).contains(&v));
            }
        }
        // noiseless: restricted least squares reproduces y exactly
        for (t, task) in d.tasks.iter().enumerate() {
            let pred = task.x().dot(&d.weights.as_array().column(t));
            for (p, y) in pred.iter().zip(task.y()) {
                assert_eq!(p, y);
            }
            let xs = task.x().select(Axis(1), &d.support);
            let fit = crate::ridge::fit_ridge(xs.view(), task.y().view(), 0.0).unwrap();
            let w = d
                .weights
                .as_array()
                .slice(s![.., t])
                .select(Axis(0), &d.support);
            for (a, b) in fit.weights.iter().zip(&w) {
                assert!((a - b).abs() < 1e-9);
            }
            assert!(fit.intercept.abs() < 1e-9);
        }
    }

    #[test]
    fn synth_full_support_and_errors() {
        let mut s = spec(1);
        s.support_size = 40;
        assert_eq!(
            synth_generate::<f32>(&s).unwrap().support,
            (0..40).collect::<Vec<_>>()
        );
        s.support_size = 41;
        assert!(matches!(
            synth_generate::<f64>(&s),
            Err(DatasetError::InvalidSpec(_))
        ));
        s.support_size = 3;
        s.noise_sigma = -1.0;
        assert!(synth_generate::<f64>(&s).is_err());
    }

    #[test]
    fn synth_determinism() {
        let a = synth_generate::<f64>(&spec(7)).unwrap();
        let b = synth_generate::<f64>(&spec(7)).unwrap();
        assert_eq!(a, b);
        let c = synth_generate::<f64>(&spec(8)).unwrap();
        assert_ne!(a.tasks[0].x(), c.tasks[0].x());
    }

    fn arb_sample() -> impl Strategy<Value = Sample> {
        ("[a-z0-9_/.]{1,12}", "[A-Za-z0-9]{1,4}", 0u32..=130, 0u8..3).prop_map(|(p, id, age, g)| {
            Sample {
                image_path: p.into(),
                person_id: id,
                age,
                gender: [Gender::Male, Gender::Female, Gender::Unknown][g as usize],
            }
        })
    }

    proptest! {
        #[test]
        fn manifest_round_trip(samples in prop::collection::vec(arb_sample(), 0..20)) {
            let mut seen = HashSet::new();
            let samples: Vec<Sample> = samples.into_iter().filter(|s| seen.insert(s.image_path.clone())).collect();
            let m = Manifest::new(samples).unwrap();
            let again = parse_manifest_str(&m.to_csv()).unwrap();
            prop_assert_eq!(&again, &m);
            prop_assert_eq!(again.to_csv(), m.to_csv());
        }

        #[test]
        fn lopo_partitions(owners in prop::collection::vec(0u8..6, 2..40)) {
            let samples = owners.iter().enumerate()
                .map(|(i, o)| sample(&i.to_string(), &o.to_string(), 1, Gender::Male))
                .collect();
            let m = Manifest::new(samples).unwrap();
            match split_lopo(&m) {
                Err(DatasetError::SinglePerson) => {
                    prop_assert!(owners.iter().all(|&o| o == owners[0]));
                }
                Err(e) => prop_assert!(false, "{e}"),
                Ok(folds) => {
                    let mut hits = vec![0; owners.len()];
                    for f in &folds {
                        let mut all: Vec<usize> = f.train_rows.iter().chain(&f.test_rows).copied().collect();
                        all.sort_unstable();
                        prop_assert_eq!(all, (0..owners.len()).collect::<Vec<_>>());
                        for &t in &f.test_rows {
                            hits[t] += 1;
                            prop_assert_eq!(&m.samples()[t].person_id, &f.held_out_person);
                        }
                    }
                    prop_assert!(hits.iter().all(|&h| h == 1));
                }
            }
        }
    }
}
