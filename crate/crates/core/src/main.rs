use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use glohage::dataset::SynthSpec;
use glohage::mtl::Mode;
use glohage::pipeline::{self, config::parse_age_range, PipelineError, RunConfig, SynthOptions};

#[derive(Parser)]
#[command(
    name = "glohage",
    version,
    about = "Age estimation from aligned face images"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand; flags override the config file.
#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["mtl", "stl"])]
    mode: Option<String>,
    /// Maximum number of selected bins.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Keep only samples with LO <= age <= HI.
    #[arg(long, global = true, value_name = "LO:HI")]
    age_range: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Largest tolerance (years) of the cumulative-score curve.
    #[arg(long, global = true)]
    cs_max: Option<usize>,
    /// Standardize feature columns with training statistics.
    #[arg(long, global = true)]
    standardize: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Extract GLOH features for every manifest image into a GFV1 file.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-person-out evaluation; prints the report CSV.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic benchmark with a planted support.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 500)]
        n_features: usize,
        #[arg(long, default_value_t = 2)]
        n_tasks: usize,
        #[arg(long, default_value_t = 200)]
        n_per_task: usize,
        #[arg(long, default_value_t = 10)]
        support_size: usize,
        #[arg(long, default_value_t = 0.1)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 5)]
        samples_per_person: usize,
        #[arg(long, default_value_t = 35.0)]
        age_offset: f64,
    },
    /// Select bins on all samples and write a GLOHSEL file.
    Select {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train ridge models on all samples and write a GLOHRIDGE file.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Use the bins of this GLOHSEL file instead of selecting anew.
        #[arg(long)]
        selection: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict ages and write `row,pred_age` CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Supplies genders; without it the pooled model is used.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn config(c: &Common) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &c.mode {
        cfg.solver.mode = m.parse::<Mode>().map_err(PipelineError::Config)?;
    }
    if let Some(b) = c.budget {
        cfg.budget = b;
    }
    if let Some(r) = &c.age_range {
        cfg.age_range = Some(parse_age_range(r)?);
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
        cfg.ridge.seed = s;
    }
    if let Some(j) = c.cs_max {
        cfg.cs_max = j;
    }
    if c.standardize {
        cfg.standardize = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let cfg = config(&cli.common)?;
    match cli.command {
        Command::Extract { manifest, out } => {
            let s = pipeline::cmd_extract(&manifest, &out, &cfg)?;
            println!("N={} K={}", s.n, s.k);
        }
        Command::Evaluate {
            manifest,
            features,
            out,
        } => {
            let report = pipeline::cmd_evaluate(&manifest, &features, out.as_deref(), &cfg)?;
            if out.is_none() {
                print!("{}", report.to_csv());
            } else {
                println!("n={} mae={}", report.n, report.mae);
            }
        }
        Command::Synth {
            out_dir,
            n_features,
            n_tasks,
            n_per_task,
            support_size,
            noise_sigma,
            samples_per_person,
            age_offset,
        } => {
            let opts = SynthOptions {
                spec: SynthSpec {
                    n_features,
                    n_tasks,
                    n_per_task,
                    support_size,
                    noise_sigma,
                    seed: cfg.seed,
                },
                age_offset,
                samples_per_person,
            };
            let s = pipeline::cmd_synth(&opts, &out_dir)?;
            println!("rows={} support={}", s.n_rows, s.support.len());
        }
        Command::Select {
            manifest,
            features,
            out,
        } => {
            let sel = pipeline::cmd_select(&manifest, &features, &out, &cfg)?;
            println!("lambda={} selected={}", sel.lambda, sel.selected.len());
        }
        Command::Train {
            manifest,
            features,
            selection,
            out,
        } => {
            let m = pipeline::cmd_train(&manifest, &features, selection.as_deref(), &out, &cfg)?;
            println!("tasks={} bins={}", m.tasks.len(), m.selected.len());
        }
        Command::Predict {
            model,
            features,
            manifest,
            out,
        } => {
            let p = pipeline::cmd_predict(&model, &features, manifest.as_deref(), Some(&out))?;
            println!("rows={}", p.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let detail = e.to_string().replace('\n', " ");
            eprintln!("ERROR {}: {detail}", e.code());
            ExitCode::FAILURE
        }
    }
}
