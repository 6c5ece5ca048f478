use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use memfield::field::DeployConfig;
use memfield::hapo::Orientation;
use memfield::image::Image;
use memfield::io::{self, ExperimentManifest, RunSummary, Task};
use memfield::metrics::{metrics_csv, MetricsRow};
use memfield::{Error, Result};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "memfield", version, about = "Neural fields on simulated resistive-memory crossbars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment manifest (TOML); a built-in template is used when omitted.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Overrides the manifest seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a field (image, volume or scene) and evaluate its deployments.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Task used when no manifest is given.
        #[arg(long, default_value = "image-fit")]
        task: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Training slices for ct-sparse.
        #[arg(long)]
        slices: Option<usize>,
    },
    /// Deploy a saved checkpoint onto simulated crossbars.
    Deploy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Replaces the manifest deployments with one of this scheme.
        #[arg(long, value_parser = ["haq", "ptq"])]
        scheme: Option<String>,
        /// Comma-separated bits per node.
        #[arg(long, value_delimiter = ',')]
        bits: Vec<usize>,
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Render the poses of a scene manifest, from a checkpoint if given.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        deformation: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Compare two images and print a metrics row.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
    },
    /// HAQ vs PTQ RMSE on random vector-matrix products.
    BenchMatmul {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        weight_bits: Option<usize>,
    },
    /// Hardware-aware hyperparameter search.
    Hapo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        minimize: bool,
    },
    /// Write reference views and poses of a synthetic scene.
    MakeScene {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
    },
    /// Check that every file of a run directory carries the manifest hash.
    Verify {
        #[command(flatten)]
        common: Common,
        dir: PathBuf,
    },
}

fn parse_task(name: &str) -> Result<Task> {
    toml::Value::String(name.into()).try_into().map_err(|_| Error::config(format!("unknown task {name}")))
}

fn manifest(common: &Common, fallback: Task) -> Result<ExperimentManifest> {
    let mut m = match &common.manifest {
        Some(p) => ExperimentManifest::load(p)?,
        None => ExperimentManifest::template(fallback),
    };
    if let Some(s) = common.seed {
        m.seed = s;
    }
    if let Some(o) = &common.out {
        m.output_dir = o.to_string_lossy().into_owned();
    }
    Ok(m)
}

fn summarize(s: &RunSummary) {
    println!("manifest {}", s.hash);
    println!("wrote {} files to {}", s.files.len(), s.dir.display());
    for (k, v) in &s.report {
        println!("{k} = {v}");
    }
}

fn file_hash(paths: &[&Path]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        h.update(std::fs::read(p).map_err(|e| Error::io(p, e))?);
    }
    Ok(hex::encode(h.finalize()))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Fit { common, task, epochs, lr, slices } => {
            let mut m = manifest(&common, parse_task(&task)?)?;
            if let Some(t) = m.train.as_mut() {
                if let Some(e) = epochs {
                    t.epochs = e;
                }
                if let Some(lr) = lr {
                    t.adam.lr = lr;
                }
            }
            if let (Some(n), Some(s)) = (slices, m.slices.as_mut()) {
                s.train = None;
                s.count = Some(n);
            }
            summarize(&io::run(&m)?);
        }
        Command::Deploy { common, checkpoint, scheme, bits, ratio } => {
            let mut m = manifest(&common, Task::ImageFit)?;
            if let Some(s) = scheme {
                let base = m.deploy.first().cloned().unwrap_or_else(DeployConfig::ct_default);
                let mut d = if s == "haq" { DeployConfig::haq(base.bits.clone(), base.ratio) } else { DeployConfig::ptq(base.bits.clone()) };
                d.converters = base.converters;
                m.deploy = vec![d];
            }
            for d in &mut m.deploy {
                if !bits.is_empty() {
                    d.bits = bits.clone();
                }
                if let Some(r) = ratio {
                    d.ratio = r;
                }
            }
            summarize(&io::deploy_checkpoint(&m, &checkpoint)?);
        }
        Command::Render { common, checkpoint, deformation, samples } => {
            let mut m = manifest(&common, Task::Nerf)?;
            if let Some(n) = samples {
                m.render.get_or_insert_with(Default::default).samples = n;
            }
            summarize(&io::render_scene(&m, checkpoint.as_deref(), deformation.as_deref())?);
        }
        Command::Eval { common, reference, candidate } => {
            let a = Image::load(&reference)?;
            let b = Image::load(&candidate)?;
            let hash = match &common.manifest {
                Some(_) => manifest(&common, Task::ImageFit)?.hash()?,
                None => file_hash(&[&reference, &candidate])?,
            };
            let id = candidate.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let row = MetricsRow::evaluate("eval", &id, &a, &b, &hash)?;
            let csv = metrics_csv(&[row])?;
            match &common.out {
                Some(p) => io::atomic_write(p, &csv)?,
                None => print!("{}", String::from_utf8_lossy(&csv)),
            }
        }
        Command::BenchMatmul { common, seeds, ratio, weight_bits } => {
            let mut m = manifest(&common, Task::MatmulBench)?;
            let spec = m.matmul.get_or_insert_with(Default::default);
            if let Some(s) = seeds {
                spec.seeds = s;
            }
            if let Some(r) = ratio {
                spec.ratio = r;
            }
            if let Some(b) = weight_bits {
                spec.weight_bits = b;
            }
            m.task = Task::MatmulBench;
            summarize(&io::run(&m)?);
        }
        Command::Hapo { common, omega, n_max, minimize } => {
            let mut m = manifest(&common, Task::Hapo)?;
            if let Some(h) = m.hapo.as_mut() {
                if let Some(o) = omega {
                    h.omega = o;
                }
                if let Some(n) = n_max {
                    h.n_max = n;
                }
                if minimize {
                    h.orientation = Orientation::Minimize;
                }
            }
            m.task = Task::Hapo;
            summarize(&io::run(&m)?);
        }
        Command::MakeScene { common, width, height } => {
            let mut m = manifest(&common, Task::Nerf)?;
            if let io::DatasetRef::Scene { spec } = &mut m.dataset {
                spec.width = width.unwrap_or(spec.width);
                spec.height = height.unwrap_or(spec.height);
            }
            summarize(&io::render_scene(&m, None, None)?);
        }
        Command::Verify { common, dir } => {
            let expected = match &common.manifest {
                Some(p) => Some(ExperimentManifest::load(p)?),
                None => None,
            };
            let report = io::verify(&dir, expected.as_ref())?;
            println!("manifest {}", report.expected);
            println!("checked {} files", report.checked);
            for (p, found) in &report.mismatched {
                println!("MISMATCH {} ({})", p.display(), found.as_deref().unwrap_or("no stamp"));
            }
            if !report.ok() {
                return Err(Error::data(format!("{} files do not match the manifest", report.mismatched.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
