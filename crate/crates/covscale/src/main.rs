//! covscale: config-driven experiment runner. Data and plots are emitted as
//! CSV/JSON under a run directory; stdout carries a short human summary.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use covscale::experiment::saliency_csv;
use covscale::{
    compare_convergence, interpret_sample, load_config, load_csv, run_cv, save_csv,
    sweep_scales, synth_generate, write_run_dir, Error, ExperimentConfig, Result, RunArtifact,
};

#[derive(Parser)]
#[command(
    name = "covscale",
    version,
    about = "Multi-scale learning on the covariance spectrum"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value config file; keys documented in the README
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set epochs=200 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let overrides = self
            .set
            .iter()
            .map(|raw| {
                raw.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!("--set expects KEY=VALUE, got '{raw}'"))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        load_config(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset CSV
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated training of the model selected by the `model` key
    Cv {
        #[command(flatten)]
        config: ConfigArgs,
        /// Input dataset CSV
        #[arg(long)]
        data: PathBuf,
        /// Run directory to create
        #[arg(long)]
        out: PathBuf,
    },
    /// Scale-count sweep over `j_list`, trained vs frozen scales
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Input dataset CSV
        #[arg(long)]
        data: PathBuf,
        /// Run directory to create
        #[arg(long)]
        out: PathBuf,
    },
    /// Convergence comparison against the input-width 2-layer MLP over `lr_list`
    Converge {
        #[command(flatten)]
        config: ConfigArgs,
        /// Input dataset CSV
        #[arg(long)]
        data: PathBuf,
        /// Run directory to create
        #[arg(long)]
        out: PathBuf,
    },
    /// Grad-CAM saliency ranking for one held-out sample of a finished run
    Interpret {
        #[command(flatten)]
        config: ConfigArgs,
        /// artifact.json written by a previous run
        #[arg(long)]
        artifact: PathBuf,
        /// Sample index into the artifact's dataset
        #[arg(long)]
        sample: usize,
        /// Output CSV (default: saliency_sample<N>.csv next to the artifact)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn summarize(artifact: &RunArtifact) {
    for run in &artifact.runs {
        println!(
            "{}: accuracy {} precision {} recall {}",
            run.label,
            covscale::format_mean_std(run.mean.accuracy, run.std.accuracy),
            covscale::format_mean_std(run.mean.macro_precision, run.std.macro_precision),
            covscale::format_mean_std(run.mean.macro_recall, run.std.macro_recall),
        );
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth { config, out } => {
            let cfg = config.load()?;
            let data = synth_generate(&cfg.synth)?;
            save_csv(&data, &out)?;
            println!(
                "wrote {} samples x {} features ({} classes) to {}",
                data.n_samples(),
                data.n_features(),
                data.n_classes(),
                out.display()
            );
        }
        Command::Cv { config, data, out } => {
            let cfg = config.load()?;
            let dataset = load_csv(&data)?;
            let artifact = run_cv(&dataset, cfg.model, &cfg)?;
            write_run_dir(&artifact, &out)?;
            summarize(&artifact);
            println!("run directory: {}", out.display());
        }
        Command::Sweep { config, data, out } => {
            let cfg = config.load()?;
            let dataset = load_csv(&data)?;
            let artifact = sweep_scales(&dataset, &cfg.j_list, &cfg)?;
            write_run_dir(&artifact, &out)?;
            summarize(&artifact);
            println!("run directory: {}", out.display());
        }
        Command::Converge { config, data, out } => {
            let cfg = config.load()?;
            let dataset = load_csv(&data)?;
            let artifact = compare_convergence(&dataset, &cfg, &cfg.lr_list)?;
            write_run_dir(&artifact, &out)?;
            summarize(&artifact);
            println!("run directory: {}", out.display());
        }
        Command::Interpret {
            config,
            artifact,
            sample,
            out,
        } => {
            let cfg = config.load()?;
            let loaded = RunArtifact::load(&artifact)?;
            let rows = interpret_sample(&loaded, sample, cfg.saliency_target)?;
            let out = out.unwrap_or_else(|| {
                artifact.with_file_name(format!("saliency_sample{sample}.csv"))
            });
            std::fs::write(&out, saliency_csv(&rows))?;
            println!(
                "sample {sample} predicted as {}; top region {} ({} regions ranked) -> {}",
                rows[0].class,
                rows[0].region,
                rows.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
