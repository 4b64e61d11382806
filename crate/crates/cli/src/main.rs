//! `twr` command line: dataset generation, training, experiments, bound
//! reports and gap tables.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twr_har::harness::{self, DatasetManifest, ExperimentConfig, Preset, Variant};
use twr_har::nn::SplitKind;
use twr_har::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "twr", version, about = "Through-the-wall radar activity recognition benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat `section.key = value` config file applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "desk", value_parser = ["desk", "paper"])]
    preset: String,
    /// Output directory; holds the dataset and all run artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `data.seed` for `gen`, or the run seeds otherwise.
    #[arg(long)]
    seed: Option<u64>,
    /// Confidence parameter of the bound, in (0,1).
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate and process the dataset.
    Gen(Common),
    /// Train one model variant on an existing dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["full", "reduced"])]
        variant: String,
    },
    /// Generate the dataset if needed, then train both variants for every seed.
    Experiment(Common),
    /// Bound report from saved checkpoints.
    Bound(Common),
    /// Gap table of a finished experiment.
    Report(Common),
}

fn load_config(c: &Common, for_gen: bool) -> Result<ExperimentConfig> {
    let preset: Preset = c.preset.parse()?;
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path, preset)?,
        None => ExperimentConfig::preset(preset),
    };
    if let Some(seed) = c.seed {
        if for_gen {
            cfg.data.seed = seed;
        } else {
            cfg.experiment.seeds = vec![seed];
        }
    }
    if let Some(delta) = c.delta {
        cfg.experiment.delta = delta;
    }
    cfg.output_dir = c.out.clone();
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(c) => {
            let cfg = load_config(&c, true)?;
            let manifest = harness::gen_dataset(&cfg)?;
            println!("wrote {} samples to {}", manifest.records.len(), manifest.dir.display());
        }
        Command::Train { common, variant } => {
            let cfg = load_config(&common, false)?;
            let variant: Variant = variant.parse()?;
            let manifest = DatasetManifest::load(&cfg.output_dir)?;
            let data = harness::load_dataset(&manifest, variant)?;
            for &seed in &cfg.experiment.seeds {
                let (_, trace) = harness::train_variant(&data, variant, seed, &cfg, &cfg.output_dir)?;
                let line: Vec<String> = SplitKind::ALL
                    .iter()
                    .map(|k| format!("{} {:.4}", k.name(), trace.final_of(*k).accuracy))
                    .collect();
                println!("{variant} seed {seed}: {}", line.join(", "));
            }
        }
        Command::Experiment(c) => {
            let cfg = load_config(&c, false)?;
            let manifest = match DatasetManifest::load(&cfg.output_dir) {
                Ok(m) if m.records.len() == cfg.data.total() => m,
                _ => harness::gen_dataset(&cfg)?,
            };
            let artifacts = harness::run_experiment(&manifest, &cfg)?;
            for run in &artifacts.runs {
                print!("{}", run.report.text_block());
            }
            print!("{}", artifacts.gap_table.to_text());
        }
        Command::Bound(c) => {
            let cfg = load_config(&c, false)?;
            let manifest = DatasetManifest::load(&cfg.output_dir)?;
            for &seed in &cfg.experiment.seeds {
                let report = harness::bound_from_checkpoints(&manifest, &cfg, seed)?;
                println!("{}", twr_har::bound::GebReport::csv_header().join(","));
                println!("{}", report.csv_row().join(","));
                print!("{}", report.text_block());
            }
        }
        Command::Report(c) => {
            let table = harness::report_gaps_from_dir(&c.out)?;
            if table.rows.is_empty() {
                return Err(Error::Format {
                    path: c.out.join("geb_report.csv"),
                    reason: "no runs recorded".into(),
                });
            }
            table.write(&c.out)?;
            print!("{}", table.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
