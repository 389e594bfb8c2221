//! `dragen` command-line interface.
//!
//! Subcommands: `gen-data` (materialize train/test datasets), `train` (one
//! full run of the selected method), `eval` (re-evaluate a checkpoint),
//! `compare` (aggregate runs into a method table), `advgen` (dump
//! original/perturbed heightmap pairs from a trained run), `verify` (run a
//! named verification suite).
//!
//! Exit codes: 0 success, 1 verification/assertion failure, 2 usage or
//! config error. Configuration comes from flags and JSON files only.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use dragen_core::advgen::ascend;
use dragen_core::config::{ExperimentConfig, RunConfig};
use dragen_core::embed::{build_latent_distribution, EmbedModel};
use dragen_core::error::{Error, Result};
use dragen_core::io::{load_checkpoint, load_dataset, write_atomic};
use dragen_core::policy::PolicyParams;
use dragen_core::rng::{rng_for, tags};
use dragen_core::run::{compare, comparison_to_csv, comparison_to_text, evaluate, run};
use dragen_core::verify::run_suite;

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (schema 1)");

#[derive(Parser)]
#[command(name = "dragen", version = VERSION, about = "Distributionally robust grasp-policy training via adversarial environment generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train/test dataset pair for a config.
    GenData {
        /// JSON experiment config; defaults to the chosen preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Built-in preset when no config file is given.
        #[arg(long, default_value = "desk")]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the full training loop with one augmentation method.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "desk")]
        preset: String,
        /// Augmentation method: dragen, dr, gaussian or none.
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory holding the datasets from `gen-data`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a run's policy checkpoint on a test set.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Iteration checkpoint to load; defaults to the summary's best.
        #[arg(long)]
        iteration: Option<u32>,
        /// Comma-separated friction values.
        #[arg(long, value_delimiter = ',')]
        frictions: Option<Vec<f64>>,
    },
    /// Aggregate completed runs into a per-method comparison table.
    Compare {
        /// Run directories (at least two).
        dirs: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump (original, perturbed) heightmap pairs from a trained run.
    Advgen {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a verification suite: gradcheck, lipschitz, ot, theorem1, oracle.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the JSON report to a file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_experiment(config: &Option<PathBuf>, preset: &str) -> Result<ExperimentConfig> {
    match config {
        Some(path) => ExperimentConfig::load(path),
        None => ExperimentConfig::preset(preset),
    }
}

fn load_policy_checkpoint(run_dir: &PathBuf, iteration: u32, exp: &ExperimentConfig) -> Result<PolicyParams> {
    let mut params = PolicyParams::init(&exp.policy, &mut rng_for(0, &[tags::POLICY_INIT]));
    let base = run_dir
        .join("checkpoints")
        .join(format!("iter-{iteration:02}-policy"));
    load_checkpoint(&base, &mut [("scorer", &mut params.scorer)])?;
    Ok(params)
}

fn read_run_config(run_dir: &PathBuf) -> Result<RunConfig> {
    let bytes = std::fs::read(run_dir.join("config.json"))
        .map_err(|e| Error::usage(format!("cannot read run config: {e}")))?;
    let value: serde_json::Value = serde_json::from_slice(&bytes)?;
    let run = value
        .get("run")
        .ok_or_else(|| Error::usage("run config missing 'run' field"))?;
    Ok(serde_json::from_value(run.clone())?)
}

fn real_main(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::GenData {
            config,
            preset,
            out,
            seed,
        } => {
            let exp = load_experiment(&config, &preset)?;
            dragen_core::run::generate_datasets(&exp, seed, &out)?;
            println!(
                "wrote {} train + {} test environments to {}",
                exp.dataset.train_count,
                exp.dataset.test_count,
                out.display()
            );
            Ok(0)
        }
        Command::Train {
            config,
            preset,
            method,
            seed,
            data,
            out,
        } => {
            let experiment = load_experiment(&config, &preset)?;
            let run_config = RunConfig {
                method,
                seed,
                experiment,
            };
            let summary = run(&run_config, &data, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(0)
        }
        Command::Eval {
            run,
            data,
            iteration,
            frictions,
        } => {
            let config = read_run_config(&run)?;
            let iteration = match iteration {
                Some(i) => i,
                None => dragen_core::run::load_summary(&run)?.best_iteration,
            };
            let params = load_policy_checkpoint(&run, iteration, &config.experiment)?;
            let (test, _, _) = load_dataset(&data, "test")?;
            let frictions = frictions.unwrap_or_else(|| config.experiment.eval_frictions.clone());
            let rates = evaluate(&params, &test.maps, &frictions, &config.experiment.grasp)?;
            let report = serde_json::json!({
                "iteration": iteration,
                "frictions": frictions,
                "success_rates": rates,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
        Command::Compare { dirs, out } => {
            let cmp = compare(&dirs)?;
            print!("{}", comparison_to_text(&cmp));
            if let Some(path) = out {
                write_atomic(&path, comparison_to_csv(&cmp).as_bytes())?;
            }
            Ok(0)
        }
        Command::Advgen {
            run,
            count,
            seed,
            out,
        } => {
            advgen_dump(&run, count, seed, &out)?;
            println!("wrote {count} pairs to {}", out.display());
            Ok(0)
        }
        Command::Verify { suite, seed, out } => {
            let report = run_suite(&suite, seed)?;
            let json = serde_json::to_string_pretty(&report)?;
            println!("{json}");
            if let Some(path) = out {
                write_atomic(&path, json.as_bytes())?;
            }
            Ok(if report.passed { 0 } else { 1 })
        }
    }
}

/// Loads the last embedding checkpoint of a trained run, re-ascends `count`
/// sampled latents, and dumps original/perturbed pairs plus their records.
fn advgen_dump(run_dir: &PathBuf, count: usize, seed: u64, out: &PathBuf) -> Result<()> {
    let config = read_run_config(run_dir)?;
    let exp = &config.experiment;

    // find the last embedding checkpoint
    let ckpt_dir = run_dir.join("checkpoints");
    let mut best: Option<(u32, PathBuf)> = None;
    for entry in std::fs::read_dir(&ckpt_dir)
        .map_err(|e| Error::usage(format!("no checkpoints in {}: {e}", run_dir.display())))?
    {
        let path = entry?.path();
        let name = path.file_name().unwrap_or_default().to_string_lossy().to_string();
        if let Some(stem) = name.strip_suffix("-embed.json") {
            if let Some(iter) = stem.strip_prefix("iter-").and_then(|s| s.parse::<u32>().ok()) {
                if best.as_ref().map_or(true, |(b, _)| iter > *b) {
                    best = Some((iter, ckpt_dir.join(format!("iter-{iter:02}-embed"))));
                }
            }
        }
    }
    let (_, base) = best.ok_or_else(|| {
        Error::usage("run has no embedding checkpoints (was it trained with --method dragen?)")
    })?;

    let mut model = EmbedModel::init(exp.grid_size, &exp.embed, &mut rng_for(0, &[tags::EMBED_INIT]));
    load_checkpoint(
        &base,
        &mut [
            ("encoder", &mut model.encoder),
            ("decoder", &mut model.decoder),
            ("predictor", &mut model.predictor),
        ],
    )?;

    let (dataset, _, _) = load_dataset(run_dir, "final")?;
    let latent = build_latent_distribution(&model, &dataset.maps)?;
    let range = {
        let costs: Vec<f64> = latent.atoms().iter().map(|z| model.predict_cost(z)).collect();
        costs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - costs.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let target = exp.ascent.target_fraction * range.max(0.0);

    use rand::Rng;
    let mut rng = rng_for(seed, &[tags::ASCENT]);
    let mut records = Vec::with_capacity(count);
    let mut blob: Vec<u8> = Vec::new();
    for _ in 0..count {
        let idx = rng.gen_range(0..latent.len());
        let mut record = ascend(&latent.atoms()[idx], &model, &exp.ascent, target);
        record.source_index = Some(idx);
        let perturbed = model.decode(&record.z);
        for &v in dataset.maps[idx].data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        for &v in perturbed.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        records.push(serde_json::json!({
            "source_id": dataset.entries[idx].id,
            "record": record,
        }));
    }

    std::fs::create_dir_all(out)?;
    write_atomic(
        &out.join("advgen-records.json"),
        serde_json::to_string_pretty(&records)?.as_bytes(),
    )?;
    write_atomic(&out.join("advgen-pairs.f64"), &blob)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
