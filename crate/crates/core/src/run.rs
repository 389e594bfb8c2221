//! The alternating minimax loop plus evaluation and run comparison.
//!
//! One run: pre-train the policy on the initial set, then for N iterations
//! (1) label costs when the method needs them, (2) generate K new
//! environments with the selected strategy, (3) retrain the policy on the
//! grown set, (4) evaluate. Every random draw comes from a stream derived
//! from the master seed, so a run is byte-reproducible.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::augment::{make_strategy, IterationContext};
use crate::config::RunConfig;
use crate::env::{Dataset, Heightmap, ManifestEntry};
use crate::error::{Error, Result};
use crate::grasp::{execute_grasp, label_cost, reward, CostLabel, GraspConfig};
use crate::io::{load_dataset, metrics_to_csv, save_checkpoint, save_dataset, write_atomic,
    MetricsRow};
use crate::policy::{greedy_action, FrameSet, PolicyParams, PolicyTrainer};
use crate::rng::{derive_seed, rng_for, tags};

/// Greedy success fraction on a test set, per friction value.
pub fn evaluate(
    params: &PolicyParams,
    test: &[Heightmap],
    frictions: &[f64],
    grasp_cfg: &GraspConfig,
) -> Result<Vec<f64>> {
    if test.is_empty() {
        return Err(Error::usage("evaluation needs a non-empty test set"));
    }
    let mut successes = vec![0usize; frictions.len()];
    for h in test {
        let action = greedy_action(h, params);
        for (i, &mu) in frictions.iter().enumerate() {
            if execute_grasp(h, &action, mu, grasp_cfg).success {
                successes[i] += 1;
            }
        }
    }
    Ok(successes
        .iter()
        .map(|&s| s as f64 / test.len() as f64)
        .collect())
}

/// Friction-sweep cost labels for every environment under the policy's
/// greedy action.
pub fn label_costs(
    maps: &[Heightmap],
    params: &PolicyParams,
    grasp_cfg: &GraspConfig,
) -> Vec<CostLabel> {
    maps.iter()
        .map(|h| label_cost(h, |h| greedy_action(h, params), grasp_cfg))
        .collect()
}

/// Greedy success rate at the training friction over a seeded subsample of
/// the (possibly large) training set.
fn train_success(
    params: &PolicyParams,
    maps: &[Heightmap],
    cap: usize,
    seed: u64,
    grasp_cfg: &GraspConfig,
) -> f64 {
    let indices: Vec<usize> = if maps.len() <= cap {
        (0..maps.len()).collect()
    } else {
        // partial Fisher-Yates for a deterministic sample without replacement
        use rand::Rng;
        let mut rng = rng_for(seed, &[tags::EVAL, 0x7a]);
        let mut pool: Vec<usize> = (0..maps.len()).collect();
        for i in 0..cap {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(cap);
        pool
    };
    let hits: usize = indices
        .iter()
        .map(|&i| {
            let a = greedy_action(&maps[i], params);
            reward(&maps[i], &a, grasp_cfg) as usize
        })
        .sum();
    hits as f64 / indices.len() as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub seed: u64,
    pub config_hash: String,
    pub test_manifest_hash: String,
    pub frictions: Vec<f64>,
    pub final_dataset_size: usize,
    /// Iteration with the highest train success; its test numbers are the
    /// run's reported result.
    pub best_iteration: u32,
    pub best_train_success: f64,
    pub test_success_at_best: Vec<f64>,
}

/// Executes a full run into `out_dir` using datasets from `data_dir`.
pub fn run(config: &RunConfig, data_dir: &Path, out_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    let exp = &config.experiment;
    let master = config.seed;
    let g = exp.grid_size;

    let (train_data, train_manifest, _) = load_dataset(data_dir, "train")?;
    let (test_data, test_manifest, test_manifest_hash) = load_dataset(data_dir, "test")?;
    if train_manifest.grid_size != g || test_manifest.grid_size != g {
        return Err(Error::config(format!(
            "dataset grid size {} does not match config grid size {g}",
            train_manifest.grid_size
        )));
    }

    fs::create_dir_all(out_dir)?;
    let config_hash = exp.hash();
    write_atomic(
        &out_dir.join("config.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "run": config,
            "config_hash": config_hash,
            "tool_version": crate::TOOL_VERSION,
        }))?
        .as_bytes(),
    )?;

    let mut dataset = train_data;
    let mut strategy = make_strategy(&config.method, exp)?;
    let mut trainer = PolicyTrainer::new(
        exp.policy.clone(),
        &mut rng_for(master, &[tags::POLICY_INIT]),
    );

    let ckpt_dir = out_dir.join("checkpoints");
    let records_dir = out_dir.join("records");

    // orientation frames, kept in sync as the dataset grows
    let mut frames = FrameSet::new();
    frames.sync(&dataset.maps);

    // pre-training round
    trainer.train(
        &frames,
        exp.policy_steps_pretrain,
        &exp.grasp,
        &mut rng_for(master, &[tags::POLICY_TRAIN, 0]),
    )?;
    save_checkpoint(
        &ckpt_dir.join("iter-00-policy"),
        &[("scorer", &trainer.params.scorer)],
        &config_hash,
    )?;

    let mut rows: Vec<MetricsRow> = Vec::new();
    let eval_row = |trainer: &PolicyTrainer, dataset: &Dataset, iteration: u32| -> Result<(f64, Vec<f64>)> {
        let ts = train_success(
            &trainer.params,
            &dataset.maps,
            exp.train_eval_cap,
            derive_seed(master, &[tags::EVAL, iteration as u64]),
            &exp.grasp,
        );
        let test = evaluate(&trainer.params, &test_data.maps, &exp.eval_frictions, &exp.grasp)?;
        Ok((ts, test))
    };

    let (ts0, test0) = eval_row(&trainer, &dataset, 0)?;
    rows.push(MetricsRow {
        iteration: 0,
        dataset_size: dataset.len(),
        mean_true_cost: None,
        max_true_cost: None,
        mean_predicted_cost: None,
        recon_mse: None,
        lipschitz_bound: None,
        target_reached_fraction: None,
        train_success: ts0,
        test_success: test0,
    });

    for t in 1..=exp.iterations {
        // cost labels for the whole current set, re-evaluated every
        // iteration before the embedding trains
        let labels: Option<Vec<CostLabel>> = if strategy.needs_cost_labels() {
            Some(label_costs(&dataset.maps, &trainer.params, &exp.grasp))
        } else {
            None
        };
        let cost_values: Option<Vec<f64>> =
            labels.map(|ls| ls.iter().map(|l| l.value).collect());
        let (mean_cost, max_cost) = match &cost_values {
            Some(cs) => (
                Some(cs.iter().sum::<f64>() / cs.len() as f64),
                Some(cs.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            ),
            None => (None, None),
        };

        let mut strat_rng = rng_for(master, &[tags::AUGMENT, t as u64]);
        let mut ctx = IterationContext {
            iteration: t,
            k: exp.k_per_iteration,
            grid_size: g,
            dataset: &dataset,
            costs: cost_values.as_deref(),
            grasp: &exp.grasp,
            rng: &mut strat_rng,
        };
        let batch = strategy.generate(&mut ctx)?;

        if !batch.records.is_empty() {
            fs::create_dir_all(&records_dir)?;
            write_atomic(
                &records_dir.join(format!("iter-{t:02}.json")),
                serde_json::to_string_pretty(&batch.records)?.as_bytes(),
            )?;
        }

        for (i, map) in batch.maps.into_iter().enumerate() {
            dataset.push(
                ManifestEntry {
                    id: format!("{}-{t:02}-{i:03}", config.method),
                    provenance: batch.provenance,
                    seed: derive_seed(master, &[tags::AUGMENT, t as u64, i as u64]),
                    below_threshold: batch.below_threshold[i],
                },
                map,
            );
        }

        frames.sync(&dataset.maps);
        trainer.train(
            &frames,
            exp.policy_steps_retrain,
            &exp.grasp,
            &mut rng_for(master, &[tags::POLICY_TRAIN, t as u64]),
        )?;

        save_checkpoint(
            &ckpt_dir.join(format!("iter-{t:02}-policy")),
            &[("scorer", &trainer.params.scorer)],
            &config_hash,
        )?;
        if let Some(model) = strategy.embed_model() {
            save_checkpoint(
                &ckpt_dir.join(format!("iter-{t:02}-embed")),
                &[
                    ("encoder", &model.encoder),
                    ("decoder", &model.decoder),
                    ("predictor", &model.predictor),
                ],
                &config_hash,
            )?;
        }

        let (ts, test) = eval_row(&trainer, &dataset, t)?;
        let em = batch.embed_metrics;
        rows.push(MetricsRow {
            iteration: t,
            dataset_size: dataset.len(),
            mean_true_cost: mean_cost,
            max_true_cost: max_cost,
            mean_predicted_cost: em.map(|m| m.mean_predicted_cost),
            recon_mse: em.map(|m| m.recon_mse),
            lipschitz_bound: em.map(|m| m.lipschitz_bound),
            target_reached_fraction: em.map(|m| m.target_reached_fraction),
            train_success: ts,
            test_success: test,
        });
    }

    write_atomic(
        &out_dir.join("metrics.csv"),
        metrics_to_csv(&rows, &exp.eval_frictions).as_bytes(),
    )?;
    save_dataset(out_dir, "final", &dataset, g, &config_hash)?;

    let best = rows
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.train_success
                .partial_cmp(&b.train_success)
                .unwrap()
                .then(ib.cmp(ia)) // ties resolve to the earliest iteration
        })
        .map(|(_, r)| r)
        .expect("at least one row");
    let summary = RunSummary {
        method: config.method.clone(),
        seed: master,
        config_hash,
        test_manifest_hash,
        frictions: exp.eval_frictions.clone(),
        final_dataset_size: dataset.len(),
        best_iteration: best.iteration,
        best_train_success: best.train_success,
        test_success_at_best: best.test_success.clone(),
    };
    write_atomic(
        &out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    Ok(summary)
}

pub fn load_summary(run_dir: &Path) -> Result<RunSummary> {
    let path = run_dir.join("summary.json");
    let bytes = fs::read(&path)
        .map_err(|e| Error::usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: String,
    pub seeds: Vec<u64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub frictions: Vec<f64>,
    pub methods: Vec<MethodStats>,
    /// Published reference results for the standard friction grid, attached
    /// as annotation rows.
    pub reference: Vec<(String, Vec<f64>)>,
}

/// Aggregates completed runs into a per-method table. All runs must share
/// the same test manifest.
pub fn compare(run_dirs: &[PathBuf]) -> Result<Comparison> {
    if run_dirs.len() < 2 {
        return Err(Error::usage("compare needs at least two run directories"));
    }
    let summaries: Vec<RunSummary> = run_dirs
        .iter()
        .map(|d| load_summary(d))
        .collect::<Result<_>>()?;

    let first = &summaries[0];
    for (dir, s) in run_dirs.iter().zip(&summaries) {
        if s.test_manifest_hash != first.test_manifest_hash {
            return Err(Error::usage(format!(
                "test manifests differ: {} has {} but {} has {}",
                run_dirs[0].display(),
                &first.test_manifest_hash[..12],
                dir.display(),
                &s.test_manifest_hash[..12]
            )));
        }
        if s.frictions != first.frictions {
            return Err(Error::usage("runs evaluated at different frictions"));
        }
    }

    let mut by_method: BTreeMap<String, Vec<&RunSummary>> = BTreeMap::new();
    for s in &summaries {
        by_method.entry(s.method.clone()).or_default().push(s);
    }

    let nf = first.frictions.len();
    let mut methods = Vec::new();
    for (method, group) in by_method {
        let n = group.len() as f64;
        let mut mean = vec![0.0; nf];
        for s in &group {
            for (m, v) in mean.iter_mut().zip(&s.test_success_at_best) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; nf];
        for s in &group {
            for ((sd, v), m) in std.iter_mut().zip(&s.test_success_at_best).zip(&mean) {
                *sd += (v - m) * (v - m) / n;
            }
        }
        for sd in &mut std {
            *sd = sd.sqrt();
        }
        methods.push(MethodStats {
            method,
            seeds: group.iter().map(|s| s.seed).collect(),
            mean,
            std,
        });
    }

    let reference = if first.frictions == [0.3, 0.4, 0.5] {
        vec![
            ("reference:dragen".to_string(), vec![0.655, 0.684, 0.716]),
            ("reference:dr".to_string(), vec![0.606, 0.632, 0.672]),
            ("reference:none".to_string(), vec![0.577, 0.627, 0.686]),
        ]
    } else {
        Vec::new()
    };

    Ok(Comparison {
        frictions: first.frictions.clone(),
        methods,
        reference,
    })
}

pub fn comparison_to_csv(cmp: &Comparison) -> String {
    let mut out = String::from("method,seeds");
    for mu in &cmp.frictions {
        out.push_str(&format!(",mean_{mu},std_{mu}"));
    }
    out.push('\n');
    for m in &cmp.methods {
        let seeds = m
            .seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        out.push_str(&format!("{},{}", m.method, seeds));
        for (mean, std) in m.mean.iter().zip(&m.std) {
            out.push_str(&format!(",{mean},{std}"));
        }
        out.push('\n');
    }
    for (name, vals) in &cmp.reference {
        out.push_str(&format!("{name},"));
        for v in vals {
            out.push_str(&format!(",{v},"));
        }
        out.push('\n');
    }
    out
}

pub fn comparison_to_text(cmp: &Comparison) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<20}", "method"));
    for mu in &cmp.frictions {
        out.push_str(&format!("{:>20}", format!("mu={mu}")));
    }
    out.push('\n');
    for m in &cmp.methods {
        out.push_str(&format!("{:<20}", m.method));
        for (mean, std) in m.mean.iter().zip(&m.std) {
            out.push_str(&format!("{:>20}", format!("{mean:.3} +- {std:.3}")));
        }
        out.push('\n');
    }
    for (name, vals) in &cmp.reference {
        out.push_str(&format!("{:<20}", name));
        for v in vals {
            out.push_str(&format!("{:>20}", format!("{v:.3}")));
        }
        out.push('\n');
    }
    out
}

/// Generates the train/test dataset pair for a config into `out_dir`.
pub fn generate_datasets(
    exp: &crate::config::ExperimentConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    exp.validate()?;
    let hash = exp.hash();
    let g = exp.grid_size;
    let build = |label: &str, count: usize, dist, tag: u64| -> Result<Dataset> {
        let mut ds = Dataset::new();
        for i in 0..count {
            let env_seed = derive_seed(seed, &[tag, i as u64]);
            let mut rng = rng_for(env_seed, &[]);
            let shape = crate::env::sample_shape(dist, g, &mut rng);
            ds.push(
                ManifestEntry {
                    id: format!("{label}-{i:05}"),
                    provenance: crate::env::Provenance::Sampled,
                    seed: env_seed,
                    below_threshold: false,
                },
                crate::env::rasterize(&shape, g)?,
            );
        }
        Ok(ds)
    };
    let train = build("train", exp.dataset.train_count, &exp.train_dist, tags::DATASET_TRAIN)?;
    let test = build("test", exp.dataset.test_count, &exp.test_dist, tags::DATASET_TEST)?;
    save_dataset(out_dir, "train", &train, g, &hash)?;
    save_dataset(out_dir, "test", &test, g, &hash)?;
    Ok(())
}
