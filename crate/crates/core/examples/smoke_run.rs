// Scratch end-to-end timing/direction probe for the desk preset.

use dragen_core::config::{ExperimentConfig, RunConfig};
use dragen_core::run::{generate_datasets, run};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let method = args.get(1).cloned().unwrap_or_else(|| "none".to_string());
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1);
    let iterations: u32 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(10);

    let mut exp = ExperimentConfig::desk();
    exp.iterations = iterations;
    if let Some(eta) = args.get(4) {
        exp.ascent.eta = eta.parse().unwrap();
    }
    if let Some(lambda) = args.get(5) {
        exp.ascent.lambda = lambda.parse().unwrap();
    }
    if let Some(steps) = args.get(6) {
        let s: usize = steps.parse().unwrap();
        exp.policy_steps_pretrain = s;
        exp.policy_steps_retrain = s;
    }
    if let Some(hidden) = args.get(7) {
        exp.policy.hidden = hidden.parse().unwrap();
    }
    if let Some(lr) = args.get(8) {
        exp.policy.lr = lr.parse().unwrap();
    }
    let base = std::env::temp_dir().join(format!("dragen-smoke-{}", std::process::id()));
    let data = base.join("data");
    if !data.join("train.manifest.json").exists() {
        generate_datasets(&exp, 7, &data).unwrap();
    }

    let t0 = Instant::now();
    let cfg = RunConfig {
        method: method.clone(),
        seed,
        experiment: exp,
    };
    let out = base.join(format!("run-{method}-{seed}-{}", std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap().as_nanos()));
    let summary = run(&cfg, &data, &out).unwrap();
    println!(
        "{method} seed {seed}: {:?} best_iter {} train {:.3} test {:?}",
        t0.elapsed(),
        summary.best_iteration,
        summary.best_train_success,
        summary.test_success_at_best
    );
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let t3: Vec<String> = csv.lines().skip(1).map(|l| l.split(',').nth(9).unwrap_or("").to_string()).collect();
    println!("CURVE {method} {seed}: {}", t3.join(" "));
}
