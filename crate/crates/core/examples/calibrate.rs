// Scratch calibration harness (not part of the deliverable surface; used to
// pick seeds and confirm empirical targets while developing).

use dragen_core::advgen::{ascend, empirical_range};
use dragen_core::config::ExperimentConfig;
use dragen_core::embed::{
    build_latent_distribution, evaluate_embedding, train_embedding, EmbedModel, EmbedOptimizer,
};
use dragen_core::env::{rasterize, sample_shape};
use dragen_core::policy::PolicyTrainer;
use dragen_core::rng::rng_for;
use dragen_core::run::label_costs;
use std::time::Instant;

fn main() {
    let exp = ExperimentConfig::desk();
    let g = exp.grid_size;
    let args: Vec<String> = std::env::args().collect();
    let stage = args.get(1).map(|s| s.as_str()).unwrap_or("embed");

    // 200 train shapes
    let mut rng = rng_for(42, &[1]);
    let maps: Vec<_> = (0..200)
        .map(|_| rasterize(&sample_shape(&exp.train_dist, g, &mut rng), g).unwrap())
        .collect();

    if stage == "policy" {
        // singleton easy env smoke test
        let mut square = dragen_core::env::Heightmap::zeros(16);
        for r in 5..11 {
            for c in 5..11 {
                square.set(r, c, 1.0);
            }
        }
        let t0 = Instant::now();
        let mut trainer = PolicyTrainer::new(exp.policy.clone(), &mut rng_for(7, &[2]));
        let mut fs = dragen_core::policy::FrameSet::new();
        fs.sync(&[square.clone()]);
        let stats = trainer
            .train(&fs, 500, &exp.grasp, &mut rng_for(7, &[3]))
            .unwrap();
        println!(
            "singleton: 500 steps in {:?}, mean reward {:.3}, best trailing {:.3}",
            t0.elapsed(),
            stats.mean_reward,
            stats.best_trailing_success
        );
        let a = dragen_core::policy::greedy_action(&square, &trainer.params);
        println!(
            "greedy action {:?} reward {}",
            a,
            dragen_core::grasp::reward(&square, &a, &exp.grasp)
        );

        // full 1000-step round on 200 envs for timing
        let t0 = Instant::now();
        let mut trainer = PolicyTrainer::new(exp.policy.clone(), &mut rng_for(9, &[4]));
        let mut fs = dragen_core::policy::FrameSet::new();
        fs.sync(&maps);
        let stats = trainer
            .train(&fs, 1000, &exp.grasp, &mut rng_for(9, &[5]))
            .unwrap();
        println!(
            "200-env round: 1000 steps in {:?}, mean reward {:.3} best {:.3}",
            t0.elapsed(),
            stats.mean_reward,
            stats.best_trailing_success
        );
        let t0 = Instant::now();
        let labels = label_costs(&maps, &trainer.params, &exp.grasp);
        let mean: f64 = labels.iter().map(|l| l.value).sum::<f64>() / labels.len() as f64;
        let n_fail = labels.iter().filter(|l| l.value == 1.0).count();
        println!(
            "labeling 200 envs: {:?}, mean cost {:.3}, fails {}",
            t0.elapsed(),
            mean,
            n_fail
        );
        return;
    }

    // --- embed stage ---
    let pretrain: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let chunks: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(4);
    let mut trainer = PolicyTrainer::new(exp.policy.clone(), &mut rng_for(9, &[4]));
    let mut fs = dragen_core::policy::FrameSet::new();
    fs.sync(&maps);
    let t0 = Instant::now();
    let stats = trainer
        .train(&fs, pretrain, &exp.grasp, &mut rng_for(9, &[5]))
        .unwrap();
    println!("policy pretrain {pretrain} steps: {:?} best {:.3}", t0.elapsed(), stats.best_trailing_success);

    let labels = label_costs(&maps, &trainer.params, &exp.grasp);
    let costs: Vec<f64> = labels.iter().map(|l| l.value).collect();
    let mean: f64 = costs.iter().sum::<f64>() / costs.len() as f64;
    let var: f64 = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / costs.len() as f64;
    println!("labels: mean {mean:.3} var {var:.4} fails {}", costs.iter().filter(|&&c| c == 1.0).count());

    let mut model = EmbedModel::init(g, &exp.embed, &mut rng_for(11, &[6]));
    let mut opt = EmbedOptimizer::new(&model);
    let t0 = Instant::now();
    let mut rng = rng_for(11, &[7]);
    for chunk in 0..chunks {
        train_embedding(&mut model, &mut opt, &maps, &costs, 50, &exp.embed, &mut rng).unwrap();
        let eval = evaluate_embedding(&model, &maps, &costs, &exp.embed);
        println!(
            "epoch {}: recon {:.4} pred {:.4} gamma {:.4} |z| {:.3} ({:?})",
            (chunk + 1) * 50,
            eval.recon_mse,
            eval.pred_mse,
            eval.gamma_bar,
            eval.mean_latent_norm,
            t0.elapsed()
        );
    }

    // ascent behavior
    let dist = build_latent_distribution(&model, &maps).unwrap();
    let range = empirical_range(&model, &maps);
    let target = exp.ascent.target_fraction * range;
    println!("predicted-cost range {range:.4}, target {target:.4}");
    for (eta, lambda) in [(0.5, 0.01), (0.5, 0.0), (1.0, 0.01), (2.0, 0.01), (1.0, 0.005)] {
        let cfg = dragen_core::advgen::AscentConfig {
            eta,
            lambda,
            max_steps: 100,
            target_fraction: 0.1,
            d_eps: 1e-12,
        };
        let mut reached = 0;
        let mut steps_sum = 0;
        let mut disp_sum = 0.0;
        for z0 in dist.atoms().iter().take(100) {
            let rec = ascend(z0, &model, &cfg, target);
            reached += rec.target_reached as usize;
            steps_sum += rec.steps;
            disp_sum += rec.displacement;
        }
        println!(
            "eta {eta} lambda {lambda}: reached {reached}/100, mean steps {:.1}, mean disp {:.3}",
            steps_sum as f64 / 100.0,
            disp_sum / 100.0
        );
    }
}
