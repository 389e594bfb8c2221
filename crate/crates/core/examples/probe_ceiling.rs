// Scratch: oracle ceiling on the test distribution and latent hardness probe.

use dragen_core::config::ExperimentConfig;
use dragen_core::embed::{train_embedding, EmbedModel, EmbedOptimizer};
use dragen_core::env::{rasterize, sample_shape, Heightmap};
use dragen_core::geom::ORIENTATIONS;
use dragen_core::grasp::{execute_grasp, GraspAction};
use dragen_core::policy::{FrameSet, PolicyTrainer};
use dragen_core::rng::rng_for;
use dragen_core::run::label_costs;

fn best_possible(h: &Heightmap, mu: f64, cfg: &ExperimentConfig) -> bool {
    let g = h.grid_size();
    for bin in 0..ORIENTATIONS {
        for r in 0..g {
            for c in 0..g {
                if execute_grasp(h, &GraspAction::new(r, c, bin), mu, &cfg.grasp).success {
                    return true;
                }
            }
        }
    }
    false
}

fn main() {
    let exp = ExperimentConfig::desk();
    let g = exp.grid_size;

    let mut rng = rng_for(7, &[0xcc]);
    let test_maps: Vec<Heightmap> = (0..200)
        .map(|_| rasterize(&sample_shape(&exp.test_dist, g, &mut rng), g).unwrap())
        .collect();
    let train_maps: Vec<Heightmap> = (0..200)
        .map(|_| rasterize(&sample_shape(&exp.train_dist, g, &mut rng), g).unwrap())
        .collect();

    for (name, maps) in [("test", &test_maps), ("train", &train_maps)] {
        for mu in [0.3, 0.4, 0.5] {
            let feasible = maps.iter().filter(|h| best_possible(h, mu, &exp)).count();
            print!("{name} ceiling@{mu}: {:.3}  ", feasible as f64 / maps.len() as f64);
        }
        println!();
    }

    // latent hardness probe: does the trained embedding rank test-direction
    // shapes as higher predicted cost?
    let mut trainer = PolicyTrainer::new(exp.policy.clone(), &mut rng_for(9, &[4]));
    let mut fs = FrameSet::new();
    fs.sync(&train_maps);
    trainer.train(&fs, 2000, &exp.grasp, &mut rng_for(9, &[5])).unwrap();
    let costs: Vec<f64> = label_costs(&train_maps, &trainer.params, &exp.grasp)
        .iter()
        .map(|l| l.value)
        .collect();
    let mut model = EmbedModel::init(g, &exp.embed, &mut rng_for(11, &[6]));
    let mut opt = EmbedOptimizer::new(&model);
    train_embedding(&mut model, &mut opt, &train_maps, &costs, 400, &exp.embed, &mut rng_for(11, &[7])).unwrap();

    let mean_pred = |maps: &[Heightmap]| -> f64 {
        maps.iter()
            .map(|h| model.predict_cost(&model.encode(h)))
            .sum::<f64>()
            / maps.len() as f64
    };
    println!("mean predicted cost: train {:.4} test {:.4}", mean_pred(&train_maps), mean_pred(&test_maps));

    // true label stats for context
    let test_costs: Vec<f64> = label_costs(&test_maps, &trainer.params, &exp.grasp)
        .iter()
        .map(|l| l.value)
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("mean true cost under policy: train {:.3} test {:.3}", mean(&costs), mean(&test_costs));
}
