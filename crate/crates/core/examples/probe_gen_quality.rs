// Scratch: population statistics of one iteration's generated maps.

use dragen_core::advgen::generate_adversarial;
use dragen_core::config::ExperimentConfig;
use dragen_core::embed::{build_latent_distribution, train_embedding, EmbedModel, EmbedOptimizer};
use dragen_core::env::{rasterize, sample_shape, Heightmap};
use dragen_core::geom::ORIENTATIONS;
use dragen_core::grasp::{execute_grasp, GraspAction};
use dragen_core::policy::{FrameSet, PolicyTrainer};
use dragen_core::rng::rng_for;
use dragen_core::run::label_costs;

fn best_possible_cost(h: &Heightmap, exp: &ExperimentConfig) -> f64 {
    let g = h.grid_size();
    for (i, mu) in dragen_core::grasp::FRICTION_SWEEP.iter().enumerate() {
        for bin in 0..ORIENTATIONS {
            for r in 0..g {
                for c in 0..g {
                    if execute_grasp(h, &GraspAction::new(r, c, bin), *mu, &exp.grasp).success {
                        return i as f64 / 10.0;
                    }
                }
            }
        }
    }
    1.0
}

fn binarize(h: &Heightmap, thr: f64) -> Heightmap {
    Heightmap::new(
        h.grid_size(),
        h.data().iter().map(|&v| if v >= thr { 1.0 } else { 0.0 }).collect(),
    )
    .unwrap()
}

fn main() {
    let exp = ExperimentConfig::desk();
    let g = exp.grid_size;
    let mut rng = rng_for(42, &[1]);
    let maps: Vec<Heightmap> = (0..200)
        .map(|_| rasterize(&sample_shape(&exp.train_dist, g, &mut rng), g).unwrap())
        .collect();

    let mut trainer = PolicyTrainer::new(exp.policy.clone(), &mut rng_for(9, &[4]));
    let mut fs = FrameSet::new();
    fs.sync(&maps);
    trainer.train(&fs, 1000, &exp.grasp, &mut rng_for(9, &[5])).unwrap();
    let costs: Vec<f64> = label_costs(&maps, &trainer.params, &exp.grasp)
        .iter()
        .map(|l| l.value)
        .collect();

    let mut model = EmbedModel::init(g, &exp.embed, &mut rng_for(11, &[6]));
    let mut opt = EmbedOptimizer::new(&model);
    train_embedding(&mut model, &mut opt, &maps, &costs, 400, &exp.embed, &mut rng_for(11, &[7])).unwrap();

    let dist = build_latent_distribution(&model, &maps).unwrap();
    let gen = generate_adversarial(&model, &dist, 96, &exp.ascent, exp.grasp.occupancy_threshold, &mut rng_for(13, &[8])).unwrap();

    // population stats of the binarized generated maps
    let bins: Vec<Heightmap> = gen.iter().map(|e| binarize(&e.map, exp.grasp.occupancy_threshold)).collect();
    let mut dup = 0;
    for i in 0..bins.len() {
        for j in 0..i {
            let diff: usize = bins[i]
                .data()
                .iter()
                .zip(bins[j].data())
                .filter(|(a, b)| a != b)
                .count();
            if diff <= 3 {
                dup += 1;
                break;
            }
        }
    }
    let policy_costs: Vec<f64> = label_costs(&bins, &trainer.params, &exp.grasp)
        .iter()
        .map(|l| l.value)
        .collect();
    let feasible_costs: Vec<f64> = bins.iter().map(|h| best_possible_cost(h, &exp)).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let occ: Vec<f64> = bins.iter().map(|h| h.occupied_count(0.5) as f64).collect();
    let src_occ: Vec<f64> = maps.iter().map(|h| h.occupied_count(0.5) as f64).collect();

    println!("generated: {} maps, near-duplicates {}", bins.len(), dup);
    println!(
        "policy-greedy cost: mean {:.3}, cost-1.0 count {}",
        mean(&policy_costs),
        policy_costs.iter().filter(|&&c| c == 1.0).count()
    );
    println!(
        "oracle-best cost:   mean {:.3}, infeasible@0.55 {}  (train set oracle-best mean {:.3})",
        mean(&feasible_costs),
        feasible_costs.iter().filter(|&&c| c == 1.0).count(),
        mean(&maps.iter().map(|h| best_possible_cost(h, &exp)).collect::<Vec<_>>())
    );
    println!(
        "occupied px: gen mean {:.1} (min {:.0} max {:.0}) vs train mean {:.1}",
        mean(&occ),
        occ.iter().copied().fold(f64::INFINITY, f64::min),
        occ.iter().copied().fold(0.0f64, f64::max),
        mean(&src_occ)
    );
    let reached = gen.iter().filter(|e| e.record.target_reached).count();
    let mean_disp = mean(&gen.iter().map(|e| e.record.displacement).collect::<Vec<_>>());
    println!("target reached {reached}/96, mean displacement {mean_disp:.3}");
}
