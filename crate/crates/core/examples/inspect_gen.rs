// Scratch: visualize decoded adversarial maps next to their sources.

use dragen_core::advgen::{ascend, AscentConfig};
use dragen_core::config::ExperimentConfig;
use dragen_core::embed::{
    build_latent_distribution, evaluate_embedding, train_embedding, EmbedModel, EmbedOptimizer,
};
use dragen_core::env::{rasterize, sample_shape, Heightmap};
use dragen_core::policy::{greedy_action, FrameSet, PolicyTrainer};
use dragen_core::rng::rng_for;
use dragen_core::run::label_costs;

fn ascii(h: &Heightmap) -> String {
    let mut s = String::new();
    for r in 0..h.grid_size() {
        for c in 0..h.grid_size() {
            let v = h.get(r, c);
            s.push(if v >= 0.75 {
                '#'
            } else if v >= 0.5 {
                '+'
            } else if v >= 0.25 {
                ':'
            } else if v >= 0.1 {
                '.'
            } else {
                ' '
            });
        }
        s.push('\n');
    }
    s
}

fn side_by_side(a: &str, b: &str) -> String {
    a.lines()
        .zip(b.lines())
        .map(|(x, y)| format!("{x}  |  {y}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let eta: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let lambda: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.01);

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
    let labels = label_costs(&maps, &trainer.params, &exp.grasp);
    let costs: Vec<f64> = labels.iter().map(|l| l.value).collect();

    let mut model = EmbedModel::init(g, &exp.embed, &mut rng_for(11, &[6]));
    let mut opt = EmbedOptimizer::new(&model);
    train_embedding(&mut model, &mut opt, &maps, &costs, 400, &exp.embed, &mut rng_for(11, &[7]))
        .unwrap();
    let eval = evaluate_embedding(&model, &maps, &costs, &exp.embed);
    println!("recon {:.4} pred {:.4} gamma {:.4}", eval.recon_mse, eval.pred_mse, eval.gamma_bar);

    let dist = build_latent_distribution(&model, &maps).unwrap();
    let range = dragen_core::advgen::empirical_range(&model, &maps);
    let cfg = AscentConfig {
        eta,
        lambda,
        max_steps: 100,
        target_fraction: 0.1,
        d_eps: 1e-12,
    };
    println!("range {range:.4} eta {eta} lambda {lambda}");

    let mut disp_rel = 0.0;
    for idx in [3usize, 17, 42, 99] {
        let z0 = &dist.atoms()[idx];
        let rec = ascend(z0, &model, &cfg, 0.1 * range);
        let recon = model.decode(z0);
        let decoded = model.decode(&rec.z);
        let z0n = z0.iter().map(|v| v * v).sum::<f64>().sqrt();
        disp_rel += rec.displacement / z0n;
        println!(
            "env {idx}: true {:.1} pred {:.3} -> {:.3}, steps {}, disp {:.4} (|z0| {:.4})",
            costs[idx], rec.cost_before, rec.cost_after, rec.steps, rec.displacement, z0n
        );
        println!("{}", side_by_side(&ascii(&maps[idx]), &ascii(&recon)));
        println!("--- decoded perturbed:");
        println!("{}", side_by_side(&ascii(&decoded), &ascii(&decoded)));
        let a = greedy_action(&decoded, &trainer.params);
        let sweep = dragen_core::grasp::sweep_cost(&decoded, &a, &exp.grasp);
        println!("decoded cost under policy: {:?}\n", sweep);
    }
    println!("mean relative displacement {:.3}", disp_rel / 4.0);
}
