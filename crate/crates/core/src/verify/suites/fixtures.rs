//! Small self-trained fixtures shared by the verification suites.

use crate::config::ExperimentConfig;
use crate::embed::{train_embedding, EmbedModel, EmbedOptimizer};
use crate::env::{rasterize, sample_shape, Heightmap};
use crate::error::Result;
use crate::policy::PolicyTrainer;
use crate::rng::{rng_for, tags};
use crate::run::label_costs;

pub struct TrainedFixture {
    pub model: EmbedModel,
    pub maps: Vec<Heightmap>,
    pub costs: Vec<f64>,
    pub gamma_bar: f64,
}

/// Samples a small environment set, labels it with a briefly trained policy,
/// and trains an embedding on the labels. Everything derives from `seed`.
pub fn trained_embedding_fixture(
    seed: u64,
    n_envs: usize,
    policy_steps: usize,
    epochs: usize,
) -> Result<TrainedFixture> {
    let exp = ExperimentConfig::desk();
    let g = exp.grid_size;

    let mut gen_rng = rng_for(seed, &[tags::VERIFY, 1]);
    let maps: Vec<Heightmap> = (0..n_envs)
        .map(|i| {
            // mix train and test shapes so costs spread out
            let dist = if i % 3 == 2 {
                &exp.test_dist
            } else {
                &exp.train_dist
            };
            let shape = sample_shape(dist, g, &mut gen_rng);
            rasterize(&shape, g)
        })
        .collect::<Result<_>>()?;

    let mut trainer = PolicyTrainer::new(exp.policy.clone(), &mut rng_for(seed, &[tags::VERIFY, 2]));
    let mut frames = crate::policy::FrameSet::new();
    frames.sync(&maps);
    trainer.train(
        &frames,
        policy_steps,
        &exp.grasp,
        &mut rng_for(seed, &[tags::VERIFY, 3]),
    )?;
    let costs: Vec<f64> = label_costs(&maps, &trainer.params, &exp.grasp)
        .iter()
        .map(|l| l.value)
        .collect();

    let mut model = EmbedModel::init(g, &exp.embed, &mut rng_for(seed, &[tags::VERIFY, 4]));
    let mut opt = EmbedOptimizer::new(&model);
    train_embedding(
        &mut model,
        &mut opt,
        &maps,
        &costs,
        epochs,
        &exp.embed,
        &mut rng_for(seed, &[tags::VERIFY, 5]),
    )?;
    let gamma_bar = model.lipschitz_upper_bound(exp.embed.power_iters_report);
    Ok(TrainedFixture {
        model,
        maps,
        costs,
        gamma_bar,
    })
}
