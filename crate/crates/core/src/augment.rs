//! Environment-augmentation strategies behind one interface.
//!
//! Each method the training loop can run (adversarial generation, domain
//! randomization, Gaussian noise, none) implements [`AugmentStrategy`] and is
//! selected by name at runtime from the config/CLI. Strategies are stateful:
//! the adversarial one owns the embedding model and its optimizer so later
//! iterations fine-tune instead of restarting.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::advgen::{generate_adversarial, AscentConfig, PerturbationRecord};
use crate::embed::{
    build_latent_distribution, evaluate_embedding, train_embedding, EmbedConfig, EmbedModel,
    EmbedOptimizer,
};
use crate::env::{gaussian_augment, generate_dr_object, Dataset, DistributionConfig, Heightmap,
    Provenance};
use crate::error::{Error, Result};
use crate::grasp::GraspConfig;

/// Everything a strategy may look at during one loop iteration.
pub struct IterationContext<'a> {
    /// 1-based iteration index.
    pub iteration: u32,
    /// Number of environments to produce (augmenting methods).
    pub k: usize,
    pub grid_size: usize,
    pub dataset: &'a Dataset,
    /// Cost labels for the current dataset under the current policy; present
    /// iff the strategy asked for them via `needs_cost_labels`.
    pub costs: Option<&'a [f64]>,
    pub grasp: &'a GraspConfig,
    pub rng: &'a mut ChaCha8Rng,
}

/// Embedding-side numbers a strategy can report for the metrics row.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmbedIterationMetrics {
    pub mean_predicted_cost: f64,
    pub recon_mse: f64,
    pub lipschitz_bound: f64,
    pub target_reached_fraction: f64,
}

/// One iteration's worth of generated environments.
pub struct GeneratedBatch {
    pub maps: Vec<Heightmap>,
    pub provenance: Provenance,
    pub below_threshold: Vec<bool>,
    pub records: Vec<PerturbationRecord>,
    pub embed_metrics: Option<EmbedIterationMetrics>,
}

impl GeneratedBatch {
    fn plain(maps: Vec<Heightmap>, provenance: Provenance) -> Self {
        let n = maps.len();
        GeneratedBatch {
            maps,
            provenance,
            below_threshold: vec![false; n],
            records: Vec::new(),
            embed_metrics: None,
        }
    }
}

/// An interchangeable environment-generation method.
pub trait AugmentStrategy {
    fn name(&self) -> &'static str;
    /// Whether the loop must label every environment's cost before calling
    /// `generate` (the adversarial method trains on those labels).
    fn needs_cost_labels(&self) -> bool {
        false
    }
    fn generate(&mut self, ctx: &mut IterationContext<'_>) -> Result<GeneratedBatch>;
    /// The embedding model, for strategies that maintain one (checkpointing).
    fn embed_model(&self) -> Option<&EmbedModel> {
        None
    }
}

/// No augmentation: the loop only retrains the policy.
pub struct NoAugment;

impl AugmentStrategy for NoAugment {
    fn name(&self) -> &'static str {
        "none"
    }

    fn generate(&mut self, _ctx: &mut IterationContext<'_>) -> Result<GeneratedBatch> {
        Ok(GeneratedBatch::plain(Vec::new(), Provenance::Sampled))
    }
}

/// Domain randomization: chains primitives into new objects.
pub struct DomainRandomization {
    pub dist: DistributionConfig,
}

impl AugmentStrategy for DomainRandomization {
    fn name(&self) -> &'static str {
        "dr"
    }

    fn generate(&mut self, ctx: &mut IterationContext<'_>) -> Result<GeneratedBatch> {
        let maps = (0..ctx.k)
            .map(|_| generate_dr_object(&self.dist, ctx.grid_size, ctx.rng))
            .collect();
        Ok(GeneratedBatch::plain(maps, Provenance::Dr))
    }
}

/// Pixel-wise Gaussian noise on uniformly drawn source environments.
pub struct GaussianNoise {
    pub sigma: f64,
}

impl AugmentStrategy for GaussianNoise {
    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn generate(&mut self, ctx: &mut IterationContext<'_>) -> Result<GeneratedBatch> {
        let maps = (0..ctx.k)
            .map(|_| {
                let idx = ctx.rng.gen_range(0..ctx.dataset.len());
                gaussian_augment(&ctx.dataset.maps[idx], self.sigma, ctx.rng)
            })
            .collect();
        Ok(GeneratedBatch::plain(maps, Provenance::Gaussian))
    }
}

/// Adversarial generation through the cost-predictive latent space: retrain
/// the embedding on the freshly labeled set, rebuild the latent empirical
/// distribution, ascend sampled latents and decode them.
pub struct DragenStrategy {
    embed_cfg: EmbedConfig,
    ascent_cfg: AscentConfig,
    state: Option<(EmbedModel, EmbedOptimizer)>,
}

impl DragenStrategy {
    pub fn new(embed_cfg: EmbedConfig, ascent_cfg: AscentConfig) -> Self {
        DragenStrategy {
            embed_cfg,
            ascent_cfg,
            state: None,
        }
    }

    pub fn model(&self) -> Option<&EmbedModel> {
        self.state.as_ref().map(|(m, _)| m)
    }
}

impl AugmentStrategy for DragenStrategy {
    fn name(&self) -> &'static str {
        "dragen"
    }

    fn needs_cost_labels(&self) -> bool {
        true
    }

    fn embed_model(&self) -> Option<&EmbedModel> {
        self.model()
    }

    fn generate(&mut self, ctx: &mut IterationContext<'_>) -> Result<GeneratedBatch> {
        let costs = ctx
            .costs
            .ok_or_else(|| Error::usage("dragen strategy needs cost labels"))?;
        let first_round = self.state.is_none();
        if first_round {
            let model = EmbedModel::init(ctx.grid_size, &self.embed_cfg, ctx.rng);
            let opt = EmbedOptimizer::new(&model);
            self.state = Some((model, opt));
        }
        let epochs = if first_round {
            self.embed_cfg.first_epochs
        } else {
            self.embed_cfg.later_epochs
        };
        let (model, opt) = self.state.as_mut().expect("state initialized above");

        train_embedding(
            model,
            opt,
            &ctx.dataset.maps,
            costs,
            epochs,
            &self.embed_cfg,
            ctx.rng,
        )?;

        let latent_dist = build_latent_distribution(model, &ctx.dataset.maps)?;
        let generated = generate_adversarial(
            model,
            &latent_dist,
            ctx.k,
            &self.ascent_cfg,
            ctx.grasp.occupancy_threshold,
            ctx.rng,
        )?;

        let eval = evaluate_embedding(model, &ctx.dataset.maps, costs, &self.embed_cfg);
        let mean_predicted = latent_dist.expectation(|z| model.predict_cost(z));
        let reached = generated
            .iter()
            .filter(|e| e.record.target_reached)
            .count();
        let target_reached_fraction = if generated.is_empty() {
            0.0
        } else {
            reached as f64 / generated.len() as f64
        };

        let mut maps = Vec::with_capacity(generated.len());
        let mut below = Vec::with_capacity(generated.len());
        let mut records = Vec::with_capacity(generated.len());
        for env in generated {
            // project the decoded map back into the binary-extrusion
            // environment family (decoded SDF-style outputs are re-rasterized
            // the same way in the 3D pipeline); soft off-family statistics
            // otherwise skew the patch scorer
            maps.push(binarize(&env.map, ctx.grasp.occupancy_threshold));
            below.push(env.below_threshold);
            records.push(env.record);
        }
        Ok(GeneratedBatch {
            maps,
            provenance: Provenance::DragenIter(ctx.iteration),
            below_threshold: below,
            records,
            embed_metrics: Some(EmbedIterationMetrics {
                mean_predicted_cost: mean_predicted,
                recon_mse: eval.recon_mse,
                lipschitz_bound: eval.gamma_bar,
                target_reached_fraction,
            }),
        })
    }
}

/// Binary-extrusion projection: height 1.0 at or above the threshold.
fn binarize(h: &Heightmap, threshold: f64) -> Heightmap {
    let g = h.grid_size();
    let data = h
        .data()
        .iter()
        .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
        .collect();
    Heightmap::new(g, data).expect("binary data is in range")
}

/// Names accepted by [`make_strategy`], in listing order.
pub fn strategy_names() -> [&'static str; 4] {
    ["dragen", "dr", "gaussian", "none"]
}

/// Builds the named strategy from the experiment config.
pub fn make_strategy(
    name: &str,
    cfg: &crate::config::ExperimentConfig,
) -> Result<Box<dyn AugmentStrategy>> {
    match name {
        "dragen" => Ok(Box::new(DragenStrategy::new(
            cfg.embed.clone(),
            cfg.ascent.clone(),
        ))),
        "dr" => Ok(Box::new(DomainRandomization {
            dist: cfg.train_dist.clone(),
        })),
        "gaussian" => Ok(Box::new(GaussianNoise {
            sigma: cfg.gaussian_sigma,
        })),
        "none" => Ok(Box::new(NoAugment)),
        other => Err(Error::usage(format!(
            "unknown method '{other}'; available: {}",
            strategy_names().join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::env::ManifestEntry;
    use crate::rng::rng_for;

    fn small_dataset(g: usize, n: usize) -> Dataset {
        let mut ds = Dataset::new();
        let cfg = DistributionConfig::default_train();
        let mut rng = rng_for(3, &[0x21]);
        for i in 0..n {
            let shape = crate::env::sample_shape(&cfg, g, &mut rng);
            ds.push(
                ManifestEntry {
                    id: format!("train-{i:05}"),
                    provenance: Provenance::Sampled,
                    seed: i as u64,
                    below_threshold: false,
                },
                crate::env::rasterize(&shape, g).unwrap(),
            );
        }
        ds
    }

    #[test]
    fn registry_knows_all_methods() {
        let cfg = ExperimentConfig::desk();
        for name in strategy_names() {
            let s = make_strategy(name, &cfg).unwrap();
            assert_eq!(s.name(), name);
        }
        assert!(make_strategy("bogus", &cfg).is_err());
    }

    #[test]
    fn baselines_produce_exactly_k_maps() {
        let cfg = ExperimentConfig::desk();
        let ds = small_dataset(16, 10);
        let grasp = GraspConfig::default();
        for name in ["dr", "gaussian"] {
            let mut strat = make_strategy(name, &cfg).unwrap();
            let mut rng = rng_for(5, &[0x22]);
            let mut ctx = IterationContext {
                iteration: 1,
                k: 7,
                grid_size: 16,
                dataset: &ds,
                costs: None,
                grasp: &grasp,
                rng: &mut rng,
            };
            let batch = strat.generate(&mut ctx).unwrap();
            assert_eq!(batch.maps.len(), 7, "{name}");
            assert!(!strat.needs_cost_labels());
        }
    }

    #[test]
    fn none_strategy_adds_nothing() {
        let cfg = ExperimentConfig::desk();
        let ds = small_dataset(16, 4);
        let grasp = GraspConfig::default();
        let mut strat = make_strategy("none", &cfg).unwrap();
        let mut rng = rng_for(6, &[0x23]);
        let mut ctx = IterationContext {
            iteration: 1,
            k: 7,
            grid_size: 16,
            dataset: &ds,
            costs: None,
            grasp: &grasp,
            rng: &mut rng,
        };
        assert!(strat.generate(&mut ctx).unwrap().maps.is_empty());
    }

    #[test]
    fn dragen_requires_labels_and_produces_records() {
        let mut cfg = ExperimentConfig::desk();
        cfg.embed.first_epochs = 2; // keep the test light
        let ds = small_dataset(16, 8);
        let grasp = GraspConfig::default();
        let mut strat = make_strategy("dragen", &cfg).unwrap();
        assert!(strat.needs_cost_labels());

        let mut rng = rng_for(7, &[0x24]);
        let costs = vec![0.3; ds.len()];
        let mut ctx = IterationContext {
            iteration: 2,
            k: 5,
            grid_size: 16,
            dataset: &ds,
            costs: Some(&costs),
            grasp: &grasp,
            rng: &mut rng,
        };
        let batch = strat.generate(&mut ctx).unwrap();
        assert_eq!(batch.maps.len(), 5);
        assert_eq!(batch.records.len(), 5);
        assert_eq!(batch.provenance, Provenance::DragenIter(2));
        assert!(batch.embed_metrics.is_some());

        // missing labels is a usage error
        let mut ctx = IterationContext {
            iteration: 3,
            k: 2,
            grid_size: 16,
            dataset: &ds,
            costs: None,
            grasp: &grasp,
            rng: &mut rng,
        };
        assert!(strat.generate(&mut ctx).is_err());
    }
}
