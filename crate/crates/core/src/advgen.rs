//! Latent-space adversarial environment generation.
//!
//! Gradient ascent on the predicted cost with a distance penalty
//! `lambda * |z - z0|_2`, stopped early once the predicted cost has climbed
//! by a target amount. The target is a fraction of the empirical range of
//! predicted costs over the current environment set, which adapts to the
//! Lipschitz-squeezed output range of the predictor.
//!
//! The norm penalty is handled proximally: after each cost-gradient step the
//! iterate is shrunk toward the origin `z0` by `eta * lambda`, never past
//! it. Wherever the penalty does not cross the origin this is exactly the
//! plain two-term gradient step; at the origin it avoids the oscillation a
//! fixed-magnitude restoring force would cause, so displacement is monotone
//! in `lambda`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbedModel;
use crate::env::Heightmap;
use crate::error::Result;
use crate::ot::DiscreteDistribution;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AscentConfig {
    /// Step size.
    pub eta: f64,
    /// Distance penalty weight.
    pub lambda: f64,
    /// Iteration cap per source.
    pub max_steps: usize,
    /// Target ascent as a fraction of the empirical predicted-cost range.
    pub target_fraction: f64,
    /// Distances below this are treated as zero (flat penalty).
    pub d_eps: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            eta: 0.5,
            lambda: 0.01,
            max_steps: 100,
            target_fraction: 0.1,
            d_eps: 1e-12,
        }
    }
}

/// Audit record for one ascent trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationRecord {
    /// Index of the source atom in the latent distribution, when sampled.
    pub source_index: Option<usize>,
    pub z0: Vec<f64>,
    pub z: Vec<f64>,
    pub steps: usize,
    pub cost_before: f64,
    pub cost_after: f64,
    pub target_reached: bool,
    pub displacement: f64,
    /// False when the ascent hit a non-finite iterate and returned the last
    /// finite one.
    pub finite: bool,
}

/// `max - min` of the predicted costs over the environment set.
pub fn empirical_range(model: &EmbedModel, maps: &[Heightmap]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for h in maps {
        let c = model.predict_cost(&model.encode(h));
        lo = lo.min(c);
        hi = hi.max(c);
    }
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Ascends from `z0` until the predicted cost exceeds its starting value by
/// more than `target_delta`, or `max_steps` updates have run.
pub fn ascend(
    z0: &[f64],
    model: &EmbedModel,
    cfg: &AscentConfig,
    target_delta: f64,
) -> PerturbationRecord {
    debug_assert!(target_delta >= 0.0);
    let cost_before = model.predict_cost(z0);
    let mut z = z0.to_vec();
    let mut steps = 0usize;
    let mut target_reached = false;
    let mut finite = true;

    for _ in 0..cfg.max_steps {
        let (_, grad) = model.predict_cost_grad(&z);
        let mut next: Vec<f64> = z
            .iter()
            .zip(&grad)
            .map(|(zi, gi)| zi + cfg.eta * gi)
            .collect();
        if cfg.lambda > 0.0 {
            let d = dist(&next, z0);
            if d > cfg.d_eps {
                let scale = (d - cfg.eta * cfg.lambda).max(0.0) / d;
                for (n, o) in next.iter_mut().zip(z0) {
                    *n = o + (*n - o) * scale;
                }
            }
        }
        if !next.iter().all(|v| v.is_finite()) {
            finite = false;
            break;
        }
        z = next;
        steps += 1;
        if model.predict_cost(&z) - cost_before > target_delta {
            target_reached = true;
            break;
        }
    }

    let cost_after = model.predict_cost(&z);
    let displacement = dist(&z, z0);
    PerturbationRecord {
        source_index: None,
        z0: z0.to_vec(),
        z,
        steps,
        cost_before,
        cost_after,
        target_reached,
        displacement,
        finite,
    }
}

/// One adversarially generated environment plus its audit trail.
#[derive(Debug, Clone)]
pub struct GeneratedEnv {
    pub map: Heightmap,
    pub record: PerturbationRecord,
    /// Decoded map never crosses the occupancy threshold. Still used (the
    /// policy learns it yields failure) but flagged.
    pub below_threshold: bool,
}

/// Samples `k` source latents uniformly with replacement from the current
/// latent distribution (with replacement because `k` can exceed the support
/// early on), ascends each, and decodes the results.
pub fn generate_adversarial<R: Rng + ?Sized>(
    model: &EmbedModel,
    latent_dist: &DiscreteDistribution,
    k: usize,
    cfg: &AscentConfig,
    occupancy_threshold: f64,
    rng: &mut R,
) -> Result<Vec<GeneratedEnv>> {
    let atoms = latent_dist.atoms();
    // the empirical range over S equals the range over the atoms, which are
    // exactly the encoded environments
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for a in atoms {
        let c = model.predict_cost(a);
        lo = lo.min(c);
        hi = hi.max(c);
    }
    let range = (hi - lo).max(0.0);
    let target_delta = cfg.target_fraction * range;

    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let idx = rng.gen_range(0..atoms.len());
        let mut record = ascend(&atoms[idx], model, cfg, target_delta);
        record.source_index = Some(idx);
        let map = model.decode(&record.z);
        let below_threshold = map.max_height() < occupancy_threshold;
        out.push(GeneratedEnv {
            map,
            record,
            below_threshold,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::EmbedConfig;
    use crate::nn::{Mlp, MlpSpec};
    use crate::rng::rng_for;
    use crate::verify::oracles::finite_diff;

    fn tiny_model(seed: u64) -> EmbedModel {
        let cfg = EmbedConfig {
            latent_dim: 3,
            hidden: 8,
            predictor_hidden: 4,
            ..EmbedConfig::default()
        };
        EmbedModel::init(5, &cfg, &mut rng_for(seed, &[0x7a]))
    }

    #[test]
    fn constant_predictor_is_stationary() {
        let mut model = tiny_model(1);
        model.predictor = Mlp::zeros(model.predictor.spec().clone());
        let cfg = AscentConfig::default();
        let rec = ascend(&[0.4, -0.2, 1.0], &model, &cfg, 0.05);
        assert_eq!(rec.z, vec![0.4, -0.2, 1.0]);
        assert!(!rec.target_reached);
        assert_eq!(rec.steps, cfg.max_steps);
        assert_eq!(rec.displacement, 0.0);
    }

    #[test]
    fn zero_target_stops_at_first_strict_increase() {
        let model = tiny_model(2);
        let cfg = AscentConfig {
            lambda: 0.0,
            ..AscentConfig::default()
        };
        let z0 = [0.3, 0.1, -0.5];
        let rec = ascend(&z0, &model, &cfg, 0.0);
        if rec.target_reached {
            assert_eq!(rec.steps, 1, "first strictly increasing step stops");
            assert!(rec.cost_after > rec.cost_before);
        }
    }

    #[test]
    fn unpenalized_step_matches_finite_difference_gradient() {
        let model = tiny_model(3);
        let cfg = AscentConfig {
            eta: 0.05,
            lambda: 0.0,
            max_steps: 1,
            ..AscentConfig::default()
        };
        let z0 = vec![0.2, -0.7, 0.4];
        let rec = ascend(&z0, &model, &cfg, f64::INFINITY);
        let fd = finite_diff(&z0, 1e-6, |z| model.predict_cost(z));
        for i in 0..3 {
            let moved = rec.z[i] - z0[i];
            let expected = cfg.eta * fd[i];
            let denom = moved.abs().max(expected.abs()).max(1e-12);
            assert!(
                (moved - expected).abs() / denom <= 1e-6,
                "dim {i}: {moved} vs {expected}"
            );
        }
    }

    #[test]
    fn stopping_soundness_holds_on_the_recorded_costs() {
        let model = tiny_model(4);
        let cfg = AscentConfig {
            eta: 1.0,
            lambda: 0.0,
            ..AscentConfig::default()
        };
        let target = 0.001;
        for s in 0..20 {
            let mut rng = rng_for(900 + s, &[1]);
            use rand::Rng;
            let z0: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let rec = ascend(&z0, &model, &cfg, target);
            assert_eq!(rec.cost_before, model.predict_cost(&rec.z0));
            assert_eq!(rec.cost_after, model.predict_cost(&rec.z));
            if rec.target_reached {
                assert!(rec.cost_after - rec.cost_before > target);
            }
        }
    }

    #[test]
    fn median_displacement_is_non_increasing_in_lambda() {
        let model = tiny_model(5);
        let lambdas = [0.0, 0.1, 1.0, 10.0];
        let mut medians = Vec::new();
        for &lambda in &lambdas {
            let cfg = AscentConfig {
                eta: 0.5,
                lambda,
                max_steps: 100,
                ..AscentConfig::default()
            };
            let mut disps: Vec<f64> = (0..100)
                .map(|s| {
                    let mut rng = rng_for(7000 + s, &[2]);
                    use rand::Rng;
                    let z0: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    ascend(&z0, &model, &cfg, f64::INFINITY).displacement
                })
                .collect();
            disps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians.push(disps[disps.len() / 2]);
        }
        for w in medians.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "medians {medians:?}");
        }
    }

    #[test]
    fn generate_zero_is_empty_and_records_link_sources() {
        let model = tiny_model(6);
        let atoms: Vec<Vec<f64>> = (0..4)
            .map(|i| vec![i as f64 * 0.1, 0.0, -0.2])
            .collect();
        let dist = DiscreteDistribution::uniform(atoms).unwrap();
        let cfg = AscentConfig::default();
        let mut rng = rng_for(8, &[3]);
        let none = generate_adversarial(&model, &dist, 0, &cfg, 0.25, &mut rng).unwrap();
        assert!(none.is_empty());
        let some = generate_adversarial(&model, &dist, 5, &cfg, 0.25, &mut rng).unwrap();
        assert_eq!(some.len(), 5);
        for env in &some {
            assert!(env.record.source_index.is_some());
            assert_eq!(env.map.grid_size(), 5);
        }
    }
}
