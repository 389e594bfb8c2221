//! Gradient fidelity: analytic gradients against central finite differences.

use rand::Rng;

use super::{CheckResult, Suite, SuiteReport};
use crate::embed::{embedding_loss, EmbedConfig, EmbedModel};
use crate::env::Heightmap;
use crate::error::Result;
use crate::nn::{Activation, Mlp, MlpSpec};
use crate::rng::{rng_for, tags};
use crate::verify::oracles::{finite_diff, max_rel_error};

pub struct GradCheckSuite;

const MLP_TOL: f64 = 1e-5;
const JOINT_TOL: f64 = 1e-4;

impl Suite for GradCheckSuite {
    fn name(&self) -> &'static str {
        "gradcheck"
    }

    fn run(&self, seed: u64) -> Result<SuiteReport> {
        let mut report = SuiteReport::new(self.name(), seed);

        // (a) plain MLP losses, 20 seeded fixtures
        let mut worst = f64::NEG_INFINITY;
        let acts = [Activation::Sigmoid, Activation::Relu, Activation::Identity];
        for i in 0..20u64 {
            let mut rng = rng_for(seed, &[tags::VERIFY, 0x61, i]);
            let depth = rng.gen_range(1..=3usize);
            let mut widths = vec![rng.gen_range(2..=5usize)];
            for _ in 0..depth {
                widths.push(rng.gen_range(2..=6usize));
            }
            let activations: Vec<Activation> =
                (0..depth).map(|_| acts[rng.gen_range(0..acts.len())]).collect();
            let mlp = Mlp::init(MlpSpec::new(widths.clone(), activations)?, &mut rng);
            let x: Vec<f64> = (0..widths[0]).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let target: Vec<f64> = (0..*widths.last().unwrap())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();

            let (y, cache) = mlp.forward(&x)?;
            let grad_out: Vec<f64> = y.iter().zip(&target).map(|(a, b)| a - b).collect();
            let (grads, _) = mlp.backward(&cache, &grad_out)?;
            let mut analytic = Vec::new();
            for l in 0..grads.weights.len() {
                analytic.extend_from_slice(grads.weights[l].data());
                analytic.extend_from_slice(&grads.biases[l]);
            }
            let mut flat = Vec::new();
            mlp.write_params(&mut flat);
            let numeric = finite_diff(&flat, 1e-6, |p| {
                let mut m = mlp.clone();
                m.read_params(p).unwrap();
                let y = m.eval(&x).unwrap();
                0.5 * y
                    .iter()
                    .zip(&target)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            });
            worst = worst.max(max_rel_error(&analytic, &numeric));
        }
        report.push(
            CheckResult::from_margin("mlp_losses_fd", 20, worst - MLP_TOL)
                .with_detail(format!("max rel err {worst:.3e} vs tol {MLP_TOL:.0e}")),
        );

        // (b) the full four-term joint loss, 8 seeded fixtures
        let mut worst = f64::NEG_INFINITY;
        for i in 0..8u64 {
            let mut rng = rng_for(seed, &[tags::VERIFY, 0x62, i]);
            let g = rng.gen_range(4..=6usize);
            let cfg = EmbedConfig {
                latent_dim: rng.gen_range(2..=4usize),
                hidden: rng.gen_range(4..=8usize),
                predictor_hidden: rng.gen_range(3..=5usize),
                ..EmbedConfig::default()
            };
            let model = EmbedModel::init(g, &cfg, &mut rng);
            let maps: Vec<Heightmap> = (0..3)
                .map(|_| {
                    let data = (0..g * g).map(|_| rng.gen_range(0.0..1.0)).collect();
                    Heightmap::new(g, data).unwrap()
                })
                .collect();
            let costs: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let batch: Vec<(&Heightmap, f64)> =
                maps.iter().zip(costs.iter().copied()).collect();

            let (_, grads) = embedding_loss(&model, &batch, &cfg, 100, None)?;
            let mut analytic = Vec::new();
            for part in [&grads.encoder, &grads.decoder, &grads.predictor] {
                for l in 0..part.weights.len() {
                    analytic.extend_from_slice(part.weights[l].data());
                    analytic.extend_from_slice(&part.biases[l]);
                }
            }
            let mut flat = Vec::new();
            model.encoder.write_params(&mut flat);
            model.decoder.write_params(&mut flat);
            model.predictor.write_params(&mut flat);
            let numeric = finite_diff(&flat, 1e-6, |p| {
                let mut m = model.clone();
                let a = m.encoder.read_params(p).unwrap();
                let b = m.decoder.read_params(&p[a..]).unwrap();
                m.predictor.read_params(&p[a + b..]).unwrap();
                let batch: Vec<(&Heightmap, f64)> =
                    maps.iter().zip(costs.iter().copied()).collect();
                embedding_loss(&m, &batch, &cfg, 100, None).unwrap().0.total
            });
            worst = worst.max(max_rel_error(&analytic, &numeric));
        }
        report.push(
            CheckResult::from_margin("joint_embedding_loss_fd", 8, worst - JOINT_TOL)
                .with_detail(format!("max rel err {worst:.3e} vs tol {JOINT_TOL:.0e}")),
        );

        Ok(report)
    }
}
