//! Lipschitz soundness of the cost predictor: sampled difference quotients
//! against the spectral bound, and bound convergence after training.

use rand::Rng;

use super::fixtures::trained_embedding_fixture;
use super::{CheckResult, Suite, SuiteReport};
use crate::embed::{EmbedConfig, EmbedModel};
use crate::error::Result;
use crate::rng::{rng_for, tags};

pub struct LipschitzSuite;

const PAIRS: usize = 100_000;
const QUOTIENT_TOL: f64 = 1e-9;
const GAMMA_TARGET: f64 = 0.04;
const GAMMA_TOL: f64 = 0.02;

/// Worst `|dc| - bound * |dz|` over sampled latent pairs.
fn worst_quotient_excess<R: Rng + ?Sized>(
    model: &EmbedModel,
    bound: f64,
    pairs: usize,
    rng: &mut R,
) -> f64 {
    let dim = model.latent_dim();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let z1: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let z2: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let dz: f64 = z1
            .iter()
            .zip(&z2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dz < 1e-12 {
            continue;
        }
        let dc = (model.predict_cost(&z1) - model.predict_cost(&z2)).abs();
        worst = worst.max(dc - bound * dz);
    }
    worst
}

impl Suite for LipschitzSuite {
    fn name(&self) -> &'static str {
        "lipschitz"
    }

    fn run(&self, seed: u64) -> Result<SuiteReport> {
        let mut report = SuiteReport::new(self.name(), seed);
        let cfg = EmbedConfig::default();

        // 10 random predictors
        let mut worst = f64::NEG_INFINITY;
        for i in 0..10u64 {
            let mut rng = rng_for(seed, &[tags::VERIFY, 0x70, i]);
            let model = EmbedModel::init(16, &cfg, &mut rng);
            let bound = model.lipschitz_upper_bound(cfg.power_iters_report);
            worst = worst.max(worst_quotient_excess(&model, bound, PAIRS / 10, &mut rng));
        }
        report.push(
            CheckResult::from_margin("random_predictor_quotients", 10, worst - QUOTIENT_TOL)
                .with_detail(format!("worst excess {worst:.3e}")),
        );

        // 3 trained predictors: quotients plus bound convergence to the
        // training target
        let mut worst_q = f64::NEG_INFINITY;
        let mut worst_gamma = f64::NEG_INFINITY;
        let mut gammas = Vec::new();
        for i in 0..3u64 {
            let fixture = trained_embedding_fixture(
                crate::rng::derive_seed(seed, &[tags::VERIFY, 0x71, i]),
                48,
                300,
                120,
            )?;
            let mut rng = rng_for(seed, &[tags::VERIFY, 0x72, i]);
            worst_q = worst_q.max(worst_quotient_excess(
                &fixture.model,
                fixture.gamma_bar,
                PAIRS / 3,
                &mut rng,
            ));
            worst_gamma = worst_gamma.max((fixture.gamma_bar - GAMMA_TARGET).abs());
            gammas.push(fixture.gamma_bar);
        }
        report.push(
            CheckResult::from_margin("trained_predictor_quotients", 3, worst_q - QUOTIENT_TOL)
                .with_detail(format!("worst excess {worst_q:.3e}")),
        );
        report.push(
            CheckResult::from_margin("gamma_bar_near_target", 3, worst_gamma - GAMMA_TOL)
                .with_detail(format!("gamma_bars {gammas:?}")),
        );

        Ok(report)
    }
}
