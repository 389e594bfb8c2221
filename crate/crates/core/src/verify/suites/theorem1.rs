//! Wasserstein-ball robustness bound: in-ball candidate distributions never
//! exceed the certified worst-case expected predicted cost.

use rand::Rng;

use super::fixtures::trained_embedding_fixture;
use super::{CheckResult, Suite, SuiteReport};
use crate::advgen::{ascend, AscentConfig};
use crate::embed::build_latent_distribution;
use crate::error::Result;
use crate::ot::{verify_theorem1, DiscreteDistribution};
use crate::rng::{derive_seed, rng_for, tags};

pub struct Theorem1Suite;

const RHOS: [f64; 4] = [0.0, 0.5, 1.0, 2.0];
const RANDOM_TRIALS: usize = 900;
const ASCENDED_TRIALS: usize = 100;
const TOL: f64 = 1e-9;

impl Suite for Theorem1Suite {
    fn name(&self) -> &'static str {
        "theorem1"
    }

    fn run(&self, seed: u64) -> Result<SuiteReport> {
        let mut report = SuiteReport::new(self.name(), seed);

        for f in 0..2u64 {
            let fixture = trained_embedding_fixture(
                derive_seed(seed, &[tags::VERIFY, 0x90, f]),
                48,
                300,
                120,
            )?;
            let p0 = build_latent_distribution(&fixture.model, &fixture.maps)?;
            let gamma = fixture.gamma_bar;

            // adversarial directions: ascend every atom without a penalty,
            // then scale the displacement field into the ball
            let ascent = AscentConfig {
                eta: 0.5,
                lambda: 0.0,
                max_steps: 60,
                target_fraction: 1.0,
                d_eps: 1e-12,
            };
            let ascended: Vec<Vec<f64>> = p0
                .atoms()
                .iter()
                .map(|z0| ascend(z0, &fixture.model, &ascent, f64::INFINITY).z)
                .collect();
            let mean_disp: f64 = p0
                .atoms()
                .iter()
                .zip(&ascended)
                .map(|(a, b)| {
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum::<f64>()
                / p0.len() as f64;

            for &rho in &RHOS {
                let mut rng = rng_for(seed, &[tags::VERIFY, 0x91, f, rho.to_bits()]);
                // candidates along the ascended directions, scaled so the
                // identity coupling stays inside the ball
                let mut extra = Vec::with_capacity(ASCENDED_TRIALS);
                for _ in 0..ASCENDED_TRIALS {
                    let scale = if mean_disp > 0.0 {
                        rho * rng.gen_range(0.0..0.95) / mean_disp
                    } else {
                        0.0
                    };
                    let atoms: Vec<Vec<f64>> = p0
                        .atoms()
                        .iter()
                        .zip(&ascended)
                        .map(|(a, b)| {
                            a.iter()
                                .zip(b)
                                .map(|(x, y)| x + (y - x) * scale)
                                .collect()
                        })
                        .collect();
                    extra.push(DiscreteDistribution::new(atoms, p0.weights().to_vec())?);
                }

                let model = &fixture.model;
                let result = verify_theorem1(
                    &p0,
                    |z| model.predict_cost(z),
                    gamma,
                    rho,
                    RANDOM_TRIALS,
                    &extra,
                    &mut rng,
                )?;
                let name = format!("fixture{f}_rho_{rho}");
                report.push(
                    CheckResult::from_margin(
                        &name,
                        result.candidates,
                        result.worst_margin - TOL,
                    )
                    .with_detail(format!(
                        "in_ball={} outside={} violations={} bound={:.4} gamma={:.4}",
                        result.in_ball,
                        result.outside_ball,
                        result.violations,
                        result.certified_bound,
                        gamma
                    )),
                );
            }
        }
        Ok(report)
    }
}
