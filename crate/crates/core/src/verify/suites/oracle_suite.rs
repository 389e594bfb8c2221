//! Grasp oracle properties: friction monotonicity, the cost mapping, and
//! exact quarter-turn equivariance.

use rand::Rng;

use super::{CheckResult, Suite, SuiteReport};
use crate::env::{rasterize, sample_shape, DistributionConfig, Heightmap};
use crate::error::Result;
use crate::geom::ORIENTATIONS;
use crate::grasp::{execute_grasp, sweep_cost, GraspAction, GraspConfig, FRICTION_SWEEP};
use crate::rng::{rng_for, tags};

pub struct OracleSuite;

fn random_action<R: Rng + ?Sized>(g: usize, rng: &mut R) -> GraspAction {
    GraspAction::new(
        rng.gen_range(0..g),
        rng.gen_range(0..g),
        rng.gen_range(0..ORIENTATIONS),
    )
}

impl Suite for OracleSuite {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn run(&self, seed: u64) -> Result<SuiteReport> {
        let mut report = SuiteReport::new(self.name(), seed);
        let cfg = GraspConfig::default();
        let g = 16;
        let train = DistributionConfig::default_train();
        let test = DistributionConfig::default_test();

        // friction monotonicity over 10^4 random (environment, action) pairs
        let mut rng = rng_for(seed, &[tags::VERIFY, 0xa0]);
        let mut violations = 0usize;
        for i in 0..10_000 {
            let dist = if i % 2 == 0 { &train } else { &test };
            let shape = sample_shape(dist, g, &mut rng);
            let h = rasterize(&shape, g)?;
            let action = random_action(g, &mut rng);
            let mut last = false;
            for &mu in FRICTION_SWEEP.iter() {
                let s = execute_grasp(&h, &action, mu, &cfg).success;
                if last && !s {
                    violations += 1;
                    break;
                }
                last = s;
            }
        }
        report.push(
            CheckResult::from_margin("friction_monotonicity", 10_000, violations as f64 - 0.5)
                .with_detail(format!("{violations} violations")),
        );

        // cost mapping spot checks
        let square = {
            let mut h = Heightmap::zeros(g);
            for r in 5..11 {
                for c in 5..11 {
                    h.set(r, c, 1.0);
                }
            }
            h
        };
        let low = sweep_cost(&square, &GraspAction::new(8, 8, 0), &cfg);
        let low_ok = low.value == 0.0 && low.min_success_mu == Some(0.10);

        let empty = Heightmap::zeros(g);
        let fail = sweep_cost(&empty, &GraspAction::new(8, 8, 0), &cfg);
        let fail_ok = fail.value == 1.0 && fail.min_success_mu.is_none();

        // search seeded shapes for a grasp whose first success lands at 0.30
        let mut rng = rng_for(seed, &[tags::VERIFY, 0xa1]);
        let mut mid_ok = false;
        for i in 0..20_000 {
            let dist = if i % 2 == 0 { &train } else { &test };
            let shape = sample_shape(dist, g, &mut rng);
            let h = rasterize(&shape, g)?;
            let action = random_action(g, &mut rng);
            let label = sweep_cost(&h, &action, &cfg);
            if label.min_success_mu == Some(0.30) {
                mid_ok = (label.value - 0.4).abs() < 1e-12;
                break;
            }
        }
        let mapping_ok = low_ok && fail_ok && mid_ok;
        report.push(
            CheckResult::from_margin("cost_mapping_spot_checks", 3, if mapping_ok { -1.0 } else { 1.0 })
                .with_detail(format!(
                    "mu=0.10->0.0: {low_ok}; all-fail->1.0: {fail_ok}; mu=0.30->0.4: {mid_ok}"
                )),
        );

        // exact quarter-turn equivariance on 100 shapes, all bins
        let mut rng = rng_for(seed, &[tags::VERIFY, 0xa2]);
        let mut mismatches = 0usize;
        for i in 0..100 {
            let dist = if i % 2 == 0 { &train } else { &test };
            let shape = sample_shape(dist, g, &mut rng);
            let h = rasterize(&shape, g)?;
            let rotated = h.rotated_quarter();
            for _ in 0..4 {
                let action = random_action(g, &mut rng);
                let turned = action.quarter_turned(g);
                for &mu in &[0.10, 0.30, 0.55] {
                    let a = execute_grasp(&h, &action, mu, &cfg);
                    let b = execute_grasp(&rotated, &turned, mu, &cfg);
                    if a.success != b.success || a.failure != b.failure {
                        mismatches += 1;
                    }
                }
            }
        }
        report.push(
            CheckResult::from_margin("quarter_turn_equivariance", 100, mismatches as f64 - 0.5)
                .with_detail(format!("{mismatches} mismatches")),
        );

        Ok(report)
    }
}
