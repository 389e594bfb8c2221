//! Optimal-transport exactness: the flow solver against permutation brute
//! force, metric axioms, and the three-interval ordering.

use rand::Rng;

use super::{CheckResult, Suite, SuiteReport};
use crate::error::Result;
use crate::ot::{wasserstein, DiscreteDistribution};
use crate::rng::{rng_for, tags};
use crate::verify::oracles::brute_force_wasserstein_uniform;

pub struct OtSuite;

const TOL: f64 = 1e-9;

impl Suite for OtSuite {
    fn name(&self) -> &'static str {
        "ot"
    }

    fn run(&self, seed: u64) -> Result<SuiteReport> {
        let mut report = SuiteReport::new(self.name(), seed);
        let mut rng = rng_for(seed, &[tags::VERIFY, 0x80]);

        // solver vs brute force on 200 random small uniform pairs
        let mut worst = f64::NEG_INFINITY;
        let mut marginal_worst = f64::NEG_INFINITY;
        for _ in 0..200 {
            let n = rng.gen_range(2..=6usize);
            let dim = rng.gen_range(1..=4usize);
            let sample = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
                (0..n)
                    .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
                    .collect()
            };
            let xs = sample(&mut rng);
            let ys = sample(&mut rng);
            let p = DiscreteDistribution::uniform(xs.clone())?;
            let q = DiscreteDistribution::uniform(ys.clone())?;
            let (w, plan) = wasserstein(&p, &q)?;
            let brute = brute_force_wasserstein_uniform(&xs, &ys);
            worst = worst.max((w - brute).abs());
            let m = plan.check_marginals(&p, &q, TOL);
            marginal_worst = marginal_worst.max(if m.is_ok() { -1.0 } else { 1.0 });
        }
        report.push(
            CheckResult::from_margin("solver_vs_brute_force", 200, worst - TOL)
                .with_detail(format!("worst |diff| {worst:.3e}")),
        );
        report.push(CheckResult::from_margin(
            "plan_marginals_feasible",
            200,
            marginal_worst,
        ));

        // symmetry and triangle inequality on 200 random triples
        let mut sym_worst = f64::NEG_INFINITY;
        let mut tri_worst = f64::NEG_INFINITY;
        for _ in 0..200 {
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<DiscreteDistribution> {
                let n = rng.gen_range(2..=5usize);
                DiscreteDistribution::uniform(
                    (0..n)
                        .map(|_| (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect())
                        .collect(),
                )
            };
            let p = mk(&mut rng)?;
            let q = mk(&mut rng)?;
            let r = mk(&mut rng)?;
            let (wpq, _) = wasserstein(&p, &q)?;
            let (wqp, _) = wasserstein(&q, &p)?;
            let (wqr, _) = wasserstein(&q, &r)?;
            let (wpr, _) = wasserstein(&p, &r)?;
            sym_worst = sym_worst.max((wpq - wqp).abs());
            tri_worst = tri_worst.max(wpr - (wpq + wqr));
        }
        report.push(
            CheckResult::from_margin("symmetry", 200, sym_worst - TOL)
                .with_detail(format!("worst asymmetry {sym_worst:.3e}")),
        );
        report.push(
            CheckResult::from_margin("triangle_inequality", 200, tri_worst - TOL)
                .with_detail(format!("worst violation {tri_worst:.3e}")),
        );

        // the three-interval ordering, exactly
        let d1 = DiscreteDistribution::uniform(vec![vec![0.0], vec![1.0]])?;
        let d2 = DiscreteDistribution::uniform(vec![vec![1.0], vec![2.0]])?;
        let d3 = DiscreteDistribution::uniform(vec![vec![2.0], vec![3.0]])?;
        let (w12, _) = wasserstein(&d1, &d2)?;
        let (w23, _) = wasserstein(&d2, &d3)?;
        let (w13, _) = wasserstein(&d1, &d3)?;
        let exact = w12 == 1.0 && w23 == 1.0 && w13 == 2.0 && w12 < w13;
        report.push(
            CheckResult::from_margin("three_interval_ordering", 3, if exact { -1.0 } else { 1.0 })
                .with_detail(format!("w12={w12} w23={w23} w13={w13}")),
        );

        Ok(report)
    }
}
