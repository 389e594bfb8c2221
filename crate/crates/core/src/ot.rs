//! Exact discrete Wasserstein-1 distance and the robustness-bound checks
//! built on it.
//!
//! The solver runs successive shortest augmenting paths on the bipartite
//! transport graph with integer supplies: uniform weight vectors are scaled
//! exactly by `lcm(m, n)`, anything else is apportioned to a `2^32` grid
//! (largest-remainder rounding, error ~2e-10, well inside every tolerance
//! used here). Ground metric is Euclidean distance between atoms.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Finite set of weighted atoms in latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::usage("distribution needs at least one atom"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::usage("atom/weight count mismatch"));
        }
        let dim = atoms[0].len();
        if atoms.iter().any(|a| a.len() != dim) {
            return Err(Error::usage("atoms must share one dimension"));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::usage("weights must be positive and finite"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::usage(format!("weights must sum to 1, got {sum}")));
        }
        Ok(DiscreteDistribution { atoms, weights })
    }

    /// Uniform weights `1/M` over the given atoms.
    pub fn uniform(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let m = atoms.len();
        if m == 0 {
            return Err(Error::usage("distribution needs at least one atom"));
        }
        let w = 1.0 / m as f64;
        DiscreteDistribution::new(atoms, vec![w; m])
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w * f(a))
            .sum()
    }

    fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|&x| (x - w).abs() <= 1e-12)
    }
}

/// Optimal coupling as sparse flows `(source atom, target atom, mass)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportPlan {
    pub flows: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

impl TransportPlan {
    /// Checks that the plan's marginals reproduce the input weights.
    pub fn check_marginals(
        &self,
        p: &DiscreteDistribution,
        q: &DiscreteDistribution,
        tol: f64,
    ) -> Result<()> {
        let mut row = vec![0.0; p.len()];
        let mut col = vec![0.0; q.len()];
        for &(i, j, mass) in &self.flows {
            if mass < 0.0 {
                return Err(Error::numeric("negative flow in transport plan"));
            }
            row[i] += mass;
            col[j] += mass;
        }
        for (got, want) in row.iter().zip(p.weights()) {
            if (got - want).abs() > tol {
                return Err(Error::numeric(format!(
                    "source marginal off by {}",
                    (got - want).abs()
                )));
            }
        }
        for (got, want) in col.iter().zip(q.weights()) {
            if (got - want).abs() > tol {
                return Err(Error::numeric(format!(
                    "target marginal off by {}",
                    (got - want).abs()
                )));
            }
        }
        Ok(())
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Integer supplies for a weight vector, summing exactly to `scale`.
fn apportion(weights: &[f64], scale: u64) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::with_capacity(weights.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(weights.len());
    let mut assigned: u64 = 0;
    for (i, &w) in weights.iter().enumerate() {
        let ideal = w * scale as f64;
        let base = ideal.floor() as u64;
        out.push(base);
        assigned += base;
        remainders.push((ideal - base as f64, i));
    }
    let mut left = scale.saturating_sub(assigned);
    // largest remainders first; ties by index for determinism
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

struct FlowEdge {
    to: usize,
    residual: u64,
    cost: f64,
}

struct FlowGraph {
    edges: Vec<FlowEdge>,
    adj: Vec<Vec<usize>>,
}

impl FlowGraph {
    fn new(nodes: usize) -> Self {
        FlowGraph {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: u64, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(FlowEdge {
            to,
            residual: cap,
            cost,
        });
        self.edges.push(FlowEdge {
            to: from,
            residual: 0,
            cost: -cost,
        });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapKey(f64);
impl Eq for HeapKey {}
impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.partial_cmp(&other.0).expect("finite distances")
    }
}

/// Exact Wasserstein-1 distance and an optimal transport plan.
pub fn wasserstein(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
) -> Result<(f64, TransportPlan)> {
    if p.dim() != q.dim() {
        return Err(Error::usage(format!(
            "atom dimension mismatch: {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    let (m, n) = (p.len(), q.len());

    let (supplies, demands, scale) = if p.is_uniform() && q.is_uniform() {
        let l = m as u64 / gcd(m as u64, n as u64) * n as u64;
        (
            vec![l / m as u64; m],
            vec![l / n as u64; n],
            l,
        )
    } else {
        let scale: u64 = 1 << 32;
        (
            apportion(p.weights(), scale),
            apportion(q.weights(), scale),
            scale,
        )
    };

    // nodes: sources 0..m, sinks m..m+n, super source, super sink
    let s = m + n;
    let t = m + n + 1;
    let mut graph = FlowGraph::new(m + n + 2);
    for (i, &sup) in supplies.iter().enumerate() {
        graph.add(s, i, sup, 0.0);
    }
    let mut middle = vec![vec![0usize; n]; m];
    for i in 0..m {
        for j in 0..n {
            middle[i][j] = graph.add(i, m + j, u64::MAX / 4, euclidean(&p.atoms[i], &q.atoms[j]));
        }
    }
    for (j, &dem) in demands.iter().enumerate() {
        graph.add(m + j, t, dem, 0.0);
    }

    min_cost_flow(&mut graph, s, t, scale)?;

    let inv_scale = 1.0 / scale as f64;
    let mut flows = Vec::new();
    let mut cost = 0.0;
    for (i, row) in middle.iter().enumerate() {
        for (j, &eid) in row.iter().enumerate() {
            let sent = graph.edges[eid + 1].residual; // reverse edge holds the flow
            if sent > 0 {
                let mass = sent as f64 * inv_scale;
                cost += mass * graph.edges[eid].cost;
                flows.push((i, j, mass));
            }
        }
    }
    Ok((cost, TransportPlan { flows, cost }))
}

/// Successive shortest augmenting paths with Johnson potentials. All original
/// costs are non-negative so potentials start at zero; reduced costs are
/// clamped at zero to absorb float round-off.
fn min_cost_flow(graph: &mut FlowGraph, s: usize, t: usize, mut needed: u64) -> Result<()> {
    let nodes = graph.adj.len();
    let mut potential = vec![0.0; nodes];
    while needed > 0 {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut parent: Vec<Option<usize>> = vec![None; nodes];
        let mut heap: BinaryHeap<Reverse<(HeapKey, usize)>> = BinaryHeap::new();
        dist[s] = 0.0;
        heap.push(Reverse((HeapKey(0.0), s)));
        while let Some(Reverse((HeapKey(d), u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &eid in &graph.adj[u] {
                let e = &graph.edges[eid];
                if e.residual == 0 {
                    continue;
                }
                let reduced = (e.cost + potential[u] - potential[e.to]).max(0.0);
                let nd = d + reduced;
                if nd < dist[e.to] {
                    dist[e.to] = nd;
                    parent[e.to] = Some(eid);
                    heap.push(Reverse((HeapKey(nd), e.to)));
                }
            }
        }
        if parent[t].is_none() {
            return Err(Error::numeric(
                "transport network disconnected before all mass was routed",
            ));
        }
        for v in 0..nodes {
            if dist[v].is_finite() {
                potential[v] += dist[v];
            }
        }
        // bottleneck along the augmenting path
        let mut bottleneck = needed;
        let mut v = t;
        while v != s {
            let eid = parent[v].expect("path reaches source");
            bottleneck = bottleneck.min(graph.edges[eid].residual);
            v = graph.edges[eid ^ 1].to;
        }
        let mut v = t;
        while v != s {
            let eid = parent[v].expect("path reaches source");
            graph.edges[eid].residual -= bottleneck;
            graph.edges[eid ^ 1].residual += bottleneck;
            v = graph.edges[eid ^ 1].to;
        }
        needed -= bottleneck;
    }
    Ok(())
}

/// Kantorovich-Rubinstein margin report: for a `gamma`-Lipschitz predictor,
/// `|E_P[f] - E_Q[f]| <= gamma * W(P, Q)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KrReport {
    pub gap: f64,
    pub wasserstein: f64,
    pub bound: f64,
    pub slack: f64,
}

pub fn kr_check(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    predict: impl Fn(&[f64]) -> f64,
    gamma_bar: f64,
) -> Result<KrReport> {
    let (w, _) = wasserstein(p, q)?;
    let gap = (p.expectation(&predict) - q.expectation(&predict)).abs();
    let bound = gamma_bar * w;
    Ok(KrReport {
        gap,
        wasserstein: w,
        bound,
        slack: bound - gap,
    })
}

/// `E_P0[f] + gamma_bar * rho`, the certified worst-case expected predicted
/// cost over the Wasserstein ball of radius `rho`.
pub fn certified_bound(mean_cost: f64, gamma_bar: f64, rho: f64) -> f64 {
    mean_cost + gamma_bar * rho
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub rho: f64,
    pub candidates: usize,
    pub in_ball: usize,
    pub outside_ball: usize,
    pub violations: usize,
    /// Largest `E_cand - certified_bound` seen among in-ball candidates.
    pub worst_margin: f64,
    pub certified_bound: f64,
}

/// Stress-tests the robustness bound: perturbs the atoms of `p0` into random
/// in-ball candidates (plus any caller-provided candidates, e.g.
/// adversarially ascended ones), confirms ball membership with the exact
/// solver, and checks every member against the certified bound.
pub fn verify_theorem1<R: Rng + ?Sized>(
    p0: &DiscreteDistribution,
    predict: impl Fn(&[f64]) -> f64,
    gamma_bar: f64,
    rho: f64,
    trials: usize,
    extra_candidates: &[DiscreteDistribution],
    rng: &mut R,
) -> Result<Theorem1Report> {
    if rho < 0.0 {
        return Err(Error::usage("rho must be >= 0"));
    }
    let base_mean = p0.expectation(&predict);
    let bound = certified_bound(base_mean, gamma_bar, rho);

    let mut report = Theorem1Report {
        rho,
        candidates: 0,
        in_ball: 0,
        outside_ball: 0,
        violations: 0,
        worst_margin: f64::NEG_INFINITY,
        certified_bound: bound,
    };

    let check = |cand: &DiscreteDistribution, report: &mut Theorem1Report| -> Result<()> {
        report.candidates += 1;
        let (w, _) = wasserstein(p0, cand)?;
        if w > rho + 1e-12 {
            report.outside_ball += 1;
            return Ok(());
        }
        report.in_ball += 1;
        let margin = cand.expectation(&predict) - bound;
        report.worst_margin = report.worst_margin.max(margin);
        if margin > 1e-9 {
            report.violations += 1;
        }
        Ok(())
    };

    for _ in 0..trials {
        let cand = perturb_within_ball(p0, rho, rng);
        check(&cand, &mut report)?;
    }
    for cand in extra_candidates {
        check(cand, &mut report)?;
    }
    Ok(report)
}

/// Random candidate whose identity-coupling cost is at most `rho`: per-atom
/// displacement magnitudes drawn from `U[0, rho]`, rescaled so the mean
/// displacement is `rho * U[0.5, 1.0]`.
pub fn perturb_within_ball<R: Rng + ?Sized>(
    p0: &DiscreteDistribution,
    rho: f64,
    rng: &mut R,
) -> DiscreteDistribution {
    let dim = p0.dim();
    let m = p0.len();
    let mut magnitudes: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..=rho)).collect();
    let mean: f64 = magnitudes.iter().sum::<f64>() / m as f64;
    if mean > 0.0 {
        let target = rho * rng.gen_range(0.5..1.0);
        let s = target / mean;
        for v in &mut magnitudes {
            *v *= s;
        }
    }
    let atoms = p0
        .atoms()
        .iter()
        .zip(&magnitudes)
        .map(|(a, &mag)| {
            let mut dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for d in &mut dir {
                    *d *= mag / norm;
                }
            }
            a.iter().zip(&dir).map(|(x, d)| x + d).collect()
        })
        .collect();
    DiscreteDistribution::new(atoms, p0.weights().to_vec()).expect("weights preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use crate::verify::oracles::brute_force_wasserstein_uniform;

    fn dirac(points: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::uniform(points.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    #[test]
    fn identical_distributions_have_zero_distance() {
        let p = dirac(&[0.3, 1.7, -2.0]);
        let (w, plan) = wasserstein(&p, &p).unwrap();
        assert!(w.abs() <= 1e-15, "{w}");
        plan.check_marginals(&p, &p, 1e-9).unwrap();
    }

    #[test]
    fn two_diracs_give_euclidean_distance() {
        let p = DiscreteDistribution::uniform(vec![vec![0.0, 0.0]]).unwrap();
        let q = DiscreteDistribution::uniform(vec![vec![3.0, 4.0]]).unwrap();
        let (w, _) = wasserstein(&p, &q).unwrap();
        assert!((w - 5.0).abs() <= 1e-12);
    }

    #[test]
    fn three_interval_ordering() {
        let p1 = dirac(&[0.0, 1.0]);
        let p2 = dirac(&[1.0, 2.0]);
        let p3 = dirac(&[2.0, 3.0]);
        let (w12, _) = wasserstein(&p1, &p2).unwrap();
        let (w23, _) = wasserstein(&p2, &p3).unwrap();
        let (w13, _) = wasserstein(&p1, &p3).unwrap();
        assert_eq!(w12, 1.0);
        assert_eq!(w23, 1.0);
        assert_eq!(w13, 2.0);
        assert!(w12 < w13);
    }

    #[test]
    fn matches_permutation_brute_force() {
        let mut rng = rng_for(123, &[0xa]);
        use rand::Rng;
        for trial in 0..50 {
            let n = rng.gen_range(2..=6);
            let dim = rng.gen_range(1..=3);
            let sample = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
                (0..n)
                    .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
                    .collect()
            };
            let xs = sample(&mut rng);
            let ys = sample(&mut rng);
            let p = DiscreteDistribution::uniform(xs.clone()).unwrap();
            let q = DiscreteDistribution::uniform(ys.clone()).unwrap();
            let (w, plan) = wasserstein(&p, &q).unwrap();
            let brute = brute_force_wasserstein_uniform(&xs, &ys);
            assert!(
                (w - brute).abs() <= 1e-9,
                "trial {trial}: solver {w} vs brute {brute}"
            );
            plan.check_marginals(&p, &q, 1e-9).unwrap();
        }
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        let mut rng = rng_for(321, &[0xb]);
        use rand::Rng;
        for _ in 0..30 {
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                let n = rng.gen_range(2..=5);
                DiscreteDistribution::uniform(
                    (0..n)
                        .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
                        .collect(),
                )
                .unwrap()
            };
            let (p, q, r) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
            let (wpq, _) = wasserstein(&p, &q).unwrap();
            let (wqp, _) = wasserstein(&q, &p).unwrap();
            let (wqr, _) = wasserstein(&q, &r).unwrap();
            let (wpr, _) = wasserstein(&p, &r).unwrap();
            assert!((wpq - wqp).abs() <= 1e-9, "symmetry");
            assert!(wpr <= wpq + wqr + 1e-9, "triangle");
        }
    }

    #[test]
    fn non_uniform_weights_route_all_mass() {
        let p = DiscreteDistribution::new(vec![vec![0.0], vec![1.0]], vec![0.25, 0.75]).unwrap();
        let q = DiscreteDistribution::new(vec![vec![2.0]], vec![1.0]).unwrap();
        let (w, plan) = wasserstein(&p, &q).unwrap();
        // 0.25 * 2 + 0.75 * 1 = 1.25
        assert!((w - 1.25).abs() <= 1e-8, "{w}");
        plan.check_marginals(&p, &q, 1e-8).unwrap();
    }

    #[test]
    fn dimension_mismatch_is_a_usage_error() {
        let p = DiscreteDistribution::uniform(vec![vec![0.0]]).unwrap();
        let q = DiscreteDistribution::uniform(vec![vec![0.0, 1.0]]).unwrap();
        assert!(wasserstein(&p, &q).is_err());
    }

    #[test]
    fn kr_slack_is_nonnegative_for_lipschitz_functions() {
        // f(x) = 0.05 * x[0] is 0.05-Lipschitz
        let mut rng = rng_for(9, &[0xc]);
        use rand::Rng;
        for _ in 0..100 {
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                DiscreteDistribution::uniform(
                    (0..4)
                        .map(|_| vec![rng.gen_range(-3.0..3.0)])
                        .collect(),
                )
                .unwrap()
            };
            let (p, q) = (mk(&mut rng), mk(&mut rng));
            let report = kr_check(&p, &q, |z| 0.05 * z[0], 0.05).unwrap();
            assert!(report.slack >= -1e-9, "slack {}", report.slack);
        }
    }

    #[test]
    fn theorem1_certified_bound_arithmetic() {
        assert!((certified_bound(0.5, 0.04, 2.0) - 0.58).abs() < 1e-15);
    }

    #[test]
    fn theorem1_rho_zero_degenerates_to_equality() {
        let p0 = dirac(&[0.0, 1.0, 2.0]);
        let mut rng = rng_for(5, &[0xd]);
        let predict = |z: &[f64]| 0.02 * z[0] + 0.5;
        let report = verify_theorem1(&p0, predict, 0.04, 0.0, 50, &[], &mut rng).unwrap();
        assert_eq!(report.violations, 0);
        assert_eq!(report.in_ball, 50);
        assert!(report.worst_margin.abs() <= 1e-12);
    }

    #[test]
    fn theorem1_random_candidates_never_violate() {
        // a genuinely 0.04-Lipschitz predictor
        let predict = |z: &[f64]| 0.5 + 0.04 * (z[0].powi(2) + z[1].powi(2)).sqrt().tanh();
        let mut rng = rng_for(6, &[0xe]);
        use rand::Rng;
        let atoms: Vec<Vec<f64>> = (0..20)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let p0 = DiscreteDistribution::uniform(atoms).unwrap();
        for &rho in &[0.5, 1.0, 2.0] {
            let report = verify_theorem1(&p0, predict, 0.04, rho, 100, &[], &mut rng).unwrap();
            assert_eq!(report.violations, 0, "rho {rho}: {report:?}");
            assert_eq!(report.outside_ball, 0);
        }
    }
}
