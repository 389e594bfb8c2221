//! Largest singular value by power iteration.
//!
//! The returned `(u, v)` pair doubles as the gradient of sigma with respect
//! to the matrix (`d sigma / dW = u v^T`), which is what the Lipschitz
//! penalty of the embedding loss differentiates through. Training uses few
//! iterations with a warm-started `u`; certified/report values use 100.

use super::Matrix;

#[derive(Debug, Clone)]
pub struct SpectralNorm {
    pub sigma: f64,
    /// Left singular vector estimate (length = rows).
    pub u: Vec<f64>,
    /// Right singular vector estimate (length = cols).
    pub v: Vec<f64>,
    /// Set when the matrix is identically zero.
    pub zero: bool,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = norm(x);
    if n > 0.0 {
        for v in x.iter_mut() {
            *v /= n;
        }
    }
    n
}

/// Cold-start power iteration (uniform initial `u`).
pub fn spectral_norm(w: &Matrix, iters: usize) -> SpectralNorm {
    spectral_norm_warm(w, iters, None)
}

/// Power iteration with an optional warm-started left vector.
///
/// One iteration is the pair of updates `v <- normalize(W^T u)`,
/// `u <- normalize(W v)`; the sigma estimate `u^T W v` is non-decreasing in
/// the iteration count (each half-step maximizes the bilinear form in one
/// argument).
pub fn spectral_norm_warm(w: &Matrix, iters: usize, warm_u: Option<&[f64]>) -> SpectralNorm {
    assert!(iters >= 1, "power iteration needs at least one iteration");
    let (rows, cols) = (w.rows(), w.cols());

    if w.data().iter().all(|&x| x == 0.0) {
        return SpectralNorm {
            sigma: 0.0,
            u: vec![0.0; rows],
            v: vec![0.0; cols],
            zero: true,
        };
    }

    let mut u = match warm_u {
        Some(warm) if warm.len() == rows && norm(warm) > 0.0 => warm.to_vec(),
        _ => vec![1.0 / (rows as f64).sqrt(); rows],
    };
    normalize(&mut u);
    let mut v = vec![0.0; cols];

    for _ in 0..iters {
        w.matvec_t(&u, &mut v);
        if normalize(&mut v) == 0.0 {
            // u landed in the left null space; restart from the row with the
            // largest norm, which cannot be annihilated.
            let best = (0..rows)
                .max_by(|&a, &b| {
                    let na: f64 = (0..cols).map(|c| w.get(a, c).powi(2)).sum();
                    let nb: f64 = (0..cols).map(|c| w.get(b, c).powi(2)).sum();
                    na.partial_cmp(&nb).unwrap()
                })
                .unwrap();
            u.fill(0.0);
            u[best] = 1.0;
            w.matvec_t(&u, &mut v);
            normalize(&mut v);
        }
        w.matvec(&v, &mut u);
        normalize(&mut u);
    }

    let sigma = w.bilinear(&u, &v);
    SpectralNorm {
        sigma,
        u,
        v,
        zero: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use crate::verify::oracles::jacobi_sigma_max;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rng_for(seed, &[0x5e]);
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        m
    }

    #[test]
    fn identity_has_sigma_one() {
        let mut m = Matrix::zeros(2, 2);
        m.set(0, 0, 1.0);
        m.set(1, 1, 1.0);
        let s = spectral_norm(&m, 20);
        assert!((s.sigma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_takes_largest_entry() {
        let mut m = Matrix::zeros(2, 2);
        m.set(0, 0, 3.0);
        m.set(1, 1, 1.0);
        let s = spectral_norm(&m, 50);
        assert!((s.sigma - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_is_flagged() {
        let m = Matrix::zeros(3, 4);
        let s = spectral_norm(&m, 5);
        assert!(s.zero);
        assert_eq!(s.sigma, 0.0);
    }

    #[test]
    fn matches_jacobi_eigensolver_on_random_matrix() {
        let m = random_matrix(5, 7, 314);
        let s = spectral_norm(&m, 100);
        let oracle = jacobi_sigma_max(&m);
        assert!(
            (s.sigma - oracle).abs() / oracle <= 1e-8,
            "power {} vs jacobi {}",
            s.sigma,
            oracle
        );
    }

    #[test]
    fn sigma_is_monotone_in_iteration_count() {
        let m = random_matrix(6, 6, 2718);
        let mut last = 0.0;
        for iters in 1..40 {
            let s = spectral_norm(&m, iters);
            assert!(
                s.sigma >= last - 1e-12,
                "sigma decreased at {iters}: {} -> {}",
                last,
                s.sigma
            );
            last = s.sigma;
        }
    }

    #[test]
    fn invariant_under_transpose() {
        for seed in 0..5 {
            let m = random_matrix(4, 9, 100 + seed);
            let a = spectral_norm(&m, 500).sigma;
            let b = spectral_norm(&m.transpose(), 500).sigma;
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn singular_pair_is_consistent() {
        // sigma * u should equal W v at convergence.
        let m = random_matrix(5, 5, 77);
        let s = spectral_norm(&m, 200);
        let mut wv = vec![0.0; 5];
        m.matvec(&s.v, &mut wv);
        for (wvi, ui) in wv.iter().zip(&s.u) {
            assert!((wvi - s.sigma * ui).abs() < 1e-8);
        }
    }
}
