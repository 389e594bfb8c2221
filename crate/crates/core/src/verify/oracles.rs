//! Independent oracles used by the verification suites and unit tests.
//!
//! Everything here deliberately avoids the implementation paths it is used
//! to check: gradients come from central differences, singular values from a
//! Jacobi eigensolver on `W^T W`, transport distances from permutation
//! enumeration, connectivity from plain BFS.

use crate::nn::Matrix;

/// Central finite differences of `f` at `x` with step `h`.
pub fn finite_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Largest relative error between an analytic gradient and its
/// finite-difference estimate. Denominator floors at 1e-8 so near-zero
/// entries compare absolutely.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Largest singular value via a cyclic Jacobi eigensolver on `W^T W`.
pub fn jacobi_sigma_max(w: &Matrix) -> f64 {
    let n = w.cols();
    // Gram matrix A = W^T W (symmetric PSD, n x n).
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for r in 0..w.rows() {
                s += w.get(r, i) * w.get(r, j);
            }
            a[i][j] = s;
        }
    }

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (2.0 * a[p][q]).atan2(a[q][q] - a[p][p]);
                let (s, c) = theta.sin_cos();
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }

    let lambda_max = (0..n).map(|i| a[i][i]).fold(0.0, f64::max);
    lambda_max.max(0.0).sqrt()
}

/// Exact Wasserstein-1 between two uniform distributions with the same atom
/// count, by enumerating all permutations. Usable up to ~8 atoms.
pub fn brute_force_wasserstein_uniform(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let cost: f64 = p.iter().enumerate().map(|(i, &j)| dist(&xs[i], &ys[j])).sum();
        if cost < best {
            best = cost;
        }
    });
    best / n as f64
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Number of 4-connected components among cells where `occupied` is true.
pub fn connected_components(g: usize, occupied: impl Fn(usize, usize) -> bool) -> usize {
    let mut seen = vec![false; g * g];
    let mut components = 0;
    for start in 0..g * g {
        let (r0, c0) = (start / g, start % g);
        if seen[start] || !occupied(r0, c0) {
            continue;
        }
        components += 1;
        let mut stack = vec![(r0, c0)];
        seen[start] = true;
        while let Some((r, c)) = stack.pop() {
            let mut push = |nr: usize, nc: usize, stack: &mut Vec<(usize, usize)>| {
                let idx = nr * g + nc;
                if !seen[idx] && occupied(nr, nc) {
                    seen[idx] = true;
                    stack.push((nr, nc));
                }
            };
            if r > 0 {
                push(r - 1, c, &mut stack);
            }
            if r + 1 < g {
                push(r + 1, c, &mut stack);
            }
            if c > 0 {
                push(r, c - 1, &mut stack);
            }
            if c + 1 < g {
                push(r, c + 1, &mut stack);
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_diff_of_quadratic() {
        let g = finite_diff(&[3.0, -1.0], 1e-6, |x| x[0] * x[0] + 2.0 * x[1]);
        assert!((g[0] - 6.0).abs() < 1e-6);
        assert!((g[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn jacobi_on_diagonal() {
        let mut w = Matrix::zeros(2, 2);
        w.set(0, 0, 3.0);
        w.set(1, 1, 1.0);
        assert!((jacobi_sigma_max(&w) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn brute_force_on_two_diracs() {
        let xs = vec![vec![0.0, 0.0]];
        let ys = vec![vec![3.0, 4.0]];
        assert!((brute_force_wasserstein_uniform(&xs, &ys) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn components_counts_blobs() {
        let cells = [(0usize, 0usize), (0, 1), (3, 3)];
        let n = connected_components(5, |r, c| cells.contains(&(r, c)));
        assert_eq!(n, 2);
    }
}
