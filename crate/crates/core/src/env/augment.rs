//! Augmentation baselines: domain-randomized primitive chaining and
//! pixel-wise Gaussian noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::dist::{sample_shape, DistributionConfig};
use super::shape::{rasterize, ShapeParams};
use super::Heightmap;

/// Domain randomization: the pixel-wise max of 2-3 primitives whose bounding
/// boxes pairwise overlap by at least one pixel. 50 failed placements restart
/// the object from scratch.
pub fn generate_dr_object<R: Rng + ?Sized>(
    cfg: &DistributionConfig,
    g: usize,
    rng: &mut R,
) -> Heightmap {
    'restart: loop {
        let count = rng.gen_range(2..=3usize);
        let mut shapes: Vec<ShapeParams> = vec![sample_shape(cfg, g, rng)];
        while shapes.len() < count {
            let mut placed = false;
            for _attempt in 0..50 {
                let mut candidate = sample_shape(cfg, g, rng);
                // re-center near the first shape so overlap is plausible
                let anchor = shapes[0].center_offset;
                candidate.center_offset = (
                    anchor.0 + rng.gen_range(-2.0..2.0),
                    anchor.1 + rng.gen_range(-2.0..2.0),
                );
                if !candidate.fits(g) {
                    continue;
                }
                if shapes.iter().all(|s| bboxes_overlap(s, &candidate)) {
                    shapes.push(candidate);
                    placed = true;
                    break;
                }
            }
            if !placed {
                continue 'restart;
            }
        }

        let mut union = Heightmap::zeros(g);
        for s in &shapes {
            // fits(g) held at sampling time, so rasterize cannot fail
            let part = rasterize(s, g).expect("placed shape fits");
            for idx in 0..g * g {
                let (r, c) = (idx / g, idx % g);
                if part.get(r, c) > union.get(r, c) {
                    union.set(r, c, part.get(r, c));
                }
            }
        }
        if union.occupied_count(0.5) > 0 {
            return union;
        }
    }
}

fn bboxes_overlap(a: &ShapeParams, b: &ShapeParams) -> bool {
    let (ahx, ahy) = a.bbox_half_extents();
    let (bhx, bhy) = b.bbox_half_extents();
    let dx = (a.center_offset.0 - b.center_offset.0).abs();
    let dy = (a.center_offset.1 - b.center_offset.1).abs();
    dx <= ahx + bhx - 1.0 && dy <= ahy + bhy - 1.0
}

/// Perturbs each pixel with independent `N(0, sigma^2)` noise, clamped back
/// to `[0, 1]`.
pub fn gaussian_augment<R: Rng + ?Sized>(h: &Heightmap, sigma: f64, rng: &mut R) -> Heightmap {
    assert!(sigma >= 0.0, "noise sigma must be non-negative");
    if sigma == 0.0 {
        return h.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let g = h.grid_size();
    let mut out = Heightmap::zeros(g);
    for r in 0..g {
        for c in 0..g {
            let v = (h.get(r, c) + normal.sample(rng)).clamp(0.0, 1.0);
            out.set(r, c, v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::shape::ShapeKind;
    use crate::rng::rng_for;
    use crate::verify::oracles::connected_components;

    #[test]
    fn coincident_rectangles_union_is_idempotent() {
        let shape = ShapeParams {
            kind: ShapeKind::Rectangle {
                width: 6.0,
                height: 4.0,
            },
            rotation: 0.2,
            center_offset: (0.0, 0.0),
        };
        let one = rasterize(&shape, 16).unwrap();
        let mut union = Heightmap::zeros(16);
        for part in [&one, &one] {
            for r in 0..16 {
                for c in 0..16 {
                    if part.get(r, c) > union.get(r, c) {
                        union.set(r, c, part.get(r, c));
                    }
                }
            }
        }
        assert_eq!(one, union);
    }

    #[test]
    fn dr_union_at_least_as_large_as_parts() {
        let cfg = DistributionConfig::default_train();
        let mut rng = rng_for(100, &[3]);
        for _ in 0..20 {
            let h = generate_dr_object(&cfg, 16, &mut rng);
            // union monotonicity lower bound: the smallest default-train
            // primitive covers more than a handful of pixels
            assert!(h.occupied_count(0.5) >= 12, "{}", h.occupied_count(0.5));
        }
    }

    #[test]
    fn dr_objects_are_mostly_single_components() {
        let cfg = DistributionConfig::default_train();
        let mut rng = rng_for(2024, &[9]);
        let mut single = 0;
        for _ in 0..100 {
            let h = generate_dr_object(&cfg, 16, &mut rng);
            if connected_components(16, |r, c| h.get(r, c) >= 0.5) == 1 {
                single += 1;
            }
        }
        assert!(single >= 95, "only {single}/100 single components");
    }

    #[test]
    fn zero_noise_is_identity() {
        let h = Heightmap::new(4, vec![0.25; 16]).unwrap();
        let mut rng = rng_for(0, &[]);
        assert_eq!(gaussian_augment(&h, 0.0, &mut rng), h);
    }

    #[test]
    fn noise_keeps_range_and_half_normal_mean() {
        // interior (non-clamped) perturbation magnitude has mean
        // sigma * sqrt(2/pi)
        let g = 100; // 10^4 pixels
        let h = Heightmap::new(g, vec![0.5; g * g]).unwrap();
        let sigma = 0.05;
        let mut rng = rng_for(77, &[1]);
        let out = gaussian_augment(&h, sigma, &mut rng);
        let mut sum = 0.0;
        for r in 0..g {
            for c in 0..g {
                let v = out.get(r, c);
                assert!((0.0..=1.0).contains(&v));
                sum += (v - 0.5).abs();
            }
        }
        let mean = sum / (g * g) as f64;
        let expected = sigma * (2.0 / std::f64::consts::PI).sqrt();
        assert!(
            (mean - expected).abs() / expected <= 0.05,
            "mean {mean} vs {expected}"
        );
    }
}
