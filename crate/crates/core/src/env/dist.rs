//! Shape parameter distributions for the train/test splits.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::shape::{ShapeKind, ShapeParams};
use crate::error::{Error, Result};

/// Closed uniform range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..self.hi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitLabel {
    Train,
    Test,
}

/// Per-kind uniform parameter ranges plus the kind mixture.
///
/// The concrete defaults are experiment scaffolding and live in config files;
/// the only hard requirement (validated by [`DistributionConfig::check_shift`])
/// is that the train and test configs actually differ so the test split is
/// out-of-distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionConfig {
    pub label: SplitLabel,
    pub rect_width: Range,
    pub rect_height: Range,
    pub ellipse_a: Range,
    pub ellipse_b: Range,
    pub tri_base: Range,
    pub tri_height: Range,
    /// Mixture weights for rectangle / ellipse / triangle; must sum to 1.
    pub kind_weights: [f64; 3],
    /// Center offset drawn uniformly from `[-jitter, +jitter]` per axis.
    pub center_jitter: f64,
}

impl DistributionConfig {
    /// The low ends of the size ranges already demand some grasp precision,
    /// so the within-family difficulty axis points the same way as the
    /// train-to-test shift (thinner, more acute).
    pub fn default_train() -> Self {
        DistributionConfig {
            label: SplitLabel::Train,
            rect_width: Range::new(3.5, 8.0),
            rect_height: Range::new(4.0, 8.0),
            ellipse_a: Range::new(2.0, 4.5),
            ellipse_b: Range::new(2.5, 4.5),
            tri_base: Range::new(4.5, 9.0),
            tri_height: Range::new(5.0, 9.0),
            kind_weights: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            center_jitter: 0.75,
        }
    }

    /// Thin/elongated rectangles and ellipses, acute triangles: the shift
    /// continues the train family's difficulty axis just past its support
    /// edge.
    pub fn default_test() -> Self {
        DistributionConfig {
            label: SplitLabel::Test,
            rect_width: Range::new(2.8, 3.8),
            rect_height: Range::new(6.5, 9.5),
            ellipse_a: Range::new(1.7, 2.2),
            ellipse_b: Range::new(4.0, 5.5),
            tri_base: Range::new(3.8, 4.8),
            tri_height: Range::new(7.5, 10.0),
            kind_weights: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            center_jitter: 0.75,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("rect_width", self.rect_width),
            ("rect_height", self.rect_height),
            ("ellipse_a", self.ellipse_a),
            ("ellipse_b", self.ellipse_b),
            ("tri_base", self.tri_base),
            ("tri_height", self.tri_height),
        ];
        for (name, r) in ranges {
            if !(r.lo.is_finite() && r.hi.is_finite()) || r.lo > r.hi {
                return Err(Error::config(format!("{name}: invalid range {r:?}")));
            }
            if r.lo <= 1.0 {
                return Err(Error::config(format!(
                    "{name}: size parameters must stay above 1 pixel (lo={})",
                    r.lo
                )));
            }
        }
        if self.kind_weights.iter().any(|&w| w < 0.0) {
            return Err(Error::config("kind weights must be non-negative"));
        }
        let sum: f64 = self.kind_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "kind weights must sum to 1, got {sum}"
            )));
        }
        if !(self.center_jitter >= 0.0) {
            return Err(Error::config("center_jitter must be >= 0"));
        }
        Ok(())
    }

    /// Ranges of one kind, `(first, second)` size parameters.
    fn ranges_for(&self, kind_index: usize) -> (Range, Range) {
        match kind_index {
            0 => (self.rect_width, self.rect_height),
            1 => (self.ellipse_a, self.ellipse_b),
            _ => (self.tri_base, self.tri_height),
        }
    }

    /// The test split must be genuinely out-of-distribution: for every kind
    /// both configs can emit, at least one of its parameter ranges must
    /// differ.
    pub fn check_shift(train: &Self, test: &Self) -> Result<()> {
        for kind in 0..3 {
            if train.kind_weights[kind] <= 0.0 || test.kind_weights[kind] <= 0.0 {
                continue;
            }
            let (a0, a1) = train.ranges_for(kind);
            let (b0, b1) = test.ranges_for(kind);
            if a0 == b0 && a1 == b1 {
                return Err(Error::config(format!(
                    "train and test ranges identical for kind index {kind}; \
                     the test split would not be out-of-distribution"
                )));
            }
        }
        Ok(())
    }
}

/// Draws one shape from the config. The kind is drawn once; size, rotation
/// and offset are redrawn until the shape fits the grid, so kind frequencies
/// follow the mixture weights exactly.
pub fn sample_shape<R: Rng + ?Sized>(
    cfg: &DistributionConfig,
    g: usize,
    rng: &mut R,
) -> ShapeParams {
    let kind_index = {
        let x: f64 = rng.gen_range(0.0..1.0);
        let mut acc = 0.0;
        let mut chosen = 2;
        for (i, w) in cfg.kind_weights.iter().enumerate() {
            acc += w;
            if x < acc {
                chosen = i;
                break;
            }
        }
        chosen
    };
    let (r0, r1) = cfg.ranges_for(kind_index);

    for _ in 0..1000 {
        let p0 = r0.sample(rng);
        let p1 = r1.sample(rng);
        let kind = match kind_index {
            0 => ShapeKind::Rectangle {
                width: p0,
                height: p1,
            },
            1 => ShapeKind::Ellipse { a: p0, b: p1 },
            _ => ShapeKind::Triangle {
                base: p0,
                height: p1,
            },
        };
        let rotation = rng.gen_range(0.0..PI);
        let jitter = cfg.center_jitter;
        let center_offset = if jitter > 0.0 {
            (
                rng.gen_range(-jitter..jitter),
                rng.gen_range(-jitter..jitter),
            )
        } else {
            (0.0, 0.0)
        };
        let shape = ShapeParams {
            kind,
            rotation,
            center_offset,
        };
        if shape.fits(g) && shape.sizes_valid() {
            return shape;
        }
    }
    // Unreachable for sane configs: validated ranges always admit a fitting
    // redraw. Fall back to the smallest centered shape of the kind.
    ShapeParams {
        kind: match kind_index {
            0 => ShapeKind::Rectangle {
                width: r0.lo,
                height: r1.lo,
            },
            1 => ShapeKind::Ellipse { a: r0.lo, b: r1.lo },
            _ => ShapeKind::Triangle {
                base: r0.lo,
                height: r1.lo,
            },
        },
        rotation: 0.0,
        center_offset: (0.0, 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn defaults_validate_and_are_shifted() {
        let train = DistributionConfig::default_train();
        let test = DistributionConfig::default_test();
        train.validate().unwrap();
        test.validate().unwrap();
        DistributionConfig::check_shift(&train, &test).unwrap();
        assert!(DistributionConfig::check_shift(&train, &train).is_err());
    }

    #[test]
    fn degenerate_ranges_give_the_single_determined_shape() {
        let mut cfg = DistributionConfig::default_train();
        cfg.rect_width = Range::new(5.0, 5.0);
        cfg.rect_height = Range::new(3.0, 3.0);
        cfg.kind_weights = [1.0, 0.0, 0.0];
        cfg.center_jitter = 0.0;
        let mut rng = rng_for(1, &[]);
        let s = sample_shape(&cfg, 16, &mut rng);
        assert_eq!(
            s.kind,
            ShapeKind::Rectangle {
                width: 5.0,
                height: 3.0
            }
        );
        assert_eq!(s.center_offset, (0.0, 0.0));
    }

    #[test]
    fn same_seed_gives_identical_shapes() {
        let cfg = DistributionConfig::default_train();
        let a = sample_shape(&cfg, 16, &mut rng_for(9, &[2]));
        let b = sample_shape(&cfg, 16, &mut rng_for(9, &[2]));
        assert_eq!(a, b);
    }

    #[test]
    fn kind_frequencies_follow_mixture_weights() {
        // 10^4 draws; each kind count is Binomial(n, 1/3), so 3 sigma is
        // 3 * sqrt(n * p(1-p)) ~ 141.
        let cfg = DistributionConfig::default_train();
        let mut rng = rng_for(4242, &[7]);
        let n = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let s = sample_shape(&cfg, 16, &mut rng);
            let idx = match s.kind {
                ShapeKind::Rectangle { .. } => 0,
                ShapeKind::Ellipse { .. } => 1,
                ShapeKind::Triangle { .. } => 2,
            };
            counts[idx] += 1;
        }
        let expected = n as f64 / 3.0;
        let three_sigma = 3.0 * (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() <= three_sigma,
                "kind {i}: {c} vs {expected} +- {three_sigma}"
            );
        }
    }

    #[test]
    fn sampled_shapes_always_fit() {
        let cfg = DistributionConfig::default_test();
        let mut rng = rng_for(5, &[1]);
        for _ in 0..500 {
            let s = sample_shape(&cfg, 16, &mut rng);
            assert!(s.fits(16));
            assert!(s.sizes_valid());
            assert!((0.0..PI).contains(&s.rotation));
        }
    }
}
