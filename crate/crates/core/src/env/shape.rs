//! Shape primitives and pixel-center rasterization.

use serde::{Deserialize, Serialize};

use super::Heightmap;
use crate::error::{Error, Result};
use crate::geom::{pixel_center, rotate_about};

/// One extruded 2D primitive with its size parameters in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShapeKind {
    Rectangle { width: f64, height: f64 },
    Ellipse { a: f64, b: f64 },
    Triangle { base: f64, height: f64 },
}

impl ShapeKind {
    pub fn size_params(&self) -> (f64, f64) {
        match *self {
            ShapeKind::Rectangle { width, height } => (width, height),
            ShapeKind::Ellipse { a, b } => (a, b),
            ShapeKind::Triangle { base, height } => (base, height),
        }
    }
}

/// A primitive plus pose: rotation in `[0, pi)` and center offset from the
/// grid center, both in pixels. Rasterization accepts any rotation value so
/// tests can build exact quarter-turn variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub kind: ShapeKind,
    pub rotation: f64,
    pub center_offset: (f64, f64),
}

impl ShapeParams {
    /// Distance from the shape center beyond which no point is inside.
    pub fn bounding_radius(&self) -> f64 {
        match self.kind {
            ShapeKind::Rectangle { width, height } => {
                ((width / 2.0).powi(2) + (height / 2.0).powi(2)).sqrt()
            }
            ShapeKind::Ellipse { a, b } => a.max(b),
            ShapeKind::Triangle { base, height } => {
                ((base / 2.0).powi(2) + (height / 2.0).powi(2)).sqrt()
            }
        }
    }

    /// Half-extents of the axis-aligned bounding box of the rotated shape.
    pub fn bbox_half_extents(&self) -> (f64, f64) {
        let (c, s) = (self.rotation.cos(), self.rotation.sin());
        match self.kind {
            ShapeKind::Rectangle { width, height } => {
                let (hw, hh) = (width / 2.0, height / 2.0);
                (
                    (hw * c).abs() + (hh * s).abs(),
                    (hw * s).abs() + (hh * c).abs(),
                )
            }
            ShapeKind::Ellipse { a, b } => (
                ((a * c).powi(2) + (b * s).powi(2)).sqrt(),
                ((a * s).powi(2) + (b * c).powi(2)).sqrt(),
            ),
            ShapeKind::Triangle { base, height } => {
                let verts = triangle_vertices(base, height);
                let mut hx: f64 = 0.0;
                let mut hy: f64 = 0.0;
                for (vx, vy) in verts {
                    let (rx, ry) = rotate_about(0.0, 0.0, c, s, vx, vy);
                    hx = hx.max(rx.abs());
                    hy = hy.max(ry.abs());
                }
                (hx, hy)
            }
        }
    }

    /// Absolute center in continuous grid coordinates.
    pub fn center(&self, g: usize) -> (f64, f64) {
        let half = g as f64 / 2.0;
        (half + self.center_offset.0, half + self.center_offset.1)
    }

    /// Shape fits inside the grid with at least a one-pixel margin (using
    /// the rotated bounding box, so axis-aligned shapes are not penalized).
    pub fn fits(&self, g: usize) -> bool {
        let (cx, cy) = self.center(g);
        let (hx, hy) = self.bbox_half_extents();
        let hi = g as f64 - 1.0;
        cx - hx >= 1.0 && cx + hx <= hi && cy - hy >= 1.0 && cy + hy <= hi
    }

    /// All size parameters strictly larger than one pixel.
    pub fn sizes_valid(&self) -> bool {
        let (p0, p1) = self.kind.size_params();
        p0 > 1.0 && p1 > 1.0
    }

    /// Point-inside test in continuous grid coordinates (boundary counts as
    /// inside).
    pub fn contains(&self, g: usize, x: f64, y: f64) -> bool {
        let (cx, cy) = self.center(g);
        // rotate the point back into the shape frame
        let (c, s) = (self.rotation.cos(), self.rotation.sin());
        let (px, py) = rotate_about(cx, cy, c, -s, x, y);
        let (lx, ly) = (px - cx, py - cy);
        match self.kind {
            ShapeKind::Rectangle { width, height } => {
                lx.abs() <= width / 2.0 && ly.abs() <= height / 2.0
            }
            ShapeKind::Ellipse { a, b } => (lx / a).powi(2) + (ly / b).powi(2) <= 1.0,
            ShapeKind::Triangle { base, height } => {
                let hb = base / 2.0;
                let hh = height / 2.0;
                if ly < -hh {
                    return false;
                }
                // half-plane tests against the two slanted edges, arranged so
                // interior points give non-negative values
                let left = -hb * (ly - hh) + height * lx;
                let right = -hb * (ly + hh) - height * (lx - hb);
                left >= 0.0 && right >= 0.0
            }
        }
    }
}

fn triangle_vertices(base: f64, height: f64) -> [(f64, f64); 3] {
    let hb = base / 2.0;
    let hh = height / 2.0;
    [(-hb, -hh), (hb, -hh), (0.0, hh)]
}

/// Binary extrusion: height 1.0 where the pixel center lies inside the shape.
pub fn rasterize(shape: &ShapeParams, g: usize) -> Result<Heightmap> {
    if !shape.fits(g) {
        return Err(Error::usage(format!(
            "shape does not fit a {g}x{g} grid with 1px margin: {shape:?}"
        )));
    }
    let mut h = Heightmap::zeros(g);
    for row in 0..g {
        for col in 0..g {
            let (x, y) = pixel_center(row, col);
            if shape.contains(g, x, y) {
                h.set(row, col, 1.0);
            }
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn centered(kind: ShapeKind) -> ShapeParams {
        ShapeParams {
            kind,
            rotation: 0.0,
            center_offset: (0.0, 0.0),
        }
    }

    #[test]
    fn full_rectangle_covers_interior() {
        // width = height = G-2 centered: exactly (G-2)^2 ones, confirmed by
        // a brute-force inclusion count.
        let g = 16;
        let shape = centered(ShapeKind::Rectangle {
            width: 14.0,
            height: 14.0,
        });
        let h = rasterize(&shape, g).unwrap();
        assert_eq!(h.occupied_count(0.5), 14 * 14);
        let brute = (0..g * g)
            .filter(|i| {
                let (x, y) = pixel_center(i / g, i % g);
                (x - 8.0).abs() <= 7.0 && (y - 8.0).abs() <= 7.0
            })
            .count();
        assert_eq!(h.occupied_count(0.5), brute);
    }

    #[test]
    fn circle_area_close_to_pi_r_squared() {
        let shape = centered(ShapeKind::Ellipse { a: 4.0, b: 4.0 });
        let h = rasterize(&shape, 16).unwrap();
        let expected = PI * 16.0;
        let got = h.occupied_count(0.5) as f64;
        assert!(
            (got - expected).abs() / expected <= 0.15,
            "count {got} vs {expected}"
        );
    }

    #[test]
    fn quarter_turn_matches_rotated_raster() {
        // Rotating the shape by pi/2 (and its offset accordingly) gives the
        // same raster as rotating the unrotated raster by 90 degrees.
        let cases = [
            ShapeKind::Rectangle {
                width: 5.0,
                height: 9.0,
            },
            ShapeKind::Ellipse { a: 2.5, b: 5.0 },
            ShapeKind::Triangle {
                base: 6.0,
                height: 8.0,
            },
        ];
        for kind in cases {
            let base = ShapeParams {
                kind,
                rotation: 0.3,
                center_offset: (0.6, -0.4),
            };
            // quarter_turn_pixel maps (r,c) -> (c, g-1-r), i.e. the raster
            // rotation realized by rotated_quarter; the matching shape-space
            // transform rotates the offset by the same turn.
            let turned = ShapeParams {
                kind,
                rotation: base.rotation + FRAC_PI_2,
                center_offset: (-base.center_offset.1, base.center_offset.0),
            };
            let a = rasterize(&base, 16).unwrap().rotated_quarter();
            let b = rasterize(&turned, 16).unwrap();
            assert_eq!(a, b, "kind {kind:?}");
        }
    }

    #[test]
    fn triangle_contains_its_centroid_region() {
        let shape = centered(ShapeKind::Triangle {
            base: 8.0,
            height: 8.0,
        });
        assert!(shape.contains(16, 8.0, 8.0));
        assert!(shape.contains(16, 8.0, 5.0)); // near base, inside
        assert!(!shape.contains(16, 8.0, 12.5)); // above apex
        assert!(!shape.contains(16, 12.5, 5.0)); // right of base corner
    }

    #[test]
    fn out_of_bounds_shape_is_rejected() {
        let shape = ShapeParams {
            kind: ShapeKind::Rectangle {
                width: 15.0,
                height: 15.0,
            },
            rotation: 0.5,
            center_offset: (0.0, 0.0),
        };
        assert!(rasterize(&shape, 16).is_err());
    }
}
