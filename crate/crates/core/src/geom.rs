//! Grid geometry shared by the rasterizer, the grasp oracle and the policy.
//!
//! Conventions: a `g x g` heightmap indexes pixels as `(row, col)`; the pixel
//! `(r, c)` has continuous center `(x, y) = (c + 0.5, r + 0.5)` and the grid
//! center is `(g/2, g/2)`. Orientation bins cover `[0, 180)` degrees in 30
//! degree steps; their direction vectors come from an exact table so that a
//! quarter turn maps bin `k` to bin `k + 3` bit-exactly (`cos` entries are
//! negated/swapped `sin` entries, and f64 negation is exact). Geometric
//! transforms use plain mul/add, no FMA, so algebraically equal expressions
//! stay bit-equal under 90 degree rotations.

/// Number of jaw orientation bins (30 degree interval over a half turn).
pub const ORIENTATIONS: usize = 6;

/// `(cos, sin)` of `bin * 30` degrees from an exact table.
pub fn bin_trig(bin: usize) -> (f64, f64) {
    let s3 = 3f64.sqrt() / 2.0;
    match bin % ORIENTATIONS {
        0 => (1.0, 0.0),
        1 => (s3, 0.5),
        2 => (0.5, s3),
        3 => (0.0, 1.0),
        4 => (-0.5, s3),
        _ => (-s3, 0.5),
    }
}

/// Rotates `(x, y)` about `(cx, cy)` by the rotation whose cosine/sine are
/// given. Plain mul/add on purpose; see the module docs.
#[inline]
pub fn rotate_about(cx: f64, cy: f64, cos: f64, sin: f64, x: f64, y: f64) -> (f64, f64) {
    let dx = x - cx;
    let dy = y - cy;
    (cx + cos * dx - sin * dy, cy + sin * dx + cos * dy)
}

/// Index of the pixel nearest to continuous coordinate `v` (one axis).
///
/// Points exactly on a pixel boundary tie toward the grid center, which makes
/// the rule commute with the grid's 90 degree symmetries. May return indices
/// outside `[0, g)`; callers treat those as empty space.
#[inline]
pub fn nearest_index(v: f64, g: usize) -> i64 {
    let t = v - 0.5;
    let fl = t.floor();
    let frac = t - fl;
    let idx = if frac > 0.5 {
        fl + 1.0
    } else if frac < 0.5 {
        fl
    } else if v <= g as f64 / 2.0 {
        fl + 1.0
    } else {
        fl
    };
    idx as i64
}

/// Nearest pixel `(row, col)` for a continuous point, possibly out of grid.
#[inline]
pub fn nearest_pixel(x: f64, y: f64, g: usize) -> (i64, i64) {
    (nearest_index(y, g), nearest_index(x, g))
}

/// Center coordinates of pixel `(row, col)`.
#[inline]
pub fn pixel_center(row: usize, col: usize) -> (f64, f64) {
    (col as f64 + 0.5, row as f64 + 0.5)
}

/// Angle in radians between two non-zero vectors.
pub fn angle_between(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let dot = ax * bx + ay * by;
    let na = (ax * ax + ay * ay).sqrt();
    let nb = (bx * bx + by * by).sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_turn_permutes_bins_exactly() {
        for k in 0..ORIENTATIONS {
            let (c, s) = bin_trig(k);
            let (c90, s90) = bin_trig((k + 3) % ORIENTATIONS);
            // R90 (x, y) = (-y, x); bins live on a half turn so k+3 may land
            // on the antipodal direction, which is the same jaw axis.
            let rotated = (-s, c);
            let same = rotated == (c90, s90);
            let antipodal = rotated == (-c90, -s90);
            assert!(same || antipodal, "bin {k}");
        }
    }

    #[test]
    fn ties_break_toward_center() {
        assert_eq!(nearest_index(2.0, 16), 2);
        assert_eq!(nearest_index(14.0, 16), 13);
        // antisymmetry used by the rotation equivariance argument
        for v in [1.0, 2.0, 5.0, 7.0] {
            assert_eq!(nearest_index(16.0 - v, 16), 15 - nearest_index(v, 16));
        }
        // non-tie cases are plain nearest (pixel r has center r + 0.5)
        assert_eq!(nearest_index(2.3, 16), 2);
        assert_eq!(nearest_index(2.7, 16), 2);
        assert_eq!(nearest_index(1.9, 16), 1);
    }

    #[test]
    fn angle_between_orthogonal_vectors() {
        let a = angle_between(1.0, 0.0, 0.0, 1.0);
        assert!((a - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}
