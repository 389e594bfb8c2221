//! Procedural 2D environments: extruded primitives rasterized to heightmaps,
//! train/test shape distributions, and the augmentation baselines.

mod augment;
mod dist;
mod shape;

pub use augment::{gaussian_augment, generate_dr_object};
pub use dist::{sample_shape, DistributionConfig, Range, SplitLabel};
pub use shape::{rasterize, ShapeKind, ShapeParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `g x g` grid of heights in `[0, 1]`; the environment the policy acts in.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightmap {
    g: usize,
    data: Vec<f64>,
}

impl Heightmap {
    pub fn new(g: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != g * g {
            return Err(Error::config(format!(
                "heightmap data length {} does not match {g}x{g}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
            return Err(Error::numeric("heightmap entries must be in [0, 1]"));
        }
        Ok(Heightmap { g, data })
    }

    pub fn zeros(g: usize) -> Self {
        Heightmap {
            g,
            data: vec![0.0; g * g],
        }
    }

    pub fn grid_size(&self) -> usize {
        self.g
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.g + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.g + col] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Occupancy at an integer pixel, `false` outside the grid.
    #[inline]
    pub fn occupied_at(&self, row: i64, col: i64, threshold: f64) -> bool {
        if row < 0 || col < 0 || row >= self.g as i64 || col >= self.g as i64 {
            return false;
        }
        self.data[row as usize * self.g + col as usize] >= threshold
    }

    pub fn max_height(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn occupied_count(&self, threshold: f64) -> usize {
        self.data.iter().filter(|&&v| v >= threshold).count()
    }

    /// Exact quarter-turn rotation (a pixel permutation):
    /// `out[r][c] = in[g-1-c][r]`.
    pub fn rotated_quarter(&self) -> Heightmap {
        let g = self.g;
        let mut out = Heightmap::zeros(g);
        for r in 0..g {
            for c in 0..g {
                out.set(r, c, self.get(g - 1 - c, r));
            }
        }
        out
    }

    /// Where pixel `(row, col)` lands under [`Heightmap::rotated_quarter`].
    pub fn quarter_turn_pixel(g: usize, row: usize, col: usize) -> (usize, usize) {
        (col, g - 1 - row)
    }
}

/// Where an environment came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Sampled,
    DragenIter(u32),
    Dr,
    Gaussian,
}

impl Provenance {
    pub fn as_string(&self) -> String {
        match self {
            Provenance::Sampled => "sampled".to_string(),
            Provenance::DragenIter(k) => format!("dragen-iter-{k}"),
            Provenance::Dr => "dr".to_string(),
            Provenance::Gaussian => "gaussian".to_string(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sampled" => Ok(Provenance::Sampled),
            "dr" => Ok(Provenance::Dr),
            "gaussian" => Ok(Provenance::Gaussian),
            other => {
                if let Some(k) = other.strip_prefix("dragen-iter-") {
                    let k = k
                        .parse::<u32>()
                        .map_err(|_| Error::config(format!("bad provenance: {other}")))?;
                    Ok(Provenance::DragenIter(k))
                } else {
                    Err(Error::config(format!("bad provenance: {other}")))
                }
            }
        }
    }
}

impl Serialize for Provenance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.as_string())
    }
}

impl<'de> Deserialize<'de> for Provenance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Provenance::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One dataset entry: id, where it came from, and the seed that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub provenance: Provenance,
    pub seed: u64,
    /// Decoded map never crossed the occupancy threshold; kept but flagged.
    #[serde(default, skip_serializing_if = "is_false")]
    pub below_threshold: bool,
}

/// The growing environment set `S`: manifest plus heightmaps in the same
/// order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub entries: Vec<ManifestEntry>,
    pub maps: Vec<Heightmap>,
}

impl Dataset {
    pub fn new() -> Self {
        Dataset {
            entries: Vec::new(),
            maps: Vec::new(),
        }
    }

    pub fn push(&mut self, entry: ManifestEntry, map: Heightmap) {
        self.entries.push(entry);
        self.maps.push(map);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.len() != self.maps.len() {
            return Err(Error::usage("manifest/heightmap count mismatch"));
        }
        let mut ids: Vec<&str> = self.entries.iter().map(|e| e.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("duplicate environment ids in manifest"));
        }
        Ok(())
    }
}

impl Default for Dataset {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heightmap_rejects_out_of_range() {
        assert!(Heightmap::new(2, vec![0.0, 0.5, 1.0, 1.5]).is_err());
        assert!(Heightmap::new(2, vec![0.0, 0.5, 1.0, f64::NAN]).is_err());
        assert!(Heightmap::new(2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn quarter_rotation_is_a_permutation_of_order_four() {
        let mut h = Heightmap::zeros(4);
        h.set(0, 1, 1.0);
        h.set(2, 3, 0.5);
        let r4 = h
            .rotated_quarter()
            .rotated_quarter()
            .rotated_quarter()
            .rotated_quarter();
        assert_eq!(h, r4);
        let r = h.rotated_quarter();
        let (nr, nc) = Heightmap::quarter_turn_pixel(4, 0, 1);
        assert_eq!(r.get(nr, nc), 1.0);
    }

    #[test]
    fn provenance_round_trips() {
        for p in [
            Provenance::Sampled,
            Provenance::Dr,
            Provenance::Gaussian,
            Provenance::DragenIter(7),
        ] {
            assert_eq!(Provenance::parse(&p.as_string()).unwrap(), p);
        }
        assert!(Provenance::parse("dragen-iter-x").is_err());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut ds = Dataset::new();
        for _ in 0..2 {
            ds.push(
                ManifestEntry {
                    id: "a".into(),
                    provenance: Provenance::Sampled,
                    seed: 0,
                    below_threshold: false,
                },
                Heightmap::zeros(4),
            );
        }
        assert!(ds.validate().is_err());
    }
}
