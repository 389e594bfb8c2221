//! On-disk formats: dataset manifests with raw heightmap blobs, network
//! checkpoints (shape manifest + flat little-endian f64 array), and the
//! fixed-column metrics CSV. All writes are atomic (temp file + rename) so a
//! failed run leaves no partial files.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::hex_digest;
use crate::env::{Dataset, Heightmap, ManifestEntry};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub grid_size: usize,
    pub entries: Vec<ManifestEntry>,
}

fn manifest_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.manifest.json"))
}

fn blob_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.heightmaps.f64"))
}

/// Writes `<name>.manifest.json` plus `<name>.heightmaps.f64` (one `g*g`
/// little-endian f64 block per entry, in manifest order).
pub fn save_dataset(
    dir: &Path,
    name: &str,
    dataset: &Dataset,
    grid_size: usize,
    config_hash: &str,
) -> Result<()> {
    dataset.validate()?;
    fs::create_dir_all(dir)?;
    let manifest = DatasetManifest {
        schema_version: crate::SCHEMA_VERSION,
        tool_version: crate::TOOL_VERSION.to_string(),
        config_hash: config_hash.to_string(),
        grid_size,
        entries: dataset.entries.clone(),
    };
    let mut blob = Vec::with_capacity(dataset.maps.len() * grid_size * grid_size * 8);
    for map in &dataset.maps {
        if map.grid_size() != grid_size {
            return Err(Error::usage("heightmap grid size mismatch in dataset"));
        }
        for &v in map.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    // blob first: a manifest without its blob is invalid either way, but the
    // manifest is the file readers look for
    write_atomic(&blob_path(dir, name), &blob)?;
    let json = serde_json::to_vec_pretty(&manifest)?;
    write_atomic(&manifest_path(dir, name), &json)?;
    Ok(())
}

/// Loads a dataset pair written by [`save_dataset`]. Returns the dataset,
/// its manifest, and the SHA-256 of the manifest bytes (used to check that
/// runs being compared saw the same data).
pub fn load_dataset(dir: &Path, name: &str) -> Result<(Dataset, DatasetManifest, String)> {
    let mpath = manifest_path(dir, name);
    let bytes = fs::read(&mpath)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", mpath.display())))?;
    let manifest: DatasetManifest = serde_json::from_slice(&bytes)?;
    let manifest_hash = hex_digest(&bytes);
    if manifest.schema_version != crate::SCHEMA_VERSION {
        return Err(Error::config(format!(
            "dataset schema {} unsupported",
            manifest.schema_version
        )));
    }
    let g = manifest.grid_size;
    let blob = fs::read(blob_path(dir, name))?;
    let per_map = g * g * 8;
    if blob.len() != manifest.entries.len() * per_map {
        return Err(Error::config(format!(
            "heightmap blob length {} does not match {} entries of {}x{}",
            blob.len(),
            manifest.entries.len(),
            g,
            g
        )));
    }
    let mut dataset = Dataset::new();
    for (i, entry) in manifest.entries.iter().enumerate() {
        let start = i * per_map;
        let data: Vec<f64> = blob[start..start + per_map]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        dataset.push(entry.clone(), Heightmap::new(g, data)?);
    }
    dataset.validate()?;
    Ok((dataset, manifest, manifest_hash))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkShape {
    name: String,
    widths: Vec<usize>,
    activations: Vec<Activation>,
    param_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointManifest {
    schema_version: u32,
    tool_version: String,
    config_hash: String,
    networks: Vec<NetworkShape>,
}

/// Saves named networks as `<base>.json` (shape manifest) plus `<base>.f64`
/// (all parameters flattened in declaration order, little endian).
pub fn save_checkpoint(base: &Path, nets: &[(&str, &Mlp)], config_hash: &str) -> Result<()> {
    if let Some(parent) = base.parent() {
        fs::create_dir_all(parent)?;
    }
    let manifest = CheckpointManifest {
        schema_version: crate::SCHEMA_VERSION,
        tool_version: crate::TOOL_VERSION.to_string(),
        config_hash: config_hash.to_string(),
        networks: nets
            .iter()
            .map(|(name, mlp)| NetworkShape {
                name: name.to_string(),
                widths: mlp.spec().widths.clone(),
                activations: mlp.spec().activations.clone(),
                param_count: mlp.param_count(),
            })
            .collect(),
    };
    let mut flat = Vec::new();
    for (_, mlp) in nets {
        mlp.write_params(&mut flat);
    }
    let mut blob = Vec::with_capacity(flat.len() * 8);
    for v in &flat {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(&base.with_extension("f64"), &blob)?;
    write_atomic(
        &base.with_extension("json"),
        &serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Restores parameters saved by [`save_checkpoint`] into networks of
/// matching shapes (order and names must agree).
pub fn load_checkpoint(base: &Path, nets: &mut [(&str, &mut Mlp)]) -> Result<()> {
    let manifest: CheckpointManifest =
        serde_json::from_slice(&fs::read(base.with_extension("json"))?)?;
    if manifest.networks.len() != nets.len() {
        return Err(Error::usage(format!(
            "checkpoint has {} networks, expected {}",
            manifest.networks.len(),
            nets.len()
        )));
    }
    for (shape, (name, mlp)) in manifest.networks.iter().zip(nets.iter()) {
        if shape.name != *name || shape.widths != mlp.spec().widths {
            return Err(Error::usage(format!(
                "checkpoint network '{}' does not match expected '{name}'",
                shape.name
            )));
        }
    }
    let blob = fs::read(base.with_extension("f64"))?;
    let flat: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut offset = 0;
    for (_, mlp) in nets.iter_mut() {
        offset += mlp.read_params(&flat[offset..])?;
    }
    if offset != flat.len() {
        return Err(Error::usage(format!(
            "checkpoint blob has {} extra values",
            flat.len() - offset
        )));
    }
    Ok(())
}

/// One metrics row per loop iteration. Optional fields stay empty for
/// methods that do not train an embedding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u32,
    pub dataset_size: usize,
    pub mean_true_cost: Option<f64>,
    pub max_true_cost: Option<f64>,
    pub mean_predicted_cost: Option<f64>,
    pub recon_mse: Option<f64>,
    pub lipschitz_bound: Option<f64>,
    pub target_reached_fraction: Option<f64>,
    pub train_success: f64,
    /// One value per eval friction, in config order.
    pub test_success: Vec<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Fixed-column CSV: UTF-8, LF endings, one header row. Floats use Rust's
/// shortest round-trip formatting so reruns are byte-identical.
pub fn metrics_to_csv(rows: &[MetricsRow], frictions: &[f64]) -> String {
    let mut out = String::new();
    out.push_str(
        "iteration,dataset_size,mean_true_cost,max_true_cost,mean_predicted_cost,\
         recon_mse,lipschitz_bound,target_reached_fraction,train_success",
    );
    for mu in frictions {
        out.push_str(&format!(",test_success_{mu}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.dataset_size,
            fmt_opt(r.mean_true_cost),
            fmt_opt(r.max_true_cost),
            fmt_opt(r.mean_predicted_cost),
            fmt_opt(r.recon_mse),
            fmt_opt(r.lipschitz_bound),
            fmt_opt(r.target_reached_fraction),
            r.train_success
        ));
        for v in &r.test_success {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
