//! Dataset directories: `manifest.json`, `features.f64le` (modality-major,
//! then row-major), `labels.u16le` and `projections.f64le`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeneratorConfig, MultiModalDataset, NamedMatrix, Provenance, Split};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::persist::{decode_f64, encode_f64};

pub const DATASET_FORMAT: &str = "modcomp-dataset/1";

const MANIFEST: &str = "manifest.json";
const FEATURES: &str = "features.f64le";
const LABELS: &str = "labels.u16le";
const PROJECTIONS: &str = "projections.f64le";

#[derive(Debug, Serialize, Deserialize)]
struct ProjectionEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    split: Split,
    num_classes: usize,
    rows: usize,
    dims: Vec<usize>,
    class_histogram: Vec<usize>,
    generator: GeneratorConfig,
    projections: Vec<ProjectionEntry>,
}

pub fn save_dataset(ds: &MultiModalDataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir)?;
    let prov = ds.provenance();
    let manifest = Manifest {
        format: DATASET_FORMAT.to_string(),
        split: ds.split(),
        num_classes: ds.num_classes(),
        rows: ds.len(),
        dims: ds.dims(),
        class_histogram: ds.class_histogram(),
        generator: prov.generator.clone(),
        projections: prov
            .projections
            .iter()
            .map(|p| ProjectionEntry {
                name: p.name.clone(),
                rows: p.matrix.rows(),
                cols: p.matrix.cols(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST), text)?;

    let mut features = Vec::new();
    for m in ds.modalities() {
        features.extend(encode_f64(m.as_slice()));
    }
    fs::write(dir.join(FEATURES), features)?;

    let mut labels = Vec::with_capacity(ds.len() * 2);
    for &l in ds.labels() {
        labels.extend_from_slice(&(l as u16).to_le_bytes());
    }
    fs::write(dir.join(LABELS), labels)?;

    let mut proj = Vec::new();
    for p in &prov.projections {
        proj.extend(encode_f64(p.matrix.as_slice()));
    }
    fs::write(dir.join(PROJECTIONS), proj)?;
    Ok(())
}

fn length_mismatch(file: &str, expected: usize, got: usize) -> Error {
    Error::Format(format!(
        "length mismatch in {file}: expected {expected} bytes, found {got}"
    ))
}

pub fn load_dataset(dir: &Path) -> Result<MultiModalDataset> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("malformed manifest: {e}")))?;
    if manifest.format != DATASET_FORMAT {
        return Err(Error::Format(format!(
            "unsupported dataset format {:?}",
            manifest.format
        )));
    }
    let n = manifest.rows;

    let features = fs::read(dir.join(FEATURES))?;
    let expected: usize = manifest.dims.iter().map(|d| d * n * 8).sum();
    if features.len() != expected {
        return Err(length_mismatch(FEATURES, expected, features.len()));
    }
    let values = decode_f64(&features)?;
    let mut modalities = Vec::with_capacity(manifest.dims.len());
    let mut at = 0;
    for &d in &manifest.dims {
        modalities.push(Matrix::from_vec(n, d, values[at..at + n * d].to_vec()));
        at += n * d;
    }

    let raw = fs::read(dir.join(LABELS))?;
    if raw.len() != n * 2 {
        return Err(length_mismatch(LABELS, n * 2, raw.len()));
    }
    let labels: Vec<usize> = raw
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]) as usize)
        .collect();

    let raw = fs::read(dir.join(PROJECTIONS))?;
    let expected: usize = manifest
        .projections
        .iter()
        .map(|p| p.rows * p.cols * 8)
        .sum();
    if raw.len() != expected {
        return Err(length_mismatch(PROJECTIONS, expected, raw.len()));
    }
    let values = decode_f64(&raw)?;
    let mut projections = Vec::with_capacity(manifest.projections.len());
    let mut at = 0;
    for p in manifest.projections {
        let len = p.rows * p.cols;
        projections.push(NamedMatrix {
            name: p.name,
            matrix: Matrix::from_vec(p.rows, p.cols, values[at..at + len].to_vec()),
        });
        at += len;
    }

    let ds = MultiModalDataset::new(
        modalities,
        labels,
        manifest.num_classes,
        manifest.split,
        Provenance {
            generator: manifest.generator,
            projections,
        },
    )
    .map_err(|e| Error::Format(format!("dataset payload invalid: {e}")))?;
    if ds.class_histogram() != manifest.class_histogram {
        return Err(Error::Format(
            "class histogram disagrees with labels".into(),
        ));
    }
    Ok(ds)
}
