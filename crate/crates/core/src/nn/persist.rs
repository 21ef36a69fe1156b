//! Parameter files: a JSON manifest describing each network, next to a flat
//! little-endian f64 payload holding every network's parameters in layer
//! order (weights row-major, then bias).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MlpParams, MlpSpec};
use crate::error::{Error, Result};

pub const PARAMS_FORMAT: &str = "modcomp-params/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkEntry {
    name: String,
    spec: MlpSpec,
    offset: usize,
    count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamsManifest {
    format: String,
    payload: String,
    networks: Vec<NetworkEntry>,
    #[serde(default)]
    metadata: serde_json::Value,
}

/// A named network loaded back from disk.
#[derive(Debug, Clone)]
pub struct NamedNetwork {
    pub name: String,
    pub spec: MlpSpec,
    pub params: MlpParams,
}

pub fn encode_f64(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_f64(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Format(format!(
            "f64 payload length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn paths(dir: &Path, name: &str) -> (PathBuf, PathBuf, String) {
    let payload = format!("{name}.f64le");
    (
        dir.join(format!("{name}.json")),
        dir.join(&payload),
        payload,
    )
}

/// Writes `<dir>/<name>.json` and `<dir>/<name>.f64le`.
pub fn save_networks(
    dir: &Path,
    name: &str,
    networks: &[(&str, &MlpSpec, &MlpParams)],
    metadata: serde_json::Value,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (manifest_path, payload_path, payload) = paths(dir, name);
    let mut entries = Vec::new();
    let mut flat = Vec::new();
    for (net_name, spec, params) in networks {
        if !params.matches(spec) {
            return Err(Error::structural(format!(
                "network {net_name}: parameters do not match spec"
            )));
        }
        entries.push(NetworkEntry {
            name: net_name.to_string(),
            spec: (*spec).clone(),
            offset: flat.len(),
            count: params.len(),
        });
        flat.extend_from_slice(params.as_slice());
    }
    let manifest = ParamsManifest {
        format: PARAMS_FORMAT.to_string(),
        payload,
        networks: entries,
        metadata,
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    fs::write(&payload_path, encode_f64(&flat))?;
    Ok(())
}

/// Reads a bundle written by [`save_networks`], returning the networks in
/// file order together with the metadata blob.
pub fn load_networks(dir: &Path, name: &str) -> Result<(Vec<NamedNetwork>, serde_json::Value)> {
    let (manifest_path, _, _) = paths(dir, name);
    let manifest: ParamsManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    if manifest.format != PARAMS_FORMAT {
        return Err(Error::Format(format!(
            "unknown parameter format {:?}",
            manifest.format
        )));
    }
    let flat = decode_f64(&fs::read(dir.join(&manifest.payload))?)?;
    let expected: usize = manifest.networks.iter().map(|n| n.count).sum();
    if flat.len() != expected {
        return Err(Error::Format(format!(
            "payload holds {} values, manifest declares {expected}",
            flat.len()
        )));
    }
    let mut nets = Vec::new();
    for entry in manifest.networks {
        if entry.count != entry.spec.param_count() || entry.offset + entry.count > flat.len() {
            return Err(Error::Format(format!(
                "network {} has inconsistent layout",
                entry.name
            )));
        }
        let params = MlpParams::from_flat(
            &entry.spec,
            flat[entry.offset..entry.offset + entry.count].to_vec(),
        )?;
        nets.push(NamedNetwork {
            name: entry.name,
            spec: entry.spec,
            params,
        });
    }
    Ok((nets, manifest.metadata))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_params;

    #[test]
    fn bundle_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let a = MlpSpec::elu(&[3, 5, 1]).with_label(1, 2);
        let b = MlpSpec::elu(&[4, 2]);
        let pa = init_params(&a, 1).unwrap();
        let pb = init_params(&b, 2).unwrap();
        save_networks(
            dir.path(),
            "m",
            &[("critic", &a, &pa), ("head", &b, &pb)],
            serde_json::json!({"strategy": "naive"}),
        )
        .unwrap();
        let (nets, meta) = load_networks(dir.path(), "m").unwrap();
        assert_eq!(nets.len(), 2);
        assert_eq!(nets[0].spec, a);
        assert_eq!(nets[0].params, pa);
        assert_eq!(nets[1].params, pb);
        assert_eq!(meta["strategy"], "naive");
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = MlpSpec::elu(&[3, 2]);
        let pa = init_params(&a, 1).unwrap();
        save_networks(
            dir.path(),
            "m",
            &[("net", &a, &pa)],
            serde_json::Value::Null,
        )
        .unwrap();
        let payload = dir.path().join("m.f64le");
        let bytes = std::fs::read(&payload).unwrap();
        std::fs::write(&payload, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(
            load_networks(dir.path(), "m"),
            Err(Error::Format(_))
        ));
    }
}
