use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorcore::{Scalar, Tensor};

use super::tensor_file::{read_tensor, write_tensor};
use super::write_atomic;

/// One parameter in a bundle; `path` is relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleEntry {
    pub name: String,
    pub path: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub version: u32,
    pub entries: Vec<BundleEntry>,
}

/// Writes every tensor as `<dir>/<name>.hten` and the manifest as
/// `<dir>/<manifest_name>`. Returns the manifest path.
pub fn save_bundle<T: Scalar>(dir: &Path, manifest_name: &str, tensors: &[(String, &Tensor<T>)]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        let file = format!("{name}.hten");
        write_tensor(&dir.join(&file), t)?;
        entries.push(BundleEntry { name: name.clone(), path: file, shape: t.dims().to_vec() });
    }
    let manifest = BundleManifest { version: super::FORMAT_VERSION, entries };
    let path = dir.join(manifest_name);
    write_atomic(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(path)
}

/// Reads every tensor named in a manifest, converting to precision `T` and
/// checking each recorded shape.
pub fn load_bundle<T: Scalar>(manifest_path: &Path) -> Result<BTreeMap<String, Tensor<T>>> {
    let manifest: BundleManifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = BTreeMap::new();
    for e in manifest.entries {
        let t = read_tensor(&dir.join(&e.path))?.into_precision::<T>();
        if t.dims() != e.shape.as_slice() {
            return Err(Error::Format(format!(
                "parameter {} has shape {:?}, manifest says {:?}",
                e.name,
                t.dims(),
                e.shape
            )));
        }
        if out.insert(e.name.clone(), t).is_some() {
            return Err(Error::Format(format!("parameter {} listed twice", e.name)));
        }
    }
    Ok(out)
}
