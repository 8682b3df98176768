//! Dataset directory layout:
//!
//! | file         | contents                                              |
//! |--------------|-------------------------------------------------------|
//! | `meta.json`  | shape, cluster count, confound kind, dtype, version   |
//! | `X.bin`      | `N * D` f32le, row-major                              |
//! | `y.bin`      | optional, `N` u32le                                   |
//! | `c.bin`      | `N` u32le (discrete) or `N` f32le (continuous)        |
//! | `c_mask.bin` | optional, `N` bytes, 1 = observed                     |

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{BundleMeta, ConfoundKind, ConfoundLabels, DatasetBundle};
use crate::binio;
use crate::error::{Error, Result};

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MetaFile {
    n: usize,
    d_input: usize,
    k_clusters: usize,
    confound_kind: ConfoundKind,
    g_categories: Option<usize>,
    dtype: String,
    layout: String,
    format_version: u32,
}

pub fn save_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    bundle.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = MetaFile {
        n: bundle.meta.n,
        d_input: bundle.meta.d_input,
        k_clusters: bundle.meta.k_clusters,
        confound_kind: bundle.meta.confound_kind,
        g_categories: bundle.meta.g_categories,
        dtype: "f32le".into(),
        layout: "row-major".into(),
        format_version: FORMAT_VERSION,
    };
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    binio::write_bytes(&dir.join("meta.json"), json.as_bytes())?;
    binio::write_bytes(
        &dir.join("X.bin"),
        &binio::encode_f32(bundle.x.iter().copied()),
    )?;

    let y_path = dir.join("y.bin");
    match &bundle.y {
        Some(y) => binio::write_bytes(&y_path, &binio::encode_u32(y.iter().copied()))?,
        None => remove_stale(&y_path)?,
    }
    let c_bytes = match &bundle.confound.values {
        super::ConfoundValues::Discrete { values, .. } => binio::encode_u32(values.iter().copied()),
        super::ConfoundValues::Continuous(values) => binio::encode_f32(values.iter().copied()),
    };
    binio::write_bytes(&dir.join("c.bin"), &c_bytes)?;

    let mask_path = dir.join("c_mask.bin");
    match &bundle.confound.mask {
        Some(mask) => {
            let bytes: Vec<u8> = mask.iter().map(|&b| b as u8).collect();
            binio::write_bytes(&mask_path, &bytes)?
        }
        None => remove_stale(&mask_path)?,
    }
    Ok(())
}

fn remove_stale(path: &Path) -> Result<()> {
    match fs::remove_file(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(Error::io(path, e)),
    }
}

pub fn load_bundle(dir: &Path) -> Result<DatasetBundle> {
    let meta_path = dir.join("meta.json");
    let text = binio::read_bytes(&meta_path)?;
    let meta: MetaFile =
        serde_json::from_slice(&text).map_err(|e| Error::format(&meta_path, e.to_string()))?;
    if meta.dtype != "f32le" {
        return Err(Error::format(
            &meta_path,
            format!("unknown dtype {:?}", meta.dtype),
        ));
    }
    if meta.layout != "row-major" {
        return Err(Error::format(
            &meta_path,
            format!("unknown layout {:?}", meta.layout),
        ));
    }
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::format(
            &meta_path,
            format!("unsupported format_version {}", meta.format_version),
        ));
    }
    match (meta.confound_kind, meta.g_categories) {
        (ConfoundKind::Discrete, None) => {
            return Err(Error::format(
                &meta_path,
                "discrete confound requires g_categories",
            ))
        }
        (ConfoundKind::Continuous, Some(_)) => {
            return Err(Error::format(
                &meta_path,
                "continuous confound must have null g_categories",
            ))
        }
        _ => {}
    }
    let n = meta.n;

    let x_path = dir.join("X.bin");
    let x_bytes = binio::read_bytes(&x_path)?;
    let x = binio::decode_f32(&x_path, &x_bytes, n * meta.d_input)?;
    let x = Array2::from_shape_vec((n, meta.d_input), x)
        .map_err(|e| Error::format(&x_path, e.to_string()))?;

    let y_path = dir.join("y.bin");
    let y = if y_path.exists() {
        Some(binio::read_u32_file(&y_path, n)?)
    } else {
        None
    };

    let c_path = dir.join("c.bin");
    let c_bytes = binio::read_bytes(&c_path)?;
    let mut confound = match meta.g_categories {
        Some(g) => ConfoundLabels::discrete(binio::decode_u32(&c_path, &c_bytes, n)?, g),
        None => ConfoundLabels::continuous(binio::decode_f32(&c_path, &c_bytes, n)?),
    };

    let mask_path = dir.join("c_mask.bin");
    if mask_path.exists() {
        let bytes = binio::read_bytes(&mask_path)?;
        if bytes.len() != n {
            return Err(Error::format(
                &mask_path,
                format!("size mismatch: expected {n} bytes, found {}", bytes.len()),
            ));
        }
        if bytes.iter().any(|&b| b > 1) {
            return Err(Error::format(&mask_path, "mask bytes must be 0 or 1"));
        }
        confound.mask = Some(bytes.iter().map(|&b| b == 1).collect());
    }

    let bundle = DatasetBundle {
        x,
        y,
        confound,
        meta: BundleMeta {
            n,
            d_input: meta.d_input,
            k_clusters: meta.k_clusters,
            confound_kind: meta.confound_kind,
            g_categories: meta.g_categories,
        },
    };
    bundle
        .validate()
        .map_err(|e| Error::format(dir, format!("inconsistent dataset: {e}")))?;
    Ok(bundle)
}
