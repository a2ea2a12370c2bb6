//! Directory container: a TOML manifest next to raw little-endian arrays.
//!
//! Every array is described by an [`ArrayEntry`] carrying its file name,
//! dtype, byte order, and shape. Containers are written into a temporary
//! sibling directory and renamed into place once complete.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.toml";
pub const DTYPE_F32: &str = "float32";
pub const LITTLE_ENDIAN: &str = "little";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub file: String,
    pub dtype: String,
    pub byte_order: String,
    pub shape: Vec<usize>,
}

impl ArrayEntry {
    pub fn f32(name: &str, shape: Vec<usize>) -> Self {
        ArrayEntry {
            name: name.to_string(),
            file: format!("{name}.f32"),
            dtype: DTYPE_F32.to_string(),
            byte_order: LITTLE_ENDIAN.to_string(),
            shape,
        }
    }

    pub fn count(&self) -> usize {
        self.shape.iter().product()
    }
}

pub fn write_array(dir: &Path, entry: &ArrayEntry, data: &[f32]) -> Result<()> {
    if data.len() != entry.count() {
        return Err(Error::Shape(format!(
            "array `{}` has {} values, shape {:?} needs {}",
            entry.name,
            data.len(),
            entry.shape,
            entry.count()
        )));
    }
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let path = dir.join(&entry.file);
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_array(dir: &Path, entry: &ArrayEntry) -> Result<Vec<f32>> {
    let path = dir.join(&entry.file);
    if entry.dtype != DTYPE_F32 || entry.byte_order != LITTLE_ENDIAN {
        return Err(Error::Corruption {
            path,
            msg: format!("unsupported dtype/byte order {}/{}", entry.dtype, entry.byte_order),
        });
    }
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let want = entry.count() * 4;
    if bytes.len() != want {
        return Err(Error::Corruption {
            path,
            msg: format!(
                "array `{}` holds {} bytes, manifest shape {:?} needs {want}",
                entry.name,
                bytes.len(),
                entry.shape
            ),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_manifest<M: Serialize>(dir: &Path, manifest: &M) -> Result<()> {
    let text = toml::to_string_pretty(manifest)
        .map_err(|e| Error::config("manifest", e.to_string()))?;
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Minimal header every manifest starts with.
#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

pub fn read_manifest<M: DeserializeOwned>(dir: &Path, format: &str, version: u32) -> Result<M> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let header: Header = toml::from_str(&text).map_err(|e| Error::Corruption {
        path: path.clone(),
        msg: e.to_string(),
    })?;
    if header.format != format {
        return Err(Error::Corruption {
            path,
            msg: format!("expected a `{format}` container, found `{}`", header.format),
        });
    }
    if header.version != version {
        return Err(Error::Version {
            found: header.version,
            expected: version,
        });
    }
    toml::from_str(&text).map_err(|e| Error::Corruption {
        path,
        msg: e.to_string(),
    })
}

/// Builds a directory via `fill` in a temporary sibling and renames it to
/// `path`, replacing any previous container there.
pub fn write_dir_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&Path) -> Result<()>,
{
    let parent = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::config("path", format!("{} has no file name", path.display())))?
        .to_string_lossy()
        .into_owned();
    let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    if let Err(e) = fill(&tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if path.exists() {
        fs::remove_dir_all(path).map_err(|e| Error::io(path, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declared_shape_matches_byte_count() {
        let dir = tempfile::tempdir().unwrap();
        let entry = ArrayEntry::f32("field", vec![30, 64, 64]);
        let data: Vec<f32> = (0..30 * 64 * 64).map(|i| i as f32 * 0.5).collect();
        write_array(dir.path(), &entry, &data).unwrap();
        let len = fs::metadata(dir.path().join("field.f32")).unwrap().len();
        assert_eq!(len, 491_520);
        assert_eq!(read_array(dir.path(), &entry).unwrap(), data);
    }

    #[test]
    fn truncated_array_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let entry = ArrayEntry::f32("a", vec![4, 4]);
        write_array(dir.path(), &entry, &[1.0; 16]).unwrap();
        let p = dir.path().join("a.f32");
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_array(dir.path(), &entry), Err(Error::Corruption { .. })));
    }

    #[test]
    fn failed_fill_leaves_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("out");
        let r = write_dir_atomic(&target, |_| Err(Error::config("x", "boom")));
        assert!(r.is_err());
        assert!(!target.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
