//! SemanticKITTI file formats.
//!
//! Scans are packed little-endian `f32` quadruples (x, y, z, remission).
//! Labels are packed little-endian `u32` words with the semantic class in
//! the low 16 bits and the instance id in the high 16 bits.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::PanopticFrame;
use crate::range_image::{Point, PointCloud};

pub const SCAN_EXTENSION: &str = "bin";
pub const LABEL_EXTENSION: &str = "label";

/// Files belonging to one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePaths {
    pub scan: PathBuf,
    pub labels: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn decode_scan(bytes: &[u8]) -> std::result::Result<Vec<Point>, String> {
    if !bytes.len().is_multiple_of(16) {
        return Err(format!("{} bytes is not a multiple of 16", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes([c[i], c[i + 1], c[i + 2], c[i + 3]]);
            Point::new(f(0), f(4), f(8), f(12))
        })
        .collect())
}

pub fn encode_scan(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * 16);
    for p in cloud.points() {
        for v in [p.x, p.y, p.z, p.remission] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_scan(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let points = decode_scan(&bytes).map_err(|r| malformed(path, r))?;
    PointCloud::new(points).map_err(|e| malformed(path, e.to_string()))
}

pub fn write_scan(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_scan(cloud))
}

pub fn encode_label(semantic: u32, instance: u32) -> Result<u32> {
    if semantic > 0xFFFF {
        return Err(Error::LabelOverflow {
            field: "semantic",
            value: semantic,
        });
    }
    if instance > 0xFFFF {
        return Err(Error::LabelOverflow {
            field: "instance",
            value: instance,
        });
    }
    Ok(instance << 16 | semantic)
}

pub fn decode_label(word: u32) -> (u32, u32) {
    (word & 0xFFFF, word >> 16)
}

/// Reads a label file. When `n_points` is given the word count must match.
pub fn read_labels(path: impl AsRef<Path>, n_points: Option<usize>) -> Result<PanopticFrame> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if !bytes.len().is_multiple_of(4) {
        return Err(malformed(path, format!("{} bytes is not a multiple of 4", bytes.len())));
    }
    let n = bytes.len() / 4;
    if let Some(expected) = n_points {
        if expected != n {
            return Err(malformed(path, format!("expected {expected} labels, found {n}")));
        }
    }
    let (semantics, instances) = bytes
        .chunks_exact(4)
        .map(|c| decode_label(u32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .unzip();
    Ok(PanopticFrame { semantics, instances })
}

pub fn encode_labels(semantics: &[u32], instances: &[u32]) -> Result<Vec<u8>> {
    if semantics.len() != instances.len() {
        return Err(Error::LengthMismatch {
            what: "instance labels",
            expected: semantics.len(),
            actual: instances.len(),
        });
    }
    let mut out = Vec::with_capacity(semantics.len() * 4);
    for (&s, &i) in semantics.iter().zip(instances) {
        out.extend_from_slice(&encode_label(s, i)?.to_le_bytes());
    }
    Ok(out)
}

pub fn write_labels(semantics: &[u32], instances: &[u32], path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_labels(semantics, instances)?;
    write_atomic(path.as_ref(), &bytes)
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| malformed(path, "no file name"))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Files in `dir` with extension `ext`, as (stem, path) sorted by stem.
pub fn list_frames(dir: impl AsRef<Path>, ext: &str) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_file() || path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.push((stem.to_string(), path.clone()));
        }
    }
    out.sort();
    Ok(out)
}

/// Points whose semantic class is in `classes`.
pub fn class_mask(semantics: &[u32], classes: &std::collections::BTreeSet<u32>) -> Vec<bool> {
    semantics.iter().map(|s| classes.contains(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_file_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        fs::write(&p, []).unwrap();
        assert!(read_scan(&p).unwrap().is_empty());

        let cloud = PointCloud::new(vec![Point::new(1.0, 2.0, 3.0, 0.5)]).unwrap();
        write_scan(&cloud, &p).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 16);
        assert_eq!(read_scan(&p).unwrap(), cloud);

        fs::write(&p, [0u8; 17]).unwrap();
        assert!(matches!(read_scan(&p), Err(Error::Malformed { .. })));
    }

    #[test]
    fn label_bits() {
        assert_eq!(decode_label(0x0001_000A), (10, 1));
        assert_eq!(decode_label(0), (0, 0));
        assert_eq!(encode_label(10, 1).unwrap(), 0x0001_000A);
        assert!(encode_label(1 << 16, 0).is_err());
        assert!(encode_label(0, 1 << 16).is_err());
    }

    #[test]
    fn label_file_round_trip_and_count_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("000000.label");
        write_labels(&[10, 0, 40], &[1, 0, 0], &p).unwrap();
        let f = read_labels(&p, Some(3)).unwrap();
        assert_eq!(f.semantics, vec![10, 0, 40]);
        assert_eq!(f.instances, vec![1, 0, 0]);
        assert!(read_labels(&p, Some(4)).is_err());
        assert_eq!(read_labels(&p, None).unwrap().len(), 3);
        assert!(write_labels(&[1], &[], &p).is_err());
    }

    #[test]
    fn lists_frames_by_stem() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["000002.bin", "000001.bin", "notes.txt"] {
            fs::write(dir.path().join(name), []).unwrap();
        }
        let frames = list_frames(dir.path(), SCAN_EXTENSION).unwrap();
        let stems: Vec<_> = frames.iter().map(|(s, _)| s.as_str()).collect();
        assert_eq!(stems, ["000001", "000002"]);
    }
}
