//! On-disk dataset layout and file formats.
//!
//! ```text
//! <root>/
//!   config.json                  build configuration
//!   stats.json                   normalization + label statistics
//!   splits.json                  train/val/test sequence names
//!   <sequence>/
//!     {ea,er,ed,ra,da}/<frame_id>.bin    heatmap, little-endian f32 row-major
//!     {ea,er,ed,ra,da}/<frame_id>.json   sidecar metadata
//!     annotations/<frame_id>.png         mask, 8-bit gray, 0=background 255=person
//! ```

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageFormat};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::ViewId;
use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};
use crate::projection::NormStats;

use super::DatasetStats;

/// Identifier of a frame within a dataset: `<sequence>_<index:06>`.
pub fn frame_id(sequence: &str, index: usize) -> String {
    format!("{sequence}_{index:06}")
}

/// Path helper for a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    root: PathBuf,
}

impl DatasetPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetPaths { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_file(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn stats_file(&self) -> PathBuf {
        self.root.join("stats.json")
    }

    pub fn splits_file(&self) -> PathBuf {
        self.root.join("splits.json")
    }

    pub fn sequence_dir(&self, sequence: &str) -> PathBuf {
        self.root.join(sequence)
    }

    pub fn view_dir(&self, sequence: &str, view: ViewId) -> PathBuf {
        self.sequence_dir(sequence).join(view.name())
    }

    pub fn heatmap_file(&self, sequence: &str, view: ViewId, frame_id: &str) -> PathBuf {
        self.view_dir(sequence, view).join(format!("{frame_id}.bin"))
    }

    pub fn sidecar_file(&self, sequence: &str, view: ViewId, frame_id: &str) -> PathBuf {
        self.view_dir(sequence, view)
            .join(format!("{frame_id}.json"))
    }

    pub fn annotations_dir(&self, sequence: &str) -> PathBuf {
        self.sequence_dir(sequence).join("annotations")
    }

    pub fn mask_file(&self, sequence: &str, frame_id: &str) -> PathBuf {
        self.annotations_dir(sequence).join(format!("{frame_id}.png"))
    }
}

/// Per-view frame metadata stored next to each heatmap file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSidecar {
    pub frame_id: String,
    pub view: String,
    pub rows: usize,
    pub cols: usize,
    pub timestamp_ns: u64,
}

/// Contents of `stats.json`: per-view normalization ranges plus label stats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsFile {
    pub norm: NormStats,
    pub class: DatasetStats,
}

/// Write a value as pretty-printed JSON with a trailing newline. Output bytes
/// are deterministic for a given value (all maps here are plain structs).
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| {
        Error::Dataset(format!("{}: invalid JSON: {e}", path.display()))
    })
}

/// Write a heatmap as raw little-endian f32 cells, row-major, no header.
pub fn write_heatmap(path: &Path, grid: &Grid) -> Result<()> {
    let mut bytes = Vec::with_capacity(grid.data().len() * 4);
    for v in grid.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a heatmap written by [`write_heatmap`]; the expected dimensions come
/// from the caller (sidecar or dataset config) since the file has no header.
pub fn read_heatmap(path: &Path, rows: usize, cols: usize) -> Result<Grid> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = rows * cols * 4;
    if bytes.len() != expected {
        return Err(Error::Dataset(format!(
            "{}: expected {expected} bytes for a {rows}x{cols} heatmap, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Grid::from_vec(rows, cols, data))
}

/// Write a mask as an 8-bit grayscale PNG (0 = background, 255 = person).
pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    let pixels: Vec<u8> = mask.data().iter().map(|&v| v * 255).collect();
    let img = GrayImage::from_raw(mask.cols() as u32, mask.rows() as u32, pixels)
        .expect("pixel buffer matches mask dimensions");
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a mask PNG written by [`write_mask_png`]. Only 8-bit grayscale images
/// with pixel values exactly 0 or 255 are accepted.
pub fn read_mask_png(path: &Path) -> Result<Mask> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)?;
    let DynamicImage::ImageLuma8(gray) = img else {
        return Err(Error::Dataset(format!(
            "{}: mask must be an 8-bit grayscale PNG",
            path.display()
        )));
    };
    let (cols, rows) = (gray.width() as usize, gray.height() as usize);
    let mut data = Vec::with_capacity(rows * cols);
    for &px in gray.as_raw() {
        data.push(match px {
            0 => 0,
            255 => 1,
            other => {
                return Err(Error::Dataset(format!(
                    "{}: mask pixel value {other} is neither 0 nor 255",
                    path.display()
                )))
            }
        });
    }
    Ok(Mask::from_vec(rows, cols, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_ids_are_zero_padded() {
        assert_eq!(frame_id("seq01", 7), "seq01_000007");
        assert_eq!(frame_id("s", 123_456), "s_123456");
    }

    #[test]
    fn heatmap_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let grid = Grid::from_vec(2, 3, vec![0.0, -1.5, f32::MIN_POSITIVE, 70.6, 1e-40, 132.6]);
        write_heatmap(&path, &grid).unwrap();
        let back = read_heatmap(&path, 2, 3).unwrap();
        for (a, b) in grid.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(read_heatmap(&path, 3, 3).is_err(), "length mismatch");
    }

    #[test]
    fn mask_png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mut mask = Mask::zeros(4, 5);
        mask.set(0, 0, 1);
        mask.set(3, 4, 1);
        write_mask_png(&path, &mask).unwrap();
        assert_eq!(read_mask_png(&path).unwrap(), mask);
    }

    #[test]
    fn mask_png_rejects_gray_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.png");
        let img = GrayImage::from_raw(2, 1, vec![0, 128]).unwrap();
        img.save(&path).unwrap();
        let err = read_mask_png(&path).unwrap_err();
        assert!(err.to_string().contains("neither 0 nor 255"), "{err}");
    }

    #[test]
    fn mask_png_rejects_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        let img = image::RgbImage::from_raw(1, 1, vec![255, 0, 0]).unwrap();
        img.save(&path).unwrap();
        assert!(read_mask_png(&path).is_err());
    }

    #[test]
    fn json_write_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        let sidecar = ViewSidecar {
            frame_id: "s_000000".into(),
            view: "ea".into(),
            rows: 128,
            cols: 128,
            timestamp_ns: 42,
        };
        write_json_file(&a, &sidecar).unwrap();
        write_json_file(&b, &sidecar).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let back: ViewSidecar = read_json_file(&a).unwrap();
        assert_eq!(back, sidecar);
    }

    #[test]
    fn paths_compose() {
        let p = DatasetPaths::new("/tmp/ds");
        assert_eq!(
            p.heatmap_file("seq", ViewId::Ra, "seq_000001"),
            PathBuf::from("/tmp/ds/seq/ra/seq_000001.bin")
        );
        assert_eq!(
            p.mask_file("seq", "seq_000001"),
            PathBuf::from("/tmp/ds/seq/annotations/seq_000001.png")
        );
        assert_eq!(p.stats_file(), PathBuf::from("/tmp/ds/stats.json"));
    }
}
