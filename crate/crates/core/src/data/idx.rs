//! IDX files: big-endian header, unsigned byte payload.

use std::fs;
use std::path::Path;

use super::{ImageBatch, Provenance};
use crate::autodiff::Matrix;
use crate::error::{CdganError, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| CdganError::Format {
            offset: offset as u64,
            msg: format!("file ends inside the header ({} bytes)", bytes.len()),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(CdganError::Format {
            offset: 0,
            msg: format!("bad magic: expected {expected:#010x}, found {found:#010x}"),
        });
    }
    Ok(())
}

/// Returns `(count, rows, cols, pixels)` from an image file's bytes.
pub fn read_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let need = n * rows * cols;
    let payload = &bytes[16..];
    if payload.len() != need {
        return Err(CdganError::Format {
            offset: 16,
            msg: format!("header promises {n}x{rows}x{cols} = {need} pixel bytes, found {}", payload.len()),
        });
    }
    Ok((n, rows, cols, payload))
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(CdganError::Format {
            offset: 8,
            msg: format!("header promises {n} labels, found {}", payload.len()),
        });
    }
    Ok(payload)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CdganError::io(path, e))
}

/// Loads an image file (and optionally its labels), rescaling bytes to `[-1, 1]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: Option<&Path>) -> Result<ImageBatch> {
    let bytes = read(images_path.as_ref())?;
    let (n, rows, cols, pixels) = read_idx_images(&bytes)?;
    if n == 0 || rows == 0 || cols == 0 {
        return Err(CdganError::Format {
            offset: 4,
            msg: format!("empty image file: {n}x{rows}x{cols}"),
        });
    }
    let data = pixels.iter().map(|&b| b as f32 / 127.5 - 1.0).collect();
    let images = Matrix::new(n, rows * cols, data)?;
    let labels = match labels_path {
        Some(p) => {
            let lb = read(p)?;
            let l = read_idx_labels(&lb)?;
            if l.len() != n {
                return Err(CdganError::Format {
                    offset: 4,
                    msg: format!("label count {} does not match image count {n}", l.len()),
                });
            }
            Some(l.iter().map(|&v| v as usize).collect())
        }
        None => None,
    };
    Ok(ImageBatch {
        images,
        labels,
        height: rows,
        width: cols,
        provenance: Provenance::IdxFile,
    })
}

fn quantize(v: f32) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round()) as u8
}

/// Writes the images (and labels, when present and a path is given).
pub fn write_idx(batch: &ImageBatch, images_path: impl AsRef<Path>, labels_path: Option<&Path>) -> Result<()> {
    let mut out = Vec::with_capacity(16 + batch.images.as_slice().len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for d in [batch.len(), batch.height, batch.width] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend(batch.images.as_slice().iter().map(|&v| quantize(v)));
    let ip = images_path.as_ref();
    fs::write(ip, out).map_err(|e| CdganError::io(ip, e))?;

    if let (Some(lp), Some(labels)) = (labels_path, &batch.labels) {
        let mut out = Vec::with_capacity(8 + labels.len());
        out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        for &l in labels {
            let b = u8::try_from(l).map_err(|_| CdganError::validation(format!("label {l} does not fit a byte")))?;
            out.push(b);
        }
        fs::write(lp, out).map_err(|e| CdganError::io(lp, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        // four 2x2 images
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 2];
        img.extend_from_slice(&[0, 255, 0, 255, 255, 255, 255, 255, 0, 0, 0, 0, 51, 102, 153, 204]);
        let lab = vec![0, 0, 8, 1, 0, 0, 0, 4, 1, 0, 2, 1];
        let ip = dir.join("img.idx");
        let lp = dir.join("lab.idx");
        fs::write(&ip, img).unwrap();
        fs::write(&lp, lab).unwrap();
        (ip, lp)
    }

    #[test]
    fn loads_handcrafted_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        let b = load_idx(&ip, Some(&lp)).unwrap();
        assert_eq!(b.images.shape(), [4, 4]);
        assert_eq!(b.images.row(0), &[-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(b.images.row(1), &[1.0; 4]);
        assert_eq!(b.images.row(2), &[-1.0; 4]);
        let r3 = b.images.row(3);
        for (got, byte) in r3.iter().zip([51u8, 102, 153, 204]) {
            assert!((got - (byte as f32 / 127.5 - 1.0)).abs() < 1e-7);
        }
        assert_eq!(b.labels.unwrap(), vec![1, 0, 2, 1]);
        assert_eq!((b.height, b.width), (2, 2));
    }

    #[test]
    fn wrong_magic_names_both_values() {
        let dir = tempfile::tempdir().unwrap();
        let (_, lp) = fixture(dir.path());
        let err = load_idx(&lp, None).unwrap_err().to_string();
        assert!(err.contains("0x00000803") && err.contains("0x00000801"), "{err}");
        assert!(err.contains("offset 0"));
    }

    #[test]
    fn label_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, _) = fixture(dir.path());
        let lp = dir.path().join("short.idx");
        fs::write(&lp, [0, 0, 8, 1, 0, 0, 0, 3, 1, 0, 2]).unwrap();
        assert!(matches!(load_idx(&ip, Some(&lp)), Err(CdganError::Format { .. })));
    }

    #[test]
    fn write_then_load_is_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let batch = ImageBatch {
            images: Matrix::from_fn(3, 9, |i, j| ((i * 9 + j) as f32 / 13.0).sin()),
            labels: Some(vec![2, 0, 1]),
            height: 3,
            width: 3,
            provenance: Provenance::Synthetic,
        };
        let ip = dir.path().join("a.idx");
        let lp = dir.path().join("b.idx");
        write_idx(&batch, &ip, Some(&lp)).unwrap();
        let back = load_idx(&ip, Some(&lp)).unwrap();
        assert_eq!(back.labels, batch.labels);
        for (a, b) in back.images.as_slice().iter().zip(batch.images.as_slice()) {
            assert!((a - b).abs() <= 1.0 / 255.0 + 1e-6);
        }
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(-1.0), 0);
    }
}
