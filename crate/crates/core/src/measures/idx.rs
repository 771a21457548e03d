//! IDX (MNIST) binary reader. Big-endian headers, u8 payloads.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::{LabeledPoint, WeightedDataset};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::TruncatedFile(format!("{what}: header ends at byte {}", bytes.len())))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let found = be_u32(bytes, 0, what)?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

/// Parses an images file, returning `(count, rows, cols, pixels)`.
fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    check_magic(bytes, IMAGES_MAGIC, "images")?;
    let count = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::TruncatedFile(format!(
            "images: expected {need} pixel bytes, found {}",
            body.len()
        )));
    }
    Ok((count, rows, cols, &body[..need]))
}

fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    check_magic(bytes, LABELS_MAGIC, "labels")?;
    let count = be_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::TruncatedFile(format!(
            "labels: expected {count} label bytes, found {}",
            body.len()
        )));
    }
    Ok(&body[..count])
}

/// Reads an IDX image/label pair into a uniform-weight measure with pixels
/// scaled to `[0, 1]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<WeightedDataset> {
    let img_bytes = fs::read(images_path)?;
    let lab_bytes = fs::read(labels_path)?;
    let (count, rows, cols, pixels) = parse_images(&img_bytes)?;
    let labels = parse_labels(&lab_bytes)?;
    if labels.len() != count {
        return Err(Error::DimMismatch(format!(
            "{count} images vs {} labels",
            labels.len()
        )));
    }
    let dim = rows * cols;
    if dim == 0 || count == 0 {
        return Err(Error::BadShape(format!("{count} images of {rows}x{cols}")));
    }
    let num_classes = 1 + *labels.iter().max().unwrap() as usize;
    let points = pixels
        .chunks_exact(dim)
        .zip(labels)
        .map(|(px, &y)| LabeledPoint::new(px.iter().map(|&b| b as f64 / 255.0).collect(), y as usize))
        .collect();
    WeightedDataset::uniform(points, num_classes)
}

/// Writes an IDX images file (used for fixtures and export).
pub fn write_idx_images(path: impl AsRef<Path>, rows: usize, cols: usize, images: &[Vec<u8>]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    for d in [images.len(), rows, cols] {
        f.write_all(&(d as u32).to_be_bytes())?;
    }
    for img in images {
        if img.len() != rows * cols {
            return Err(Error::DimMismatch(format!("image of {} bytes", img.len())));
        }
        f.write_all(img)?;
    }
    Ok(())
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&LABELS_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    f.write_all(labels)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_image_fixture_scales_endpoints() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        write_idx_images(&img, 1, 2, &[vec![0, 255], vec![255, 0]]).unwrap();
        write_idx_labels(&lab, &[0, 1]).unwrap();
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.num_classes(), 2);
        assert_eq!(ds.points()[0].features.as_slice(), &[0.0, 1.0]);
        assert_eq!(ds.points()[1].features.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn header_dims_are_big_endian() {
        // rows=3, cols=258 (0x0102) catches byte-order mistakes
        let mut bytes = IMAGES_MAGIC.to_be_bytes().to_vec();
        bytes.extend(1u32.to_be_bytes());
        bytes.extend(3u32.to_be_bytes());
        bytes.extend(258u32.to_be_bytes());
        bytes.extend(vec![7u8; 3 * 258]);
        let (count, rows, cols, px) = parse_images(&bytes).unwrap();
        assert_eq!((count, rows, cols, px.len()), (1, 3, 258, 774));
    }

    #[test]
    fn label_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        write_idx_images(&img, 1, 1, &[vec![1], vec![2]]).unwrap();
        write_idx_labels(&lab, &[0, 1, 1]).unwrap();
        assert!(matches!(load_idx(&img, &lab), Err(Error::DimMismatch(_))));
    }

    #[test]
    fn bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        write_idx_labels(&img, &[0]).unwrap();
        write_idx_labels(&lab, &[0]).unwrap();
        assert!(matches!(
            load_idx(&img, &lab),
            Err(Error::BadMagic { expected: IMAGES_MAGIC, found: LABELS_MAGIC })
        ));

        write_idx_images(&img, 2, 2, &[vec![0; 4], vec![0; 4]]).unwrap();
        let mut bytes = fs::read(&img).unwrap();
        bytes.truncate(bytes.len() - 1);
        fs::write(&img, bytes).unwrap();
        write_idx_labels(&lab, &[0, 1]).unwrap();
        assert!(matches!(load_idx(&img, &lab), Err(Error::TruncatedFile(_))));

        fs::write(&lab, [0u8, 0, 8]).unwrap();
        assert!(matches!(parse_labels(&fs::read(&lab).unwrap()), Err(Error::TruncatedFile(_))));
    }
}
