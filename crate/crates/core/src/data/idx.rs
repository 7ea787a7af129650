//! IDX containers: big-endian, `0x00000803` for u8 images and `0x00000801`
//! for u8 labels.

use std::path::Path;

use ndarray::Array2;

use super::{read_file, LabeledDataset};
use crate::error::{KmlpError, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    name: String,
}

impl Reader<'_> {
    fn err(&self, offset: usize, msg: impl Into<String>) -> KmlpError {
        KmlpError::format(format!("{} offset {offset}", self.name), msg)
    }

    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let Some(b) = self.bytes.get(self.pos..end) else {
            return Err(self.err(self.pos, "file ends inside the header"));
        };
        self.pos = end;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, want: u32) -> Result<()> {
        let got = self.u32()?;
        if got != want {
            return Err(self.err(0, format!("magic number {got:#010x}, expected {want:#010x}")));
        }
        Ok(())
    }

    fn body(&self, len: usize) -> Result<&[u8]> {
        let have = self.bytes.len() - self.pos;
        if have < len {
            return Err(self.err(
                self.bytes.len(),
                format!("truncated: {len} data bytes expected, {have} present"),
            ));
        }
        if have > len {
            return Err(self.err(self.pos + len, format!("{} trailing bytes", have - len)));
        }
        Ok(&self.bytes[self.pos..])
    }
}

/// Raw image bytes with their `(count, rows, cols)` header.
pub fn read_idx_images(bytes: &[u8], name: &str) -> Result<(Vec<u8>, [usize; 3])> {
    let mut r = Reader {
        bytes,
        pos: 0,
        name: name.to_string(),
    };
    r.magic(IMAGES_MAGIC)?;
    let n = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let len = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| r.err(4, "image dimensions overflow"))?;
    Ok((r.body(len)?.to_vec(), [n, rows, cols]))
}

pub fn read_idx_labels(bytes: &[u8], name: &str) -> Result<Vec<u8>> {
    let mut r = Reader {
        bytes,
        pos: 0,
        name: name.to_string(),
    };
    r.magic(LABELS_MAGIC)?;
    let n = r.u32()? as usize;
    Ok(r.body(n)?.to_vec())
}

/// Images flattened row-major and scaled by 1/255.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (images, labels) = (images.as_ref(), labels.as_ref());
    let (pixels, [n, rows, cols]) =
        read_idx_images(&read_file(images)?, &images.display().to_string())?;
    let ys = read_idx_labels(&read_file(labels)?, &labels.display().to_string())?;
    if ys.len() != n {
        return Err(KmlpError::format(
            format!("{} offset 4", labels.display()),
            format!("{} labels for {n} images", ys.len()),
        ));
    }
    let features = Array2::from_shape_vec((n, rows * cols), pixels)
        .expect("length checked against header")
        .mapv(|b| f64::from(b) / 255.0);
    LabeledDataset::new(features, ys.into_iter().map(usize::from).collect())
}

/// Write features as u8 pixels (`round(255 v)`) of `rows x cols` images.
///
/// Features must lie in [0, 1] and labels below 256.
pub fn write_idx(
    ds: &LabeledDataset,
    rows: usize,
    cols: usize,
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
) -> Result<()> {
    if rows * cols != ds.dim() {
        return Err(KmlpError::invalid(format!(
            "{rows}x{cols} images do not hold {} features",
            ds.dim()
        )));
    }
    if ds.features.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(KmlpError::invalid("IDX pixels need features in [0, 1]"));
    }
    if ds.labels.iter().any(|&y| y > 255) {
        return Err(KmlpError::invalid("IDX labels must fit in a byte"));
    }
    let dims = |v: usize| {
        u32::try_from(v).map_err(|_| KmlpError::invalid(format!("dimension {v} exceeds u32")))
    };
    let mut img = Vec::with_capacity(16 + ds.features.len());
    img.extend(IMAGES_MAGIC.to_be_bytes());
    for d in [ds.len(), rows, cols] {
        img.extend(dims(d)?.to_be_bytes());
    }
    img.extend(ds.features.iter().map(|v| (v * 255.0).round() as u8));
    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend(LABELS_MAGIC.to_be_bytes());
    lab.extend(dims(ds.len())?.to_be_bytes());
    lab.extend(ds.labels.iter().map(|&y| y as u8));

    let (images, labels) = (images.as_ref(), labels.as_ref());
    std::fs::write(images, img).map_err(|e| KmlpError::io(images, e))?;
    std::fs::write(labels, lab).map_err(|e| KmlpError::io(labels, e))
}
