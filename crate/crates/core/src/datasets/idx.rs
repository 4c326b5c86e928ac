//! IDX container: big-endian magic (0x0000_08nn, nn = number of dimensions),
//! big-endian u32 dimensions, then raw unsigned bytes.

use std::path::Path;

use crate::error::{Error, Result};

const MAGIC_IMAGES: u32 = 0x0000_0803;
const MAGIC_LABELS: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count · rows · cols` pixels, image-major then row-major.
    pub pixels: Vec<u8>,
}

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

fn header(bytes: &[u8], path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let need = 4 + 4 * dims;
    if bytes.len() < need {
        return Err(format_err(
            path,
            format!("file is {} bytes, shorter than the {need}-byte header", bytes.len()),
        ));
    }
    let word = |i: usize| u32::from_be_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let found = word(0);
    if found != magic {
        return Err(format_err(
            path,
            format!("bad magic number {found:#010x}, expected {magic:#010x}"),
        ));
    }
    Ok((0..dims).map(|d| word(4 + 4 * d) as usize).collect())
}

fn payload<'a>(bytes: &'a [u8], path: &Path, offset: usize, len: usize) -> Result<&'a [u8]> {
    let have = bytes.len() - offset;
    if have < len {
        return Err(format_err(
            path,
            format!("truncated: header declares {len} data bytes, found {have}"),
        ));
    }
    if have > len {
        return Err(format_err(
            path,
            format!("{} trailing bytes after declared data", have - len),
        ));
    }
    Ok(&bytes[offset..])
}

/// `path` only labels errors.
pub fn decode_idx_images(bytes: &[u8], path: &Path) -> Result<IdxImages> {
    let dims = header(bytes, path, MAGIC_IMAGES, 3)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let pixels = payload(bytes, path, 16, count * rows * cols)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn decode_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let dims = header(bytes, path, MAGIC_LABELS, 1)?;
    Ok(payload(bytes, path, 8, dims[0])?.to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for word in [MAGIC_IMAGES, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&MAGIC_LABELS.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
