//! MNIST from the four canonical IDX files, with a fetch-and-cache client.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};

use super::idx::{decode_idx_images, decode_idx_labels};
use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::RealMatrix;

/// Overrides the cache root; files live under `<root>/mnist/`.
pub const DATA_DIR_ENV: &str = "KOOPNET_DATA_DIR";
/// Overrides the download base URL; files are fetched as `<base>/<name>.gz`.
pub const MNIST_URL_ENV: &str = "KOOPNET_MNIST_URL";
pub const DEFAULT_MNIST_URL: &str = "https://ossci-datasets.s3.amazonaws.com/mnist";
pub const FETCH_ATTEMPTS: usize = 3;

#[derive(Clone, Copy, Debug)]
pub struct MnistFile {
    pub name: &'static str,
    /// SHA-256 of the decompressed file.
    pub sha256: &'static str,
}

pub const MNIST_FILES: [MnistFile; 4] = [
    MnistFile {
        name: "train-images-idx3-ubyte",
        sha256: "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
    },
    MnistFile {
        name: "train-labels-idx1-ubyte",
        sha256: "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
    },
    MnistFile {
        name: "t10k-images-idx3-ubyte",
        sha256: "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
    },
    MnistFile {
        name: "t10k-labels-idx1-ubyte",
        sha256: "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
    },
];

/// `$KOOPNET_DATA_DIR`, else `$HOME/.cache/koopnet`.
pub fn default_cache_root() -> PathBuf {
    if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
        return PathBuf::from(dir);
    }
    let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    home.join(".cache").join("koopnet")
}

pub fn mnist_dir(cache_root: &Path) -> PathBuf {
    cache_root.join("mnist")
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn load_split(dir: &Path, images: &str, labels: &str, name: &str) -> Result<LabeledDataset> {
    let ipath = dir.join(images);
    let lpath = dir.join(labels);
    let img = decode_idx_images(&read(&ipath)?, &ipath)?;
    let lab = decode_idx_labels(&read(&lpath)?, &lpath)?;
    if img.count != lab.len() {
        return Err(Error::Format {
            path: lpath,
            detail: format!("{} labels for {} images", lab.len(), img.count),
        });
    }
    if let Some(bad) = lab.iter().find(|&&l| l > 9) {
        return Err(Error::Format {
            path: lpath,
            detail: format!("label {bad} outside 0..=9"),
        });
    }
    let features = img.rows * img.cols;
    let data = img.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let inputs = RealMatrix::from_vec(img.count, features, data)?;
    LabeledDataset::new(inputs, lab.into_iter().map(usize::from).collect(), 10, name, 0)
}

/// `(train, test)` from the IDX files in `dir`, pixels scaled to `[0, 1]`.
pub fn load_mnist(dir: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    let train = load_split(dir, MNIST_FILES[0].name, MNIST_FILES[1].name, "mnist-train")?;
    let test = load_split(dir, MNIST_FILES[2].name, MNIST_FILES[3].name, "mnist-test")?;
    Ok((train, test))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn get_gz(url: &str) -> std::result::Result<Vec<u8>, String> {
    let resp = ureq::get(url).call().map_err(|e| e.to_string())?;
    let mut gz = Vec::new();
    resp.into_body()
        .into_reader()
        .read_to_end(&mut gz)
        .map_err(|e| e.to_string())?;
    let mut raw = Vec::new();
    GzDecoder::new(gz.as_slice())
        .read_to_end(&mut raw)
        .map_err(|e| format!("gunzip: {e}"))?;
    Ok(raw)
}

/// Downloads any missing file into `mnist_dir(cache_root)`, verifying each
/// against its pinned digest. Files already present are left untouched.
pub fn fetch_mnist(cache_root: &Path, base_url: &str) -> Result<PathBuf> {
    let dir = mnist_dir(cache_root);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for file in MNIST_FILES {
        let dest = dir.join(file.name);
        if dest.exists() {
            continue;
        }
        let url = format!("{}/{}.gz", base_url.trim_end_matches('/'), file.name);
        let mut last = String::new();
        let mut bytes = None;
        for _ in 0..FETCH_ATTEMPTS {
            match get_gz(&url) {
                Ok(b) => {
                    bytes = Some(b);
                    break;
                }
                Err(e) => last = e,
            }
        }
        let bytes = bytes.ok_or_else(|| Error::Network {
            url: url.clone(),
            attempts: FETCH_ATTEMPTS,
            detail: last,
        })?;
        let actual = sha256_hex(&bytes);
        if actual != file.sha256 {
            return Err(Error::Checksum {
                file: file.name.to_string(),
                expected: file.sha256.to_string(),
                actual,
            });
        }
        let tmp = dir.join(format!("{}.part", file.name));
        fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))?;
    }
    Ok(dir)
}

/// Loads from the default cache, fetching from `$KOOPNET_MNIST_URL` (or the
/// default mirror) when files are missing.
pub fn load_or_fetch_mnist() -> Result<(LabeledDataset, LabeledDataset)> {
    let base = std::env::var(MNIST_URL_ENV).unwrap_or_else(|_| DEFAULT_MNIST_URL.to_string());
    let dir = fetch_mnist(&default_cache_root(), &base)?;
    load_mnist(&dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{encode_idx_images, encode_idx_labels, IdxImages};

    #[test]
    fn loads_small_files_and_scales_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let img = IdxImages {
            count: 2,
            rows: 1,
            cols: 2,
            pixels: vec![0, 255, 51, 102],
        };
        for (i, l) in [(0, 1), (2, 3)] {
            fs::write(dir.path().join(MNIST_FILES[i].name), encode_idx_images(&img)).unwrap();
            fs::write(dir.path().join(MNIST_FILES[l].name), encode_idx_labels(&[7, 2])).unwrap();
        }
        let (train, test) = load_mnist(dir.path()).unwrap();
        assert_eq!(train.inputs.as_slice(), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(test.labels, vec![7, 2]);
    }

    #[test]
    fn label_count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = IdxImages {
            count: 2,
            rows: 1,
            cols: 1,
            pixels: vec![0, 1],
        };
        fs::write(dir.path().join(MNIST_FILES[0].name), encode_idx_images(&img)).unwrap();
        fs::write(dir.path().join(MNIST_FILES[1].name), encode_idx_labels(&[1])).unwrap();
        assert!(matches!(load_mnist(dir.path()), Err(Error::Format { .. })));
    }
}
