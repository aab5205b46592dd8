use std::fs;
use std::path::{Path, PathBuf};

use super::protocol::ImageRef;
use crate::hashing::sha256_hex;

/// Content-addressed PNG storage: `<root>/<sha256>.png`.
#[derive(Debug, Clone)]
pub struct BlobStore {
    root: PathBuf,
}

impl BlobStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn put(&self, bytes: &[u8]) -> std::io::Result<ImageRef> {
        let sha256 = sha256_hex(bytes);
        let path = self.root.join(format!("{sha256}.png"));
        if !path.exists() {
            fs::create_dir_all(&self.root)?;
            let tmp = self.root.join(format!(".{sha256}.tmp{}", std::process::id()));
            fs::write(&tmp, bytes)?;
            fs::rename(&tmp, &path)?;
        }
        Ok(ImageRef { sha256, path: path.to_string_lossy().into_owned() })
    }

    /// Copies an existing image into the store.
    pub fn import(&self, image: &ImageRef) -> std::io::Result<ImageRef> {
        let bytes = fs::read(&image.path)?;
        self.put(&bytes)
    }

    pub fn contains(&self, image: &ImageRef) -> bool {
        Path::new(&image.path).exists()
    }
}

pub(crate) fn verify_blob(image: &ImageRef) -> bool {
    fs::read(&image.path).map(|b| sha256_hex(&b) == image.sha256).unwrap_or(false)
}
