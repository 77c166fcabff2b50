//! Image references. Corpora store images by reference; a resolver maps a
//! reference to a file when a backend needs the bytes.

use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImageResolver {
    root: Option<PathBuf>,
}

impl ImageResolver {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ImageResolver { root: Some(root.into()) }
    }

    /// A resolver that accepts any non-empty reference without touching the
    /// filesystem.
    pub fn unchecked() -> Self {
        ImageResolver { root: None }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn checks_files(&self) -> bool {
        self.root.is_some()
    }

    /// Returns the file path for `reference`, or `None` when it does not
    /// resolve.
    pub fn resolve(&self, reference: &str) -> Option<PathBuf> {
        if reference.is_empty() {
            return None;
        }
        let path = Path::new(reference);
        let full = match &self.root {
            None => return Some(path.to_path_buf()),
            Some(_) if path.is_absolute() => path.to_path_buf(),
            Some(root) => root.join(path),
        };
        full.is_file().then_some(full)
    }

    pub fn read(&self, reference: &str) -> Option<Vec<u8>> {
        std::fs::read(self.resolve(reference)?).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_relative_to_root() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("img")).unwrap();
        std::fs::write(dir.path().join("img/a.png"), b"png").unwrap();
        let r = ImageResolver::new(dir.path());
        assert!(r.resolve("img/a.png").is_some());
        assert!(r.resolve("img/missing.png").is_none());
        assert_eq!(r.read("img/a.png").unwrap(), b"png");
        assert!(ImageResolver::unchecked().resolve("anything").is_some());
        assert!(ImageResolver::unchecked().resolve("").is_none());
    }
}
