//! On-disk dataset layout: `<root>/<class_name>/<sample>.pgm`, class index
//! being the lexicographic rank of the class directory name. A generated
//! dataset holds one such tree per split under `train/` and `test/`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const TRAIN_SPLIT: &str = "train";
pub const TEST_SPLIT: &str = "test";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleFile {
    pub path: PathBuf,
    pub class: usize,
}

impl SampleFile {
    /// `<class>/<file>` relative to the dataset root.
    pub fn id(&self) -> String {
        let file = self.path.file_name().map(|f| f.to_string_lossy()).unwrap_or_default();
        let class = self
            .path
            .parent()
            .and_then(Path::file_name)
            .map(|f| f.to_string_lossy())
            .unwrap_or_default();
        format!("{class}/{file}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    root: PathBuf,
    classes: Vec<String>,
    samples: Vec<SampleFile>,
}

impl Dataset {
    /// Scan a class-per-directory tree. Fails if it holds no samples.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let mut classes: Vec<String> = read_dir_sorted(&root)?
            .into_iter()
            .filter(|p| p.is_dir())
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        classes.sort();
        let mut samples = Vec::new();
        for (class, name) in classes.iter().enumerate() {
            for path in read_dir_sorted(&root.join(name))? {
                if path.extension().is_some_and(|e| e == "pgm") && path.is_file() {
                    samples.push(SampleFile { path, class });
                }
            }
        }
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            root,
            classes,
            samples,
        })
    }

    /// Open `<root>/<split>` when it exists, else `root` itself.
    pub fn open_split(root: impl AsRef<Path>, split: &str) -> Result<Self> {
        Self::open(resolve_split(root.as_ref(), split))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn samples(&self) -> &[SampleFile] {
        &self.samples
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn samples_of(&self, class: usize) -> impl Iterator<Item = &SampleFile> {
        self.samples.iter().filter(move |s| s.class == class)
    }
}

pub fn resolve_split(root: &Path, split: &str) -> PathBuf {
    let candidate = root.join(split);
    if candidate.is_dir() {
        candidate
    } else {
        root.to_path_buf()
    }
}

/// Directory entries sorted by file name.
pub fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        paths.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    paths.sort();
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scans_classes_lexicographically() {
        let dir = tempfile::tempdir().unwrap();
        for (class, files) in [("zeta", 2), ("alpha", 1)] {
            fs::create_dir_all(dir.path().join(class)).unwrap();
            for i in 0..files {
                fs::write(dir.path().join(class).join(format!("{i}.pgm")), b"").unwrap();
            }
        }
        fs::write(dir.path().join("alpha").join("notes.txt"), b"").unwrap();
        let d = Dataset::open(dir.path()).unwrap();
        assert_eq!(d.classes(), &["alpha".to_string(), "zeta".to_string()]);
        assert_eq!(d.samples().len(), 3);
        assert_eq!(d.samples()[0].class, 0);
        assert_eq!(d.samples_of(1).count(), 2);
        assert_eq!(d.samples()[1].id(), "zeta/0.pgm");
    }

    #[test]
    fn empty_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Dataset::open(dir.path()), Err(Error::EmptyDataset)));
        assert!(matches!(
            Dataset::open(dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }
}
