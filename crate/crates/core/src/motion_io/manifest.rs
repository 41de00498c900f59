use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub split: Split,
}

/// Dataset listing for one structure, stored as TOML:
///
/// ```toml
/// structure_id = "A"
/// fps = 30
///
/// [[files]]
/// path = "walk.bvh"
/// split = "train"
/// ```
///
/// Relative paths resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub structure_id: String,
    pub fps: u32,
    pub files: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn from_toml(text: &str, base: &Path) -> Result<DatasetManifest> {
        let mut m: DatasetManifest = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for f in &mut m.files {
            if f.path.is_relative() {
                f.path = base.join(&f.path);
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        DatasetManifest::from_toml(&text, base).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.structure_id.trim().is_empty() {
            return Err(Error::Config("structure_id is empty".into()));
        }
        if self.fps == 0 {
            return Err(Error::Config("fps must be positive".into()));
        }
        let mut seen: BTreeMap<&Path, Split> = BTreeMap::new();
        for f in &self.files {
            if let Some(prev) = seen.insert(&f.path, f.split) {
                let msg = if prev == f.split { "listed twice" } else { "listed in both splits" };
                return Err(Error::Config(format!("{} is {msg}", f.path.display())));
            }
            if !f.path.is_file() {
                return Err(io(&f.path, std::io::Error::new(std::io::ErrorKind::NotFound, "listed file not found")));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Path> {
        self.files.iter().filter(move |f| f.split == split).map(|f| f.path.as_path())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir() -> PathBuf {
        let d = std::env::temp_dir().join(format!("partret-manifest-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        for f in ["a.bvh", "b.bvh"] {
            std::fs::write(d.join(f), "").unwrap();
        }
        d
    }

    #[test]
    fn loads_and_resolves_relative_paths() {
        let d = dir();
        let text = "structure_id = \"A\"\nfps = 30\n[[files]]\npath = \"a.bvh\"\nsplit = \"train\"\n[[files]]\npath = \"b.bvh\"\nsplit = \"test\"\n";
        let m = DatasetManifest::from_toml(text, &d).unwrap();
        assert_eq!(m.split(Split::Train).collect::<Vec<_>>(), vec![d.join("a.bvh").as_path()]);
        assert_eq!(m.split(Split::Test).count(), 1);
    }

    #[test]
    fn rejects_shared_files_and_missing_paths() {
        let d = dir();
        let both = "structure_id = \"A\"\nfps = 30\n[[files]]\npath = \"a.bvh\"\nsplit = \"train\"\n[[files]]\npath = \"a.bvh\"\nsplit = \"test\"\n";
        assert!(matches!(DatasetManifest::from_toml(both, &d), Err(Error::Config(_))));
        let missing = "structure_id = \"A\"\nfps = 30\n[[files]]\npath = \"zzz.bvh\"\nsplit = \"train\"\n";
        assert!(matches!(DatasetManifest::from_toml(missing, &d), Err(Error::Io { .. })));
        let unknown = "structure_id = \"A\"\nfps = 30\ncolor = 1\nfiles = []\n";
        assert!(matches!(DatasetManifest::from_toml(unknown, &d), Err(Error::Config(_))));
    }
}
