use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::body_parts::PartitionSource;
use crate::error::{io, Error, Result};
use crate::evaluation::FidConfig;
use crate::networks::NetConfig;
use crate::training::{AdvConvention, LossWeights, Mode, TrainConfig};

/// Environment variable naming the root for relative run directories.
pub const RUN_ROOT_ENV: &str = "PARTRET_RUN_ROOT";

/// One skeletal structure of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureConfig {
    pub id: String,
    pub manifest: PathBuf,
    /// Preset name or partition file.
    pub partition: PartitionSource,
}

/// Training hyperparameters; mode and seed live at the top level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gd_ratio: usize,
    pub weights: LossWeights,
    #[serde(alias = "adv_convention")]
    pub adv: AdvConvention,
    pub net: NetConfig,
    /// Epochs between checkpoints; the last epoch is always saved.
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            epochs: t.epochs,
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            gd_ratio: t.gd_ratio,
            weights: t.weights,
            adv: t.adv,
            net: t.net,
            checkpoint_every: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub fid: bool,
    /// Clips drawn per side for FID.
    pub samples: usize,
    pub fid_model: FidConfig,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { fid: true, samples: 1200, fid_model: FidConfig::default() }
    }
}

/// Everything a run needs, loaded from TOML:
///
/// ```toml
/// mode = "humanoid"
/// seed = 0
/// run_dir = "runs/demo"
///
/// [[structures]]
/// id = "A"
/// manifest = "data/a.toml"
/// partition = "humanoid6"
///
/// [[structures]]
/// id = "B"
/// manifest = "data/b.toml"
/// partition = "humanoid6"
///
/// [train]
/// epochs = 100
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_run_dir")]
    pub run_dir: PathBuf,
    #[serde(default = "default_clip_len")]
    pub clip_len: usize,
    /// Frames between window starts; defaults to `clip_len`.
    #[serde(default)]
    pub window_stride: Option<usize>,
    /// Checkpoint to resume from or evaluate.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    pub structures: Vec<StructureConfig>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_run_dir() -> PathBuf {
    PathBuf::from("run")
}

fn default_clip_len() -> usize {
    64
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config and resolves its relative paths against the file's
    /// directory; the run directory resolves against `PARTRET_RUN_ROOT`
    /// when that is set.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
        let mut cfg = RunConfig::from_toml(&text).map_err(|e| e.context(path.display().to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base, std::env::var_os(RUN_ROOT_ENV).map(PathBuf::from).as_deref());
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path, run_root: Option<&Path>) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in &mut self.structures {
            join(&mut s.manifest);
            if let PartitionSource::File(p) = &mut s.partition {
                join(p);
            }
        }
        if let Some(c) = &mut self.checkpoint {
            join(c);
        }
        if self.run_dir.is_relative() {
            self.run_dir = run_root.unwrap_or(base).join(&self.run_dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.structures.len() != 2 {
            return Err(Error::Config(format!("expected exactly 2 structures, found {}", self.structures.len())));
        }
        if self.structures[0].id == self.structures[1].id {
            return Err(Error::Config(format!("structure ids must differ, both are `{}`", self.structures[0].id)));
        }
        if self.clip_len == 0 || self.clip_len % 4 != 0 {
            return Err(Error::BadLength(self.clip_len));
        }
        if self.window_stride == Some(0) {
            return Err(Error::Config("window_stride must be positive".into()));
        }
        if self.train.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        self.train_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            mode: self.mode,
            batch_size: t.batch_size,
            epochs: t.epochs,
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            gd_ratio: t.gd_ratio,
            seed: self.seed,
            weights: t.weights,
            adv: t.adv,
            net: t.net.clone(),
        }
    }

    pub fn window_stride(&self) -> usize {
        self.window_stride.unwrap_or(self.clip_len)
    }

    pub fn structure(&self, id: &str) -> Result<&StructureConfig> {
        self.structures
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::Config(format!("no structure `{id}` in the run config")))
    }

    pub fn prepared_dir(&self, id: &str) -> PathBuf {
        self.run_dir.join("prepared").join(id)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = "[[structures]]\nid = \"A\"\nmanifest = \"a.toml\"\npartition = \"humanoid6\"\n\
                       [[structures]]\nid = \"B\"\nmanifest = \"b.toml\"\npartition = \"parts.toml\"\n";

    #[test]
    fn defaults_and_paths() {
        let mut c = RunConfig::from_toml(MIN).unwrap();
        assert_eq!(c.clip_len, 64);
        assert_eq!(c.train_config().batch_size, 128);
        c.resolve_paths(Path::new("/cfg"), Some(Path::new("/runs")));
        assert_eq!(c.structures[0].manifest, Path::new("/cfg/a.toml"));
        assert_eq!(c.structures[1].partition, PartitionSource::File("/cfg/parts.toml".into()));
        assert_eq!(c.run_dir, Path::new("/runs/run"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = format!("colour = 3\n{MIN}");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = format!("{MIN}[train]\nepoch = 3\n");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = format!("clip_len = 30\n{MIN}");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::BadLength(30))));
    }

    #[test]
    fn snapshot_round_trips() {
        let c = RunConfig::from_toml(MIN).unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn adversarial_convention_spellings() {
        for text in ["adv = \"swapped\"", "adv_convention = \"paper_literal\""] {
            let c = RunConfig::from_toml(&format!("{MIN}[train]\n{text}\n")).unwrap();
            assert_eq!(c.train.adv, AdvConvention::Swapped);
        }
    }
}
