use std::path::Path;
use std::sync::Arc;

use partret_autograd::Tensor;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{read_archive, write_archive};
use crate::error::{io, Error, Result};
use crate::motion_io::{localize_and_clip_with, parse_bvh, ClipOptions, DatasetManifest, MotionClip, NormStats, SkeletonDef, Split};

/// A clip with its origin.
#[derive(Clone, Debug)]
pub struct PreparedClip {
    /// `<file stem>#<window index>`; equal keys across structures mark
    /// paired ground truth.
    pub key: String,
    pub split: Split,
    pub clip: MotionClip,
}

/// Localized clips of one structure with train-split statistics.
#[derive(Clone, Debug)]
pub struct PreparedDataset {
    pub structure_id: String,
    pub fps: u32,
    pub clip_len: usize,
    pub clips: Vec<PreparedClip>,
    pub stats: NormStats,
    /// Files skipped as too short.
    pub skipped: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ClipMeta {
    key: String,
    split: Split,
    skeleton: usize,
    frame_time: f64,
}

#[derive(Serialize, Deserialize)]
struct DatasetMeta {
    structure_id: String,
    fps: u32,
    clip_len: usize,
    skeletons: Vec<SkeletonDef>,
    clips: Vec<ClipMeta>,
}

/// Per-split clip counts written next to the data.
#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub structure_id: String,
    pub fps: u32,
    pub clip_len: usize,
    pub skeletons: usize,
    pub train_clips: usize,
    pub test_clips: usize,
    pub skipped: Vec<String>,
}

const DATA_FILE: &str = "clips.bin";

fn same_geometry(a: &SkeletonDef, b: &SkeletonDef) -> bool {
    a.same_structure(b) && a.offsets == b.offsets && a.end_sites == b.end_sites && a.channels == b.channels
}

/// Shared skeleton for the character in `path`. Files with identical
/// geometry are one character, named after the directory of its first
/// file (with a numeric suffix if that name is taken).
fn character(known: &mut Vec<Arc<SkeletonDef>>, skel: &SkeletonDef, path: &Path) -> Result<Arc<SkeletonDef>> {
    if let Some(k) = known.iter().find(|k| same_geometry(k, skel)) {
        return Ok(k.clone());
    }
    let base = path
        .parent()
        .and_then(|d| d.file_name())
        .map_or_else(|| skel.name.clone(), |d| d.to_string_lossy().into_owned());
    let mut name = base.clone();
    let mut n = 2;
    while known.iter().any(|k| k.name == name) {
        name = format!("{base}_{n}");
        n += 1;
    }
    let mut renamed = skel.clone();
    renamed.name = name;
    let renamed = Arc::new(renamed);
    known.push(renamed.clone());
    Ok(renamed)
}

impl PreparedDataset {
    /// Parses, localizes and windows every manifest file. Files too short
    /// for one window are skipped and listed in `skipped`. Each character
    /// is named after the directory holding its files.
    pub fn build(manifest: &DatasetManifest, clip_len: usize, window_stride: usize) -> Result<PreparedDataset> {
        let opts = ClipOptions { clip_len, fps: manifest.fps, window_stride };
        let mut clips = Vec::new();
        let mut skipped = Vec::new();
        let mut reference: Option<Arc<SkeletonDef>> = None;
        let mut characters: Vec<Arc<SkeletonDef>> = Vec::new();
        for entry in &manifest.files {
            let (skel, mut raw) = parse_bvh(&entry.path)?;
            let ctx = || entry.path.display().to_string();
            match &reference {
                Some(r) if !r.same_structure(&skel) => {
                    return Err(Error::InvalidSkeleton(format!(
                        "topology differs from the first file of structure `{}`",
                        manifest.structure_id
                    ))
                    .context(ctx()));
                }
                Some(_) => {}
                None => reference = Some(skel.clone()),
            }
            raw.skeleton = character(&mut characters, &skel, &entry.path)?;
            let windows = match localize_and_clip_with(&raw, opts) {
                Ok(w) => w,
                Err(e @ Error::TooShort { .. }) => {
                    skipped.push(format!("{}: {e}", ctx()));
                    continue;
                }
                Err(e) => return Err(e.context(ctx())),
            };
            let stem = entry.path.file_stem().map_or_else(ctx, |s| s.to_string_lossy().into_owned());
            for (i, clip) in windows.into_iter().enumerate() {
                clips.push(PreparedClip { key: format!("{stem}#{i}"), split: entry.split, clip });
            }
        }
        let train: Vec<MotionClip> = clips.iter().filter(|c| c.split == Split::Train).map(|c| c.clip.clone()).collect();
        if train.is_empty() {
            return Err(Error::EmptyDataset(format!("structure `{}` has no training clips", manifest.structure_id)));
        }
        let stats = NormStats::compute(&train)?;
        Ok(PreparedDataset { structure_id: manifest.structure_id.clone(), fps: manifest.fps, clip_len, clips, stats, skipped })
    }

    pub fn split(&self, split: Split) -> Vec<&PreparedClip> {
        self.clips.iter().filter(|c| c.split == split).collect()
    }

    pub fn summary(&self) -> DatasetSummary {
        let mut skels: Vec<&SkeletonDef> = Vec::new();
        for c in &self.clips {
            if !skels.iter().any(|s| **s == *c.clip.skeleton) {
                skels.push(&c.clip.skeleton);
            }
        }
        DatasetSummary {
            structure_id: self.structure_id.clone(),
            fps: self.fps,
            clip_len: self.clip_len,
            skeletons: skels.len(),
            train_clips: self.split(Split::Train).len(),
            test_clips: self.split(Split::Test).len(),
            skipped: self.skipped.clone(),
        }
    }

    /// Writes `clips.bin`, `stats.json`, `splits.toml` and `summary.toml`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut skeletons: Vec<SkeletonDef> = Vec::new();
        let mut metas = Vec::with_capacity(self.clips.len());
        let mut tensors = Vec::with_capacity(self.clips.len());
        for c in &self.clips {
            let k = match skeletons.iter().position(|s| *s == *c.clip.skeleton) {
                Some(k) => k,
                None => {
                    skeletons.push((*c.clip.skeleton).clone());
                    skeletons.len() - 1
                }
            };
            metas.push(ClipMeta { key: c.key.clone(), split: c.split, skeleton: k, frame_time: c.clip.frame_time });
            tensors.push((c.key.clone(), c.clip.data.clone()));
        }
        let meta = DatasetMeta {
            structure_id: self.structure_id.clone(),
            fps: self.fps,
            clip_len: self.clip_len,
            skeletons,
            clips: metas,
        };
        let meta = serde_json::to_value(&meta).map_err(|e| Error::Config(e.to_string()))?;
        write_archive(&dir.join(DATA_FILE), &meta, &tensors)?;

        let write = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| io(&p, e))
        };
        write("stats.json", serde_json::to_string_pretty(&self.stats).map_err(|e| Error::Config(e.to_string()))?)?;
        let keys = |s: Split| self.split(s).iter().map(|c| format!("{:?}", c.key)).collect::<Vec<_>>().join(", ");
        write("splits.toml", format!("train = [{}]\ntest = [{}]\n", keys(Split::Train), keys(Split::Test)))?;
        write("summary.toml", toml::to_string(&self.summary()).map_err(|e| Error::Config(e.to_string()))?)
    }

    pub fn load(dir: &Path) -> Result<PreparedDataset> {
        let (meta, tensors) = read_archive(&dir.join(DATA_FILE))?;
        let meta: DatasetMeta = serde_json::from_value(meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let skeletons: Vec<Arc<SkeletonDef>> = meta.skeletons.into_iter().map(Arc::new).collect();
        if tensors.len() != meta.clips.len() {
            return Err(Error::Checkpoint(format!("{} lists {} clips but holds {}", dir.display(), meta.clips.len(), tensors.len())));
        }
        let clips = meta
            .clips
            .into_iter()
            .zip(tensors)
            .map(|(m, (_, data)): (ClipMeta, (String, Tensor))| {
                let skel = skeletons.get(m.skeleton).cloned().ok_or_else(|| Error::Checkpoint("bad skeleton index".into()))?;
                Ok(PreparedClip { key: m.key, split: m.split, clip: MotionClip::new(skel, data, m.frame_time)? })
            })
            .collect::<Result<Vec<_>>>()?;
        let stats_path = dir.join("stats.json");
        let text = std::fs::read_to_string(&stats_path).map_err(|e| io(&stats_path, e))?;
        let stats = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", stats_path.display())))?;
        let summary_path = dir.join("summary.toml");
        let skipped = std::fs::read_to_string(&summary_path)
            .ok()
            .and_then(|t| toml::from_str::<DatasetSummary>(&t).ok())
            .map(|s| s.skipped)
            .unwrap_or_default();
        Ok(PreparedDataset { structure_id: meta.structure_id, fps: meta.fps, clip_len: meta.clip_len, clips, stats, skipped })
    }
}
