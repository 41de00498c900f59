//! Named-tensor archive holding both structures' parameters, optimizer
//! moments and the metadata needed to retarget without training data.
//!
//! Layout: 8-byte magic `PANCKPT\0`, `u32` version, `u64` header length,
//! the UTF-8 JSON header, then every tensor's values as little-endian
//! `f64` in header order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use partret_autograd::{Adam, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::body_parts::BodyPartition;
use crate::error::{io, Error, Result};
use crate::motion_io::{NormStats, SkeletonDef};
use crate::networks::ModelParams;
use crate::training::{
    all_params_mut, StructureData, StructureModel, TrainConfig, Trainer, VelocityStats, STRUCTURE_TAGS,
};

pub const MAGIC: &[u8; 8] = b"PANCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// Writes `meta` and `tensors` in archive layout. The file is written
/// under a temporary name and renamed, so an existing archive at `path`
/// survives a failed write.
pub fn write_archive(path: &Path, meta: &serde_json::Value, tensors: &[(String, Tensor)]) -> Result<()> {
    let header = Header {
        meta: meta.clone(),
        tensors: tensors.iter().map(|(n, t)| TensorEntry { name: n.clone(), shape: t.shape().to_vec() }).collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let file = File::create(&tmp).map_err(|e| io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| io(&tmp, e));
    put(MAGIC)?;
    put(&VERSION.to_le_bytes())?;
    put(&(json.len() as u64).to_le_bytes())?;
    put(&json)?;
    for (_, t) in tensors {
        for v in t.data() {
            put(&v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| io(&tmp, e))?;
    drop(w);
    std::fs::rename(&tmp, path).map_err(|e| io(path, e))
}

/// Reads an archive written by [`write_archive`].
pub fn read_archive(path: &Path) -> Result<(serde_json::Value, Vec<(String, Tensor)>)> {
    let file = File::open(path).map_err(|e| io(path, e))?;
    let mut r = BufReader::new(file);
    let mut take = |n: usize| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Checkpoint(format!("{} is truncated", path.display())),
            _ => io(path, e),
        })?;
        Ok(buf)
    };
    if take(8)? != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
    let header: Header = serde_json::from_slice(&take(len)?).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        let data = take(n * 8)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        tensors.push((entry.name, Tensor::new(entry.shape, data)));
    }
    Ok((header.meta, tensors))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct StructureMeta {
    id: String,
    partition: BodyPartition,
    partition_digest: String,
    stats: NormStats,
    velocity: VelocityStats,
    skeletons: Vec<SkeletonDef>,
    frame_time: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    epoch: usize,
    step: u64,
    opt_g_steps: u64,
    opt_d_steps: u64,
    structures: Vec<StructureMeta>,
}

/// Models restored from a checkpoint, plus where training stopped.
pub struct LoadedModels {
    pub config: TrainConfig,
    pub models: [StructureModel; 2],
    pub epoch: usize,
    pub step: u64,
    opt: [(u64, Vec<(String, Tensor)>); 2],
}

impl LoadedModels {
    /// Model for a structure id.
    pub fn structure(&self, id: &str) -> Result<&StructureModel> {
        self.models.iter().find(|m| m.id == id).ok_or_else(|| {
            Error::Config(format!(
                "checkpoint has structures `{}` and `{}`, not `{id}`",
                self.models[0].id, self.models[1].id
            ))
        })
    }
}

/// Saves the full training state of `trainer`.
pub fn save(trainer: &Trainer, path: &Path) -> Result<()> {
    let meta = Meta {
        config: trainer.config.clone(),
        epoch: trainer.epoch,
        step: trainer.step,
        opt_g_steps: trainer.opt_g.steps(),
        opt_d_steps: trainer.opt_d.steps(),
        structures: trainer
            .models
            .iter()
            .map(|m| StructureMeta {
                id: m.id.clone(),
                partition: m.partition().clone(),
                partition_digest: m.partition().digest(),
                stats: m.stats.clone(),
                velocity: m.velocity,
                skeletons: m.skeletons.iter().map(|s| (**s).clone()).collect(),
                frame_time: m.frame_time,
            })
            .collect(),
    };
    let mut models = trainer.models.clone();
    let mut tensors: Vec<(String, Tensor)> =
        all_params_mut(&mut models).into_iter().map(|(n, v)| (format!("param/{n}"), v.value().clone())).collect();
    tensors.extend(trainer.opt_g.state().into_iter().map(|(n, t)| (format!("opt_g/{n}"), t)));
    tensors.extend(trainer.opt_d.state().into_iter().map(|(n, t)| (format!("opt_d/{n}"), t)));
    let meta = serde_json::to_value(&meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
    write_archive(path, &meta, &tensors)
}

/// Restores models (and optimizer moments, kept for [`resume`]).
pub fn load(path: &Path) -> Result<LoadedModels> {
    let (meta, tensors) = read_archive(path)?;
    let meta: Meta = serde_json::from_value(meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if meta.structures.len() != 2 {
        return Err(Error::Checkpoint(format!("expected 2 structures, found {}", meta.structures.len())));
    }
    let mut named: BTreeMap<String, Tensor> = tensors.into_iter().collect();
    // Shapes come from a throwaway initialization; values are overwritten.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut build = |s: &StructureMeta| -> Result<StructureModel> {
        if s.partition.digest() != s.partition_digest {
            return Err(Error::PartitionMismatch(format!("stored digest of `{}` does not match its partition", s.id)));
        }
        Ok(StructureModel {
            id: s.id.clone(),
            params: ModelParams::new(&meta.config.net, &s.partition, &mut rng)?,
            stats: s.stats.clone(),
            velocity: s.velocity,
            skeletons: s.skeletons.iter().cloned().map(Arc::new).collect(),
            frame_time: s.frame_time,
        })
    };
    let mut models = [build(&meta.structures[0])?, build(&meta.structures[1])?];
    for (name, var) in all_params_mut(&mut models) {
        let t = named
            .remove(&format!("param/{name}"))
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
        if t.shape() != var.shape() {
            return Err(Error::Checkpoint(format!("tensor `{name}` has shape {:?}, expected {:?}", t.shape(), var.shape())));
        }
        *var = Var::param(t);
    }
    let mut opt: [(u64, Vec<(String, Tensor)>); 2] = [(meta.opt_g_steps, Vec::new()), (meta.opt_d_steps, Vec::new())];
    for (name, t) in named {
        if let Some(rest) = name.strip_prefix("opt_g/") {
            opt[0].1.push((rest.to_string(), t));
        } else if let Some(rest) = name.strip_prefix("opt_d/") {
            opt[1].1.push((rest.to_string(), t));
        } else {
            return Err(Error::Checkpoint(format!("unexpected tensor `{name}`")));
        }
    }
    Ok(LoadedModels { config: meta.config, models, epoch: meta.epoch, step: meta.step, opt })
}

/// Continues training from a checkpoint on the same data. The data's
/// partitions must match the stored ones.
pub fn resume(path: &Path, data: [StructureData; 2]) -> Result<Trainer> {
    let loaded = load(path)?;
    for (tag, (d, m)) in STRUCTURE_TAGS.iter().zip(data.iter().zip(&loaded.models)) {
        if d.partition.digest() != m.partition().digest() {
            return Err(Error::PartitionMismatch(format!(
                "structure {tag} (`{}`) was trained with a different partition",
                d.id
            )));
        }
    }
    let LoadedModels { config, models, epoch, step, opt } = loaded;
    let [(g_steps, g_state), (d_steps, d_state)] = opt;
    let mut opt_g = Adam::new(config.lr, config.beta1, config.beta2);
    opt_g.load_state(g_steps, g_state);
    let mut opt_d = Adam::new(config.lr, config.beta1, config.beta2);
    opt_d.load_state(d_steps, d_state);
    Ok(Trainer { config, models, data, opt_g, opt_d, epoch, step })
}
