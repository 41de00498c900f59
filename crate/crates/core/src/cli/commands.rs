use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::dataset::{DatasetSummary, PreparedDataset};
use crate::body_parts::load_partition;
use crate::checkpoint::{self, LoadedModels};
use crate::error::{io, Error, Result};
use crate::evaluation::{
    attention_heatmap, contact_recall, epsilon_grid, fid, pair_mpjpe, sample_by_velocity, train_fid_model,
    AttentionHeatmap, MetricReport, PairScore, FID_STRIDE,
};
use crate::motion_io::{
    decimation_stride, localize_and_clip_with, parse_bvh, save_bvh, ClipOptions, DatasetManifest, JointMapping,
    MotionClip, RawMotion, SkeletonDef, Split,
};
use crate::training::{retarget, LossReport, StructureData, StructureModel, Trainer, VelocityStats};

/// Prepares both structures of the run into `run_dir/prepared/<id>`.
pub fn prepare(cfg: &RunConfig) -> Result<Vec<DatasetSummary>> {
    let mut out = Vec::new();
    for s in &cfg.structures {
        let manifest = DatasetManifest::load(&s.manifest)?;
        if manifest.structure_id != s.id {
            return Err(Error::Config(format!(
                "{} declares structure `{}`, the run config expects `{}`",
                s.manifest.display(),
                manifest.structure_id,
                s.id
            )));
        }
        let data = PreparedDataset::build(&manifest, cfg.clip_len, cfg.window_stride())?;
        // Fail here rather than at training time on a bad partition.
        load_partition(&s.partition, &s.id, &data.clips[0].clip.skeleton)?;
        for w in &data.skipped {
            eprintln!("warning: skipped {w}");
        }
        let dir = cfg.prepared_dir(&s.id);
        data.save(&dir)?;
        let summary = data.summary();
        println!(
            "prepared {}: {} train / {} test clips on {} skeleton(s) -> {}",
            s.id,
            summary.train_clips,
            summary.test_clips,
            summary.skeletons,
            dir.display()
        );
        out.push(summary);
    }
    Ok(out)
}

fn load_prepared(cfg: &RunConfig, id: &str) -> Result<PreparedDataset> {
    let dir = cfg.prepared_dir(id);
    PreparedDataset::load(&dir).map_err(|e| e.context(format!("prepared data of `{id}` (run `prepare` first)")))
}

fn training_data(cfg: &RunConfig, id: &str) -> Result<StructureData> {
    let prepared = load_prepared(cfg, id)?;
    let clips: Vec<MotionClip> = prepared.split(Split::Train).into_iter().map(|c| c.clip.clone()).collect();
    let first = clips.first().ok_or_else(|| Error::EmptyDataset(format!("structure `{id}` has no training clips")))?;
    let partition = load_partition(&cfg.structure(id)?.partition, id, &first.skeleton)?;
    let velocity = VelocityStats::from_clips(&clips)?;
    StructureData::with_stats(id, clips, partition, prepared.stats, velocity)
}

pub fn checkpoint_dir(cfg: &RunConfig) -> PathBuf {
    cfg.run_dir.join("checkpoints")
}

pub fn checkpoint_path(cfg: &RunConfig, epoch: usize) -> PathBuf {
    checkpoint_dir(cfg).join(format!("epoch_{epoch:05}.ckpt"))
}

/// Newest `epoch_*.ckpt` in the run's checkpoint directory.
pub fn latest_checkpoint(cfg: &RunConfig) -> Option<PathBuf> {
    let entries = std::fs::read_dir(checkpoint_dir(cfg)).ok()?;
    entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "ckpt")
                && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("epoch_"))
        })
        .max()
}

/// Outcome of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub epochs: Vec<LossReport>,
    pub checkpoints: Vec<PathBuf>,
}

/// Trains up to `cfg.train.epochs` total epochs, resuming from `resume`
/// when given. Writes `config.toml`, appends to `loss.csv` and saves
/// checkpoints every `checkpoint_every` epochs and after the last one.
pub fn train(cfg: &RunConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    let ids: Vec<&str> = cfg.structures.iter().map(|s| s.id.as_str()).collect();
    let data = [training_data(cfg, ids[0])?, training_data(cfg, ids[1])?];
    let mut trainer = match resume {
        Some(path) => {
            let t = checkpoint::resume(path, data).map_err(|e| e.context(path.display().to_string()))?;
            if t.config.mode != cfg.mode {
                return Err(Error::Config(format!(
                    "{} was trained in mode {:?}, the run asks for {:?}",
                    path.display(),
                    t.config.mode,
                    cfg.mode
                )));
            }
            t
        }
        None => Trainer::new(cfg.train_config(), data)?,
    };
    trainer.config.epochs = cfg.train.epochs;

    std::fs::create_dir_all(&cfg.run_dir).map_err(|e| io(&cfg.run_dir, e))?;
    let snapshot = cfg.run_dir.join("config.toml");
    std::fs::write(&snapshot, cfg.to_toml()?).map_err(|e| io(&snapshot, e))?;
    let csv = cfg.run_dir.join("loss.csv");
    let fresh = trainer.epoch == 0 || !csv.exists();
    let mut log = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&csv)
        .map_err(|e| io(&csv, e))?;
    if fresh {
        writeln!(log, "{}", LossReport::csv_header(cfg.mode)).map_err(|e| io(&csv, e))?;
    }

    let mut outcome = TrainOutcome { epochs: Vec::new(), checkpoints: Vec::new() };
    let every = cfg.train.checkpoint_every;
    while trainer.epoch < cfg.train.epochs {
        let summary = trainer.train_epoch()?;
        let m = &summary.mean;
        writeln!(log, "{}", m.csv_row(cfg.mode, summary.epoch, summary.steps.len())).map_err(|e| io(&csv, e))?;
        log.flush().map_err(|e| io(&csv, e))?;
        println!(
            "epoch {:>5}  rec {:.4e}  cyc {:.4e}  kine {:.4e}  adv {:.4e}{}  total {:.4e}",
            summary.epoch,
            m.rec,
            m.cyc,
            m.kine,
            m.adv,
            if cfg.mode == crate::training::Mode::BipedQuad { format!("  vel {:.4e}", m.vel) } else { String::new() },
            m.total
        );
        if summary.epoch % every == 0 || summary.epoch == cfg.train.epochs {
            let path = checkpoint_path(cfg, summary.epoch);
            checkpoint::save(&trainer, &path)?;
            outcome.checkpoints.push(path);
        }
        outcome.epochs.push(summary.mean);
    }
    Ok(outcome)
}

/// The whole motion as one clip at the model's frame rate, trimmed to a
/// multiple of 4 frames.
pub fn whole_clip(raw: &RawMotion, frame_time: f64) -> Result<MotionClip> {
    let fps = (1.0 / frame_time).round() as u32;
    let stride = decimation_stride(raw.fps(), fps)?;
    let frames = raw.frames().div_ceil(stride);
    let clip_len = frames - frames % 4;
    if clip_len == 0 {
        return Err(Error::TooShort { frames, needed: 4 });
    }
    let opts = ClipOptions { clip_len, fps, window_stride: clip_len };
    Ok(localize_and_clip_with(raw, opts)?.remove(0))
}

/// Finds the model whose structure fits `raw`, applying `mapping` first
/// when given.
fn match_source<'a>(
    models: &'a LoadedModels,
    raw: &RawMotion,
    from: Option<&str>,
    mapping: Option<&JointMapping>,
) -> Result<(&'a StructureModel, RawMotion)> {
    let candidates: Vec<&StructureModel> = match from {
        Some(id) => vec![models.structure(id)?],
        None => models.models.iter().collect(),
    };
    let mut last = None;
    for m in candidates {
        let trained = &m.skeletons[0];
        let mapped = match mapping {
            Some(map) => match map.apply(raw, trained) {
                Ok(r) => r,
                Err(e) => {
                    last = Some(e);
                    continue;
                }
            },
            None => raw.clone(),
        };
        if mapped.skeleton.same_structure(trained) {
            return Ok((m, mapped));
        }
    }
    Err(last.unwrap_or_else(|| {
        Error::PartitionMismatch(format!(
            "skeleton `{}` matches no trained structure (`{}`, `{}`)",
            raw.skeleton.name, models.models[0].id, models.models[1].id
        ))
    }))
}

#[derive(Clone, Debug)]
pub struct RetargetArgs {
    pub input: PathBuf,
    /// Structure id or a BVH file whose skeleton is the target.
    pub target: String,
    pub out: PathBuf,
    pub from: Option<String>,
    pub mapping: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RetargetOutcome {
    pub source: String,
    pub target: String,
    pub clip: MotionClip,
}

/// Retargets a BVH file and writes the result as BVH.
pub fn retarget_file(models: &LoadedModels, args: &RetargetArgs) -> Result<RetargetOutcome> {
    let (_, raw) = parse_bvh(&args.input)?;
    let mapping = args.mapping.as_deref().map(JointMapping::load).transpose()?;
    let (source, raw) = match_source(models, &raw, args.from.as_deref(), mapping.as_ref())
        .map_err(|e| e.context(args.input.display().to_string()))?;
    let (target, skeleton): (&StructureModel, Arc<SkeletonDef>) = match models.structure(&args.target) {
        Ok(m) => (m, m.skeletons[0].clone()),
        Err(_) if Path::new(&args.target).is_file() => {
            let (skel, _) = parse_bvh(Path::new(&args.target))?;
            let model = models
                .models
                .iter()
                .find(|m| m.skeletons[0].same_structure(&skel))
                .ok_or_else(|| {
                    Error::PartitionMismatch(format!("target skeleton in {} matches no trained structure", args.target))
                })?;
            (model, skel)
        }
        Err(e) => return Err(e),
    };
    let clip = whole_clip(&raw, source.frame_time).map_err(|e| e.context(args.input.display().to_string()))?;
    let out = retarget(&clip, source, target, &skeleton)?;
    save_bvh(&args.out, &out.to_raw())?;
    Ok(RetargetOutcome { source: source.id.clone(), target: target.id.clone(), clip: out })
}

/// One row of `pairs.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonPairRow {
    pub source: String,
    pub target: String,
    pub source_skeleton: String,
    pub target_skeleton: String,
    pub clips: usize,
    pub mpjpe: f64,
}

/// Evaluates both directions on the test splits and writes
/// `<src>_to_<tgt>.toml`, `<src>_to_<tgt>_recall.csv` and `pairs.csv`
/// into `out`.
pub fn evaluate(cfg: &RunConfig, models: &LoadedModels, out: &Path) -> Result<(Vec<MetricReport>, Vec<SkeletonPairRow>)> {
    let mut prepared = BTreeMap::new();
    for m in &models.models {
        prepared.insert(m.id.clone(), load_prepared(cfg, &m.id)?);
    }
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for (s, t) in [(0, 1), (1, 0)] {
        let (src, tgt) = (&models.models[s], &models.models[t]);
        let src_test = prepared[&src.id].split(Split::Test);
        let tgt_test = prepared[&tgt.id].split(Split::Test);
        let mut report = MetricReport { source: src.id.clone(), target: tgt.id.clone(), ..Default::default() };

        let mut pairs: Vec<(MotionClip, MotionClip, PairScore)> = Vec::new();
        for a in &src_test {
            for b in tgt_test.iter().filter(|b| b.key == a.key) {
                let r = retarget(&a.clip, src, tgt, &b.clip.skeleton)?;
                let score = PairScore {
                    key: a.key.clone(),
                    source_skeleton: a.clip.skeleton.name.clone(),
                    target_skeleton: b.clip.skeleton.name.clone(),
                    mpjpe: pair_mpjpe(&r, &b.clip)?,
                };
                pairs.push((b.clip.clone(), r, score));
            }
        }
        if pairs.is_empty() {
            eprintln!("notice: no paired ground truth for {} -> {}; MPJPE and contact recall skipped", src.id, tgt.id);
        } else {
            let mut groups: BTreeMap<(String, String), (usize, f64)> = BTreeMap::new();
            for (_, _, p) in &pairs {
                let g = groups.entry((p.source_skeleton.clone(), p.target_skeleton.clone())).or_default();
                g.0 += 1;
                g.1 += p.mpjpe;
                report.pairs.push(p.clone());
            }
            report.mpjpe = Some(pairs.iter().map(|(_, _, p)| p.mpjpe).sum::<f64>() / pairs.len() as f64);
            for ((a, b), (n, sum)) in groups {
                rows.push(SkeletonPairRow {
                    source: src.id.clone(),
                    target: tgt.id.clone(),
                    source_skeleton: a,
                    target_skeleton: b,
                    clips: n,
                    mpjpe: sum / n as f64,
                });
            }
            let refs: Vec<(&MotionClip, &MotionClip)> = pairs.iter().map(|(g, r, _)| (g, r)).collect();
            report.recall = contact_recall(&refs, &epsilon_grid())?;
        }
        if cfg.eval.fid {
            report.fid = fid_for(cfg, src, tgt, &src_test.iter().map(|c| &c.clip).collect::<Vec<_>>(), &prepared[&tgt.id])?;
        }
        if let Some(e) = report.mpjpe {
            println!("{} -> {}: MPJPE {e:.4} over {} pairs", src.id, tgt.id, pairs.len());
        }
        if let Some(f) = report.fid {
            println!("{} -> {}: FID {:.4}{}", src.id, tgt.id, f.fid, if f.regularized { " (regularized)" } else { "" });
        }
        report.write(out, &format!("{}_to_{}", src.id, tgt.id))?;
        reports.push(report);
    }
    let mut csv = String::from("source,target,source_skeleton,target_skeleton,clips,mpjpe\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{:.6}",
            r.source, r.target, r.source_skeleton, r.target_skeleton, r.clips, r.mpjpe
        );
    }
    let path = out.join("pairs.csv");
    std::fs::write(&path, csv).map_err(|e| io(&path, e))?;
    Ok((reports, rows))
}

/// FID between retargeted source test clips and real target test clips,
/// or `None` with a notice when the data cannot support it.
fn fid_for(
    cfg: &RunConfig,
    src: &StructureModel,
    tgt: &StructureModel,
    src_test: &[&MotionClip],
    tgt_data: &PreparedDataset,
) -> Result<Option<crate::evaluation::FidResult>> {
    let skip = |why: String| {
        eprintln!("notice: FID for {} -> {} skipped: {why}", src.id, tgt.id);
        Ok(None)
    };
    if cfg.clip_len % FID_STRIDE != 0 {
        return skip(format!("clip length {} is not a multiple of {FID_STRIDE}", cfg.clip_len));
    }
    let real: Vec<MotionClip> = tgt_data.split(Split::Test).into_iter().map(|c| c.clip.clone()).collect();
    let train: Vec<&MotionClip> = tgt_data.split(Split::Train).into_iter().map(|c| &c.clip).collect();
    if real.len() < 2 || src_test.len() < 2 {
        return skip("fewer than 2 test clips on a side".into());
    }
    let fake: Vec<MotionClip> = src_test
        .iter()
        .enumerate()
        .map(|(i, c)| retarget(c, src, tgt, &tgt.skeletons[i % tgt.skeletons.len()]))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pick = |clips: &[MotionClip], rng: &mut ChaCha8Rng| -> Result<Vec<MotionClip>> {
        let n = cfg.eval.samples.min(clips.len());
        Ok(sample_by_velocity(clips, n, false, rng)?.into_iter().map(|i| clips[i].clone()).collect())
    };
    let real = pick(&real, &mut rng)?;
    let fake = pick(&fake, &mut rng)?;
    let (model, _) = train_fid_model(&train, &cfg.eval.fid_model)?;
    let fr = model.features(&real.iter().collect::<Vec<_>>())?;
    let ff = model.features(&fake.iter().collect::<Vec<_>>())?;
    fid(&ff, &fr).map(Some)
}

/// Writes `<stem>_attention.csv` and `<stem>_attention.png` for a BVH file.
pub fn attention_viz(
    models: &LoadedModels,
    input: &Path,
    from: Option<&str>,
    out: &Path,
    cell: u32,
) -> Result<AttentionHeatmap> {
    let (_, raw) = parse_bvh(input)?;
    let (model, raw) = match_source(models, &raw, from, None).map_err(|e| e.context(input.display().to_string()))?;
    let clip = whole_clip(&raw, model.frame_time)?;
    let heat = attention_heatmap(&clip, model)?;
    let stem = input.file_stem().map_or_else(|| "motion".into(), |s| s.to_string_lossy().into_owned());
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    heat.write_csv(&out.join(format!("{stem}_attention.csv")))?;
    heat.write_png(&out.join(format!("{stem}_attention.png")), cell)?;
    Ok(heat)
}
