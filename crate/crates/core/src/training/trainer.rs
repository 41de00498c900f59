use std::sync::Arc;

use partret_autograd::{prefixed, Adam, Module, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::body_parts::BodyPartition;
use crate::error::{shape_err, Error, Result};
use crate::kinematics::Quat;
use crate::motion_io::{MotionClip, NormStats, SkeletonDef};
use crate::networks::{ModelParams, NetConfig};

use super::data::{group_skeletons, Batch, StructureData};
use super::losses::{
    adv_discriminator_loss, adv_generator_loss, kine_loss, masked_mse, mse, root_linear_velocity, vel_loss,
    AdvConvention, LossWeights, VelocityStats,
};

/// Tags used for the two structures in parameter names and logs.
pub const STRUCTURE_TAGS: [&str; 2] = ["A", "B"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Two humanoid structures; every joint counts in every loss.
    #[default]
    Humanoid,
    /// Biped and quadruped; losses are restricted to joints of the shared
    /// parts and the velocity term is active.
    BipedQuad,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "humanoid" => Ok(Mode::Humanoid),
            "biped_quad" | "biped-quad" => Ok(Mode::BipedQuad),
            other => Err(Error::Config(format!("unknown mode `{other}`, expected humanoid or biped_quad"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Discriminator updates per generator update.
    pub gd_ratio: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub adv: AdvConvention,
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Humanoid,
            batch_size: 128,
            epochs: 1000,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            gd_ratio: 1,
            seed: 0,
            weights: LossWeights::default(),
            adv: AdvConvention::Standard,
            net: NetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.weights.validate()?;
        if self.batch_size == 0 || self.gd_ratio == 0 {
            return Err(Error::Config("batch_size and gd_ratio must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config(format!("bad optimizer settings lr={} betas=({}, {})", self.lr, self.beta1, self.beta2)));
        }
        Ok(())
    }
}

/// Learned parameters of one structure plus everything needed to use them
/// without the training data.
#[derive(Clone, Debug)]
pub struct StructureModel {
    pub id: String,
    pub params: ModelParams,
    pub stats: NormStats,
    pub velocity: VelocityStats,
    /// Skeletons seen in training, first one is the default target.
    pub skeletons: Vec<Arc<SkeletonDef>>,
    /// Frame time of the training clips.
    pub frame_time: f64,
}

impl StructureModel {
    pub fn partition(&self) -> &BodyPartition {
        &self.params.partition
    }

    pub fn num_joints(&self) -> usize {
        self.params.partition.num_joints
    }

    /// Skeleton codes `[B, N, d]` for one skeleton per clip.
    pub fn skeleton_codes(&self, skeletons: &[Arc<SkeletonDef>]) -> Result<Var> {
        let (unique, of) = group_skeletons(skeletons);
        let codes: Vec<Var> = unique.iter().map(|s| self.params.encode_skeleton(s)).collect::<Result<_>>()?;
        let codes = Var::concat(&codes, 0);
        if unique.len() == 1 && of.len() == 1 {
            return Ok(codes);
        }
        Ok(codes.index_select(0, &of))
    }
}

/// Scalar loss values of one step, summed over both directions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub rec: f64,
    pub cyc: f64,
    pub kine: f64,
    pub adv: f64,
    pub vel: f64,
    /// Weighted generator objective.
    pub total: f64,
    /// Discriminator objective from the last discriminator update.
    pub disc: f64,
}

impl LossReport {
    /// The weighted sum of the components under `w`.
    pub fn weighted(&self, w: &LossWeights) -> f64 {
        w.rec * self.rec + w.cyc * self.cyc + w.kine * self.kine + w.adv * self.adv + w.vel * self.vel
    }

    pub fn is_finite(&self) -> bool {
        [self.rec, self.cyc, self.kine, self.adv, self.vel, self.total, self.disc].iter().all(|v| v.is_finite())
    }

    pub fn csv_header(mode: Mode) -> &'static str {
        match mode {
            Mode::Humanoid => "epoch,steps,rec,cyc,kine,adv,total,disc",
            Mode::BipedQuad => "epoch,steps,rec,cyc,kine,adv,vel,total,disc",
        }
    }

    pub fn csv_row(&self, mode: Mode, epoch: usize, steps: usize) -> String {
        let mut cols = vec![self.rec, self.cyc, self.kine, self.adv];
        if mode == Mode::BipedQuad {
            cols.push(self.vel);
        }
        cols.extend([self.total, self.disc]);
        let cols: Vec<String> = cols.iter().map(|v| format!("{v:.9e}")).collect();
        format!("{epoch},{steps},{}", cols.join(","))
    }

    fn mean(reports: &[LossReport]) -> LossReport {
        let n = reports.len().max(1) as f64;
        let mut m = LossReport::default();
        for r in reports {
            m.rec += r.rec / n;
            m.cyc += r.cyc / n;
            m.kine += r.kine / n;
            m.adv += r.adv / n;
            m.vel += r.vel / n;
            m.total += r.total / n;
            m.disc += r.disc / n;
        }
        m
    }
}

/// Differentiable generator objective of one step.
pub struct GeneratorLoss {
    pub total: Var,
    /// `rec, cyc, kine, adv, vel`, each summed over both directions.
    pub terms: [Var; 5],
    /// Retargeted motions `A -> B` and `B -> A`, normalized in the target's
    /// statistics.
    pub fakes: [Var; 2],
}

fn row_mask(partition: &BodyPartition) -> Vec<bool> {
    let covered = partition.covered();
    (0..=partition.num_joints).map(|r| covered.contains(&r)).collect()
}

/// Builds the generator objective for a pair of batches (`batches[0]` from
/// structure A). Pure in the model parameters.
pub fn generator_loss(models: &[StructureModel; 2], batches: &[Batch; 2], config: &TrainConfig) -> Result<GeneratorLoss> {
    let masked = config.mode == Mode::BipedQuad;
    if masked {
        check_common_parts(models[0].partition(), models[1].partition())?;
    }
    let mut sums: [Option<Var>; 5] = Default::default();
    let mut fakes = Vec::with_capacity(2);
    for (x, y) in [(0, 1), (1, 0)] {
        let (mx, my) = (&models[x], &models[y]);
        let (bx, by) = (&batches[x], &batches[y]);
        if bx.is_empty() || by.is_empty() {
            return Err(Error::EmptyDataset("empty batch".into()));
        }
        let m = Var::constant(bx.motion.clone());
        let own = mx.skeleton_codes(&bx.skeletons)?;
        let targets: Vec<Arc<SkeletonDef>> = (0..bx.len()).map(|i| by.skeletons[i % by.len()].clone()).collect();
        let other = my.skeleton_codes(&targets)?;

        let h = mx.params.encode_motion(&m)?;
        let m_hat = mx.params.decode(&h, &own)?;
        let m_xy = my.params.decode(&h, &other)?;
        let h_xy = my.params.encode_motion(&m_xy)?;
        let m_bar = mx.params.decode(&h_xy, &own)?;

        let rows = masked.then(|| row_mask(mx.partition()));
        let motion_mse = |a: &Var, b: &Var| match &rows {
            Some(keep) => masked_mse(a, b, 2, keep),
            None => mse(a, b),
        };
        let rec = motion_mse(&m, &m_hat)?;
        let cyc = mse(&h, &h_xy)?.add(&motion_mse(&m, &m_bar)?);

        let phys = |v: &Var| mx.stats.denormalize_var(v);
        let (p, p_bar, p_hat) = (phys(&m)?, phys(&m_bar)?, phys(&m_hat)?);
        let joints = rows.as_ref().map(|r| &r[..mx.num_joints()]);
        let (unique, of) = group_skeletons(&bx.skeletons);
        let mut kine: Option<Var> = None;
        for (u, skel) in unique.iter().enumerate() {
            let items: Vec<usize> = (0..of.len()).filter(|&i| of[i] == u).collect();
            let pick = |v: &Var| if unique.len() == 1 { v.clone() } else { v.index_select(0, &items) };
            let term = kine_loss(&pick(&p), &pick(&p_bar), &pick(&p_hat), skel, joints)?
                .mul_scalar(items.len() as f64 / of.len() as f64);
            kine = Some(match kine {
                Some(k) => k.add(&term),
                None => term,
            });
        }
        let kine = kine.expect("batch has at least one skeleton");

        let adv = adv_generator_loss(&my.params.discriminate(&m_xy)?);

        let vel = if masked {
            let v_src = root_linear_velocity(&p);
            let v_dst = root_linear_velocity(&my.stats.denormalize_var(&m_xy)?);
            vel_loss(&v_src, &v_dst, mx.velocity, my.velocity)?
        } else {
            Var::scalar(0.0)
        };

        for (slot, term) in sums.iter_mut().zip([rec, cyc, kine, adv, vel]) {
            *slot = Some(match slot.take() {
                Some(s) => s.add(&term),
                None => term,
            });
        }
        fakes.push(m_xy);
    }
    let terms = sums.map(|s| s.expect("two directions"));
    let w = &config.weights;
    let coeffs = [w.rec, w.cyc, w.kine, w.adv, if masked { w.vel } else { 0.0 }];
    let mut total = terms[0].mul_scalar(coeffs[0]);
    for (t, c) in terms.iter().zip(coeffs).skip(1) {
        total = total.add(&t.mul_scalar(c));
    }
    let fakes: [Var; 2] = fakes.try_into().map_err(|_| shape_err("expected two fakes"))?;
    Ok(GeneratorLoss { total, terms, fakes })
}

/// Discriminator objective on real batches and detached fakes.
pub fn discriminator_loss(models: &[StructureModel; 2], batches: &[Batch; 2], fakes: &[Var; 2], adv: AdvConvention) -> Result<Var> {
    let mut total: Option<Var> = None;
    // fakes[0] is A -> B, scored by B's discriminator.
    for (y, fake) in [(1, &fakes[0]), (0, &fakes[1])] {
        let real = models[y].params.discriminate(&Var::constant(batches[y].motion.clone()))?;
        let fake = models[y].params.discriminate(&fake.detach())?;
        let term = adv_discriminator_loss(&real, &fake, adv);
        total = Some(match total {
            Some(t) => t.add(&term),
            None => term,
        });
    }
    Ok(total.expect("two structures"))
}

/// Fails unless both partitions name the same parts in the same order.
pub fn check_common_parts(a: &BodyPartition, b: &BodyPartition) -> Result<()> {
    if a.part_names != b.part_names {
        return Err(Error::PartitionMismatch(format!("parts {:?} vs {:?}", a.part_names, b.part_names)));
    }
    Ok(())
}

/// Generator parameters of both structures, named `A.gen.*` and `B.gen.*`.
pub fn generator_params_mut(models: &mut [StructureModel; 2]) -> Vec<(String, &mut Var)> {
    let mut out = Vec::new();
    for (tag, m) in STRUCTURE_TAGS.iter().zip(models.iter_mut()) {
        out.extend(prefixed(tag, prefixed("gen", m.params.generator.params_mut())));
    }
    out
}

/// Discriminator parameters of both structures, named `A.disc.*` and `B.disc.*`.
pub fn discriminator_params_mut(models: &mut [StructureModel; 2]) -> Vec<(String, &mut Var)> {
    let mut out = Vec::new();
    for (tag, m) in STRUCTURE_TAGS.iter().zip(models.iter_mut()) {
        out.extend(prefixed(tag, prefixed("disc", m.params.discriminator.params_mut())));
    }
    out
}

/// Every parameter of both structures.
pub fn all_params_mut(models: &mut [StructureModel; 2]) -> Vec<(String, &mut Var)> {
    let mut out = Vec::new();
    for (tag, m) in STRUCTURE_TAGS.iter().zip(models.iter_mut()) {
        out.extend(prefixed(tag, m.params.params_mut()));
    }
    out
}

/// Training state for one pair of structures.
pub struct Trainer {
    pub config: TrainConfig,
    pub models: [StructureModel; 2],
    pub data: [StructureData; 2],
    pub opt_g: Adam,
    pub opt_d: Adam,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed generator updates.
    pub step: u64,
}

/// Per-epoch outcome.
#[derive(Clone, Debug)]
pub struct EpochSummary {
    pub epoch: usize,
    pub steps: Vec<LossReport>,
    pub mean: LossReport,
}

impl Trainer {
    /// Fresh models initialized from `config.seed`.
    pub fn new(config: TrainConfig, data: [StructureData; 2]) -> Result<Trainer> {
        config.validate()?;
        if config.mode == Mode::BipedQuad {
            check_common_parts(&data[0].partition, &data[1].partition)?;
            data[0].velocity.check()?;
            data[1].velocity.check()?;
        }
        for d in &data {
            if d.frames() % 4 != 0 {
                return Err(Error::BadLength(d.frames()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut build = |d: &StructureData| -> Result<StructureModel> {
            Ok(StructureModel {
                id: d.id.clone(),
                params: ModelParams::new(&config.net, &d.partition, &mut rng)?,
                stats: d.stats.clone(),
                velocity: d.velocity,
                skeletons: d.skeletons().to_vec(),
                frame_time: d.clips[0].frame_time,
            })
        };
        let models = [build(&data[0])?, build(&data[1])?];
        let opt_g = Adam::new(config.lr, config.beta1, config.beta2);
        let opt_d = Adam::new(config.lr, config.beta1, config.beta2);
        Ok(Trainer { config, models, data, opt_g, opt_d, epoch: 0, step: 0 })
    }

    /// One generator update followed by `gd_ratio` discriminator updates.
    pub fn train_step(&mut self, batches: &[Batch; 2]) -> Result<LossReport> {
        let g = generator_loss(&self.models, batches, &self.config)?;
        let terms: Vec<f64> = g.terms.iter().map(Var::item).collect();
        let total = g.total.item();
        if !total.is_finite() || terms.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFiniteLoss { step: self.step, detail: format!("generator terms {terms:?}") });
        }
        let grads = g.total.backward();
        self.opt_g.step(generator_params_mut(&mut self.models), &grads);

        let mut disc = 0.0;
        for _ in 0..self.config.gd_ratio {
            let d = discriminator_loss(&self.models, batches, &g.fakes, self.config.adv)?;
            disc = d.item();
            if !disc.is_finite() {
                return Err(Error::NonFiniteLoss { step: self.step, detail: "discriminator".into() });
            }
            let grads = d.backward();
            self.opt_d.step(discriminator_params_mut(&mut self.models), &grads);
        }
        self.step += 1;
        Ok(LossReport { rec: terms[0], cyc: terms[1], kine: terms[2], adv: terms[3], vel: terms[4], total, disc })
    }

    /// Batch indices of every step of `epoch`, derived from the seed and
    /// the epoch number only.
    pub fn epoch_plan(&self, epoch: usize) -> Vec<[Vec<usize>; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64 + 1);
        let perms: Vec<Vec<usize>> = self
            .data
            .iter()
            .map(|d| {
                let mut p: Vec<usize> = (0..d.len()).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        let bs = self.config.batch_size;
        let largest = self.data.iter().map(StructureData::len).max().unwrap_or(0);
        let steps = largest.div_ceil(bs);
        (0..steps)
            .map(|s| {
                let pick = |p: &Vec<usize>| {
                    let n = bs.min(p.len());
                    (0..n).map(|i| p[(s * n + i) % p.len()]).collect::<Vec<_>>()
                };
                [pick(&perms[0]), pick(&perms[1])]
            })
            .collect()
    }

    pub fn train_epoch(&mut self) -> Result<EpochSummary> {
        let plan = self.epoch_plan(self.epoch);
        let mut steps = Vec::with_capacity(plan.len());
        for [ia, ib] in plan {
            let batches = [self.data[0].batch(&ia), self.data[1].batch(&ib)];
            steps.push(self.train_step(&batches)?);
        }
        self.epoch += 1;
        Ok(EpochSummary { epoch: self.epoch, mean: LossReport::mean(&steps), steps })
    }
}

/// Retargets clips of `source`'s structure onto `target_skeleton`, which
/// must belong to `target`'s structure. All clips must share a length
/// divisible by 4.
pub fn retarget_batch(
    clips: &[MotionClip],
    source: &StructureModel,
    target: &StructureModel,
    target_skeleton: &Arc<SkeletonDef>,
) -> Result<Vec<MotionClip>> {
    let first = clips.first().ok_or_else(|| Error::EmptyDataset("no clips to retarget".into()))?;
    check_common_parts(source.partition(), target.partition())?;
    if target_skeleton.num_joints() != target.num_joints() {
        return Err(Error::PartitionMismatch(format!(
            "target skeleton `{}` has {} joints, model `{}` expects {}",
            target_skeleton.name,
            target_skeleton.num_joints(),
            target.id,
            target.num_joints()
        )));
    }
    let frames = first.frames();
    if frames % 4 != 0 {
        return Err(Error::BadLength(frames));
    }
    let mut data = Vec::new();
    for c in clips {
        if c.num_joints() != source.num_joints() {
            return Err(Error::PartitionMismatch(format!(
                "clip on `{}` has {} joints, model `{}` expects {}",
                c.skeleton.name,
                c.num_joints(),
                source.id,
                source.num_joints()
            )));
        }
        if c.frames() != frames {
            return Err(shape_err("clips in one retarget batch must share a length"));
        }
        data.extend_from_slice(source.stats.normalize(&c.data)?.data());
    }
    let rows = source.num_joints() + 1;
    let m = Var::constant(Tensor::new([clips.len(), frames, rows, 4], data));
    let h = source.params.encode_motion(&m)?;
    let code = target.skeleton_codes(std::slice::from_ref(target_skeleton))?;
    let out = target.stats.denormalize_var(&target.params.decode(&h, &code)?)?.value().clone();
    let j = target.num_joints();
    let per = frames * (j + 1) * 4;
    out.data()
        .chunks(per)
        .zip(clips)
        .map(|(chunk, c)| {
            let mut values = chunk.to_vec();
            for frame in values.chunks_mut((j + 1) * 4) {
                for q in frame[..j * 4].chunks_mut(4) {
                    let (unit, _) = Quat::from_array([q[0], q[1], q[2], q[3]]).normalize_checked();
                    q.copy_from_slice(&unit.to_array());
                }
            }
            MotionClip::new(target_skeleton.clone(), Tensor::new([frames, j + 1, 4], values), c.frame_time)
        })
        .collect()
}

/// Single-clip form of [`retarget_batch`].
pub fn retarget(
    clip: &MotionClip,
    source: &StructureModel,
    target: &StructureModel,
    target_skeleton: &Arc<SkeletonDef>,
) -> Result<MotionClip> {
    Ok(retarget_batch(std::slice::from_ref(clip), source, target, target_skeleton)?.remove(0))
}
