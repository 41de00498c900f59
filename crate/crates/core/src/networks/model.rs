use partret_autograd::{prefixed, Module, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::body_parts::{build_mask, positional_table, BodyPartition, MaskMatrix, MASK_SENTINEL};
use crate::error::{shape_err, Error, Result};
use crate::motion_io::SkeletonDef;

use super::layers::{normal, AttentionLayer, Conv1d, Mlp3};
use super::pan::{pan_forward, PanOutput};

/// Network sizes and switches shared by both structures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Token and joint embedding width `d`.
    pub embed_dim: usize,
    /// Hidden width of the joint embedding MLP.
    pub embed_hidden: usize,
    /// Per-part channels of the first temporal convolution.
    pub conv_hidden: usize,
    /// Temporal kernel width; odd.
    pub kernel: usize,
    /// Hidden width of the per-part skeleton MLPs.
    pub skeleton_hidden: usize,
    /// Widest discriminator layer `D`.
    pub disc_channels: usize,
    /// Hidden channels between the decoder's two convolutions; defaults to
    /// `N * conv_hidden`.
    pub decoder_hidden: Option<usize>,
    pub pan_layers: usize,
    /// Second attention block over pooled part features after the first
    /// convolution.
    pub pan_stage2: bool,
    pub token_self_only: bool,
    pub pe_basis: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            embed_hidden: 256,
            conv_hidden: 32,
            kernel: 15,
            skeleton_hidden: 64,
            disc_channels: 256,
            decoder_hidden: None,
            pan_layers: 2,
            pan_stage2: true,
            token_self_only: true,
            pe_basis: 10_000.0,
        }
    }
}

impl NetConfig {
    /// A small configuration for tests and examples.
    pub fn tiny() -> Self {
        Self {
            embed_dim: 8,
            embed_hidden: 16,
            conv_hidden: 4,
            kernel: 5,
            skeleton_hidden: 8,
            disc_channels: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 || self.embed_dim % 2 != 0 {
            return Err(Error::OddDim(self.embed_dim));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel width {} must be odd", self.kernel)));
        }
        if self.pan_layers == 0 {
            return Err(Error::Config("at least one attention layer is required".into()));
        }
        let sizes = [self.embed_hidden, self.conv_hidden, self.skeleton_hidden, self.disc_channels];
        if sizes.contains(&0) || self.disc_channels < 2 || self.decoder_hidden == Some(0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// Mask for the second attention block: token `k` and part feature `k`
/// see each other and themselves only.
fn stage2_mask(n: usize) -> MaskMatrix {
    let size = 2 * n;
    let mut data = vec![MASK_SENTINEL; size * size];
    for k in 0..n {
        for (a, b) in [(k, k), (k, n + k), (n + k, k), (n + k, n + k)] {
            data[a * size + b] = 0.0;
        }
    }
    MaskMatrix { n_tokens: n, size, data }
}

/// `[B, T, N, d]` to channel-major `[B, N * d, T]`.
fn to_channels(x: &Var) -> Var {
    let s = x.shape();
    let (b, t, n, d) = (s[0], s[1], s[2], s[3]);
    x.permute(&[0, 2, 3, 1]).reshape([b, n * d, t])
}

/// `[B, N * d, T]` back to `[B, T, N, d]`.
fn from_channels(x: &Var, n: usize) -> Var {
    let s = x.shape();
    let (b, c, t) = (s[0], s[1], s[2]);
    x.reshape([b, n, c / n, t]).permute(&[0, 3, 1, 2])
}

/// Motion encoder `E_M`: joint embedding, attention pooling into part
/// tokens and per-part strided convolutions.
#[derive(Clone, Debug)]
pub struct MotionEncoder {
    pub embed: Mlp3,
    pub tokens: Var,
    pub pan1: Vec<AttentionLayer>,
    pub conv1: Conv1d,
    pub pointwise: Conv1d,
    pub tokens2: Option<Var>,
    pub pan2: Vec<AttentionLayer>,
    pub conv2: Conv1d,
    mask: Tensor,
    mask2: Tensor,
    pe: Tensor,
    parts: usize,
}

impl MotionEncoder {
    pub fn new(cfg: &NetConfig, partition: &BodyPartition, rng: &mut impl Rng) -> Result<Self> {
        let (n, d, hc) = (partition.len(), cfg.embed_dim, cfg.conv_hidden);
        let embed = Mlp3::new(4, cfg.embed_hidden, d, rng);
        let tokens = Var::param(normal(&[n, d], 0.02, rng));
        let pan1 = (0..cfg.pan_layers).map(|_| AttentionLayer::new(d, rng)).collect();
        let conv1 = Conv1d::new(n * d, n * hc, cfg.kernel, 2, n, rng);
        let pointwise = Conv1d::new(n * hc, n * d, 1, 1, n, rng);
        let (tokens2, pan2) = if cfg.pan_stage2 {
            let t = Var::param(normal(&[n, d], 0.02, rng));
            (Some(t), (0..cfg.pan_layers).map(|_| AttentionLayer::new(d, rng)).collect())
        } else {
            (None, Vec::new())
        };
        let conv2 = Conv1d::new(n * d, n * d, cfg.kernel, 2, n, rng);
        Ok(Self {
            embed,
            tokens,
            pan1,
            conv1,
            pointwise,
            tokens2,
            pan2,
            conv2,
            mask: build_mask(partition, cfg.token_self_only).tensor(),
            mask2: stage2_mask(n).tensor(),
            pe: positional_table(partition.num_joints + 1, d, cfg.pe_basis)?,
            parts: n,
        })
    }

    pub fn mask(&self) -> &Tensor {
        &self.mask
    }

    /// Joint embedding plus positional encoding, `[B, T, J + 1, d]`.
    pub fn embed_joints(&self, motion: &Var) -> Var {
        self.embed.forward(motion).add(&Var::constant(self.pe.clone()))
    }

    /// First attention block on a motion batch `[B, T, J + 1, 4]`.
    pub fn attend(&self, motion: &Var) -> Result<PanOutput> {
        let s = motion.shape();
        let rows = self.pe.dim(0);
        if s.len() != 4 || s[2] != rows || s[3] != 4 {
            return Err(shape_err(format!("motion {s:?} does not match [B, T, {rows}, 4]")));
        }
        Ok(pan_forward(&self.embed_joints(motion), &self.tokens, &self.pan1, &self.mask))
    }

    /// Shared motion code `H_M`, `[B, N * d, T / 4]` with part-major channels.
    pub fn forward(&self, motion: &Var) -> Result<Var> {
        let t = motion.shape().get(1).copied().unwrap_or(0);
        if t == 0 || t % 4 != 0 {
            return Err(Error::BadLength(t));
        }
        let pooled = self.attend(motion)?.tokens;
        let h = self.conv1.forward(&to_channels(&pooled)).relu();
        let mut h = self.pointwise.forward(&h).relu();
        if let Some(tokens2) = &self.tokens2 {
            let features = from_channels(&h, self.parts);
            h = to_channels(&pan_forward(&features, tokens2, &self.pan2, &self.mask2).tokens);
        }
        Ok(self.conv2.forward(&h).relu())
    }
}

impl Module for MotionEncoder {
    fn params_mut(&mut self) -> Vec<(String, &mut Var)> {
        let mut out = prefixed("embed", self.embed.params_mut());
        out.push(("tokens".into(), &mut self.tokens));
        for (i, l) in self.pan1.iter_mut().enumerate() {
            out.extend(prefixed(&format!("pan1.{i}"), l.params_mut()));
        }
        out.extend(prefixed("conv1", self.conv1.params_mut()));
        out.extend(prefixed("pointwise", self.pointwise.params_mut()));
        if let Some(t) = &mut self.tokens2 {
            out.push(("tokens2".into(), t));
        }
        for (i, l) in self.pan2.iter_mut().enumerate() {
            out.extend(prefixed(&format!("pan2.{i}"), l.params_mut()));
        }
        out.extend(prefixed("conv2", self.conv2.params_mut()));
        out
    }
}

/// Skeleton encoder `E_S`: one MLP per part over that part's offsets.
#[derive(Clone, Debug)]
pub struct SkeletonEncoder {
    pub parts: Vec<Mlp3>,
    joints: Vec<Vec<usize>>,
    num_joints: usize,
}

impl SkeletonEncoder {
    pub fn new(cfg: &NetConfig, partition: &BodyPartition, rng: &mut impl Rng) -> Self {
        let joints: Vec<Vec<usize>> = (0..partition.len()).map(|k| partition.joints_of(k).to_vec()).collect();
        let parts = joints.iter().map(|j| Mlp3::new(3 * j.len(), cfg.skeleton_hidden, cfg.embed_dim, rng)).collect();
        Self { parts, joints, num_joints: partition.num_joints }
    }

    /// Skeleton code `H_S`, `[1, N, d]`.
    pub fn forward(&self, skeleton: &SkeletonDef) -> Result<Var> {
        if skeleton.num_joints() != self.num_joints {
            return Err(shape_err(format!(
                "skeleton `{}` has {} joints, encoder expects {}",
                skeleton.name,
                skeleton.num_joints(),
                self.num_joints
            )));
        }
        let rows: Vec<Var> = self
            .parts
            .iter()
            .zip(&self.joints)
            .map(|(mlp, joints)| {
                let flat: Vec<f64> = joints.iter().flat_map(|&j| skeleton.offsets[j]).collect();
                let x = Var::constant(Tensor::new([1, flat.len()], flat));
                let d = mlp.layers[2].bias.shape()[0];
                mlp.forward(&x).reshape([1, 1, d])
            })
            .collect();
        Ok(Var::concat(&rows, 1))
    }
}

impl Module for SkeletonEncoder {
    fn params_mut(&mut self) -> Vec<(String, &mut Var)> {
        let mut out = Vec::new();
        for (k, m) in self.parts.iter_mut().enumerate() {
            out.extend(prefixed(&format!("part{k}"), m.params_mut()));
        }
        out
    }
}

/// Motion decoder `D_M`: fuses motion and skeleton codes, then two
/// upsample-and-convolve blocks back to `[B, T, J + 1, 4]`.
#[derive(Clone, Debug)]
pub struct MotionDecoder {
    pub conv_a: Conv1d,
    pub conv_b: Conv1d,
    rows: usize,
}

impl MotionDecoder {
    pub fn new(cfg: &NetConfig, partition: &BodyPartition, rng: &mut impl Rng) -> Self {
        let n = partition.len();
        let hidden = cfg.decoder_hidden.unwrap_or(n * cfg.conv_hidden);
        let rows = partition.num_joints + 1;
        Self {
            conv_a: Conv1d::new(n * cfg.embed_dim, hidden, cfg.kernel, 1, 1, rng),
            conv_b: Conv1d::new(hidden, rows * 4, cfg.kernel, 1, 1, rng),
            rows,
        }
    }

    /// `motion_code` is `[B, N * d, T / 4]`, `skeleton_code` is `[1, N, d]`
    /// or one code per clip, `[B, N, d]`.
    pub fn forward(&self, motion_code: &Var, skeleton_code: &Var) -> Result<Var> {
        let s = motion_code.shape();
        let c = skeleton_code.shape();
        if s.len() != 3 || c.len() != 3 || c[1] * c[2] != s[1] || (c[0] != 1 && c[0] != s[0]) {
            return Err(shape_err(format!("motion code {s:?} and skeleton code {c:?} disagree on N * d")));
        }
        if self.conv_a.weight.shape()[1] != s[1] {
            return Err(shape_err(format!("decoder expects {} code channels, got {}", self.conv_a.weight.shape()[1], s[1])));
        }
        let b = s[0];
        let h = motion_code.add(&skeleton_code.reshape([c[0], s[1], 1]));
        let h = self.conv_a.forward(&h.upsample_linear(2)).relu();
        let out = self.conv_b.forward(&h.upsample_linear(2));
        let t = out.shape()[2];
        Ok(out.reshape([b, self.rows, 4, t]).permute(&[0, 3, 1, 2]))
    }
}

impl Module for MotionDecoder {
    fn params_mut(&mut self) -> Vec<(String, &mut Var)> {
        let mut out = prefixed("conv_a", self.conv_a.params_mut());
        out.extend(prefixed("conv_b", self.conv_b.params_mut()));
        out
    }
}

/// Motion discriminator `C`: three strided temporal convolutions,
/// `4(J + 1) -> D -> D/2 -> 1`, then sigmoid and a mean over time.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub convs: [Conv1d; 3],
}

impl Discriminator {
    pub fn new(cfg: &NetConfig, rows: usize, rng: &mut impl Rng) -> Self {
        let dc = cfg.disc_channels;
        Self {
            convs: [
                Conv1d::new(rows * 4, dc, cfg.kernel, 2, 1, rng),
                Conv1d::new(dc, dc / 2, cfg.kernel, 2, 1, rng),
                Conv1d::new(dc / 2, 1, cfg.kernel, 2, 1, rng),
            ],
        }
    }

    /// Per-clip scores in `(0, 1)`, `[B]`.
    pub fn forward(&self, motion: &Var) -> Result<Var> {
        let s = motion.shape();
        let rows = self.convs[0].weight.shape()[1] / 4;
        if s.len() != 4 || s[2] != rows || s[3] != 4 {
            return Err(shape_err(format!("discriminator input {s:?} does not match [B, T, {rows}, 4]")));
        }
        let (b, t) = (s[0], s[1]);
        let x = motion.permute(&[0, 2, 3, 1]).reshape([b, s[2] * 4, t]);
        let h = self.convs[0].forward(&x).relu();
        let h = self.convs[1].forward(&h).relu();
        let h = self.convs[2].forward(&h).sigmoid();
        Ok(h.mean_axis(2).reshape([b]))
    }
}

impl Module for Discriminator {
    fn params_mut(&mut self) -> Vec<(String, &mut Var)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter_mut().enumerate() {
            out.extend(prefixed(&format!("c{i}"), c.params_mut()));
        }
        out
    }
}

/// Generator half of one structure's model.
#[derive(Clone, Debug)]
pub struct Generator {
    pub encoder: MotionEncoder,
    pub skeleton_encoder: SkeletonEncoder,
    pub decoder: MotionDecoder,
}

impl Module for Generator {
    fn params_mut(&mut self) -> Vec<(String, &mut Var)> {
        let mut out = prefixed("enc", self.encoder.params_mut());
        out.extend(prefixed("skel", self.skeleton_encoder.params_mut()));
        out.extend(prefixed("dec", self.decoder.params_mut()));
        out
    }
}

/// All learnable parameters of one structure.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub partition: BodyPartition,
    pub generator: Generator,
    pub discriminator: Discriminator,
}

impl ModelParams {
    pub fn new(cfg: &NetConfig, partition: &BodyPartition, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let generator = Generator {
            encoder: MotionEncoder::new(cfg, partition, rng)?,
            skeleton_encoder: SkeletonEncoder::new(cfg, partition, rng),
            decoder: MotionDecoder::new(cfg, partition, rng),
        };
        let discriminator = Discriminator::new(cfg, partition.num_joints + 1, rng);
        Ok(Self { partition: partition.clone(), generator, discriminator })
    }

    pub fn encode_motion(&self, motion: &Var) -> Result<Var> {
        self.generator.encoder.forward(motion)
    }

    pub fn encode_skeleton(&self, skeleton: &SkeletonDef) -> Result<Var> {
        self.generator.skeleton_encoder.forward(skeleton)
    }

    pub fn decode(&self, motion_code: &Var, skeleton_code: &Var) -> Result<Var> {
        self.generator.decoder.forward(motion_code, skeleton_code)
    }

    pub fn discriminate(&self, motion: &Var) -> Result<Var> {
        self.discriminator.forward(motion)
    }
}

impl Module for ModelParams {
    fn params_mut(&mut self) -> Vec<(String, &mut Var)> {
        let mut out = prefixed("gen", self.generator.params_mut());
        out.extend(prefixed("disc", self.discriminator.params_mut()));
        out
    }
}
