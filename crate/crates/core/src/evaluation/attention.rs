use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use partret_autograd::{Tensor, Var};

use crate::error::{io, Error, Result};
use crate::motion_io::MotionClip;
use crate::training::StructureModel;

/// First-layer token-row attention over one clip.
#[derive(Clone, Debug)]
pub struct AttentionHeatmap {
    pub part_names: Vec<String>,
    /// `token:<part>` for every part, then joint names, then `velocity`.
    pub column_names: Vec<String>,
    /// `[T][N][N + J + 1]` full softmax rows of the part tokens.
    pub weights: Vec<Vec<Vec<f64>>>,
    /// `[T][J]` per-joint display values: the maximum over containing
    /// parts, with the velocity weight folded into the root cell.
    pub display: Vec<Vec<f64>>,
}

/// Token-row weights of the first attention layer for `clip`, a physical
/// clip of `model`'s structure.
pub fn attention_heatmap(clip: &MotionClip, model: &StructureModel) -> Result<AttentionHeatmap> {
    let partition = model.partition();
    let (n, j) = (partition.len(), partition.num_joints);
    if clip.num_joints() != j {
        return Err(Error::PartitionMismatch(format!(
            "clip has {} joints, model `{}` expects {j}",
            clip.num_joints(),
            model.id
        )));
    }
    let t = clip.frames();
    let m = model.stats.normalize(&clip.data)?.reshape([1, t, j + 1, 4]);
    let out = model.params.generator.encoder.attend(&Var::constant(m))?;
    let w: &Tensor = out.weights[0].value();
    let root = clip.skeleton.root();
    let mut weights = Vec::with_capacity(t);
    let mut display = Vec::with_capacity(t);
    for f in 0..t {
        let rows: Vec<Vec<f64>> = (0..n).map(|k| (0..n + j + 1).map(|c| w.at(&[0, f, k, c])).collect()).collect();
        let mut cells = vec![0.0f64; j];
        for (k, row) in rows.iter().enumerate() {
            for &c in &partition.parts[k] {
                let cell = if c == j { root } else { c };
                cells[cell] = cells[cell].max(row[n + c]);
            }
        }
        weights.push(rows);
        display.push(cells);
    }
    let mut column_names: Vec<String> = partition.part_names.iter().map(|p| format!("token:{p}")).collect();
    column_names.extend(clip.skeleton.joint_names.iter().cloned());
    column_names.push("velocity".into());
    Ok(AttentionHeatmap { part_names: partition.part_names.clone(), column_names, weights, display })
}

/// White-hot ramp: black, red, yellow, white.
fn heat(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0) * 3.0;
    let c = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [c(v), c(v - 1.0), c(v - 2.0)]
}

impl AttentionHeatmap {
    pub fn frames(&self) -> usize {
        self.weights.len()
    }

    /// `frame,part,column,weight` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,part,column,weight\n");
        for (f, rows) in self.weights.iter().enumerate() {
            for (k, row) in rows.iter().enumerate() {
                for (c, w) in row.iter().enumerate() {
                    let _ = writeln!(s, "{f},{},{},{w:.9e}", self.part_names[k], self.column_names[c]);
                }
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| io(path, e))
    }

    /// Renders `display` as a PNG with one `cell x cell` square per joint
    /// (columns) and frame (rows), scaled by the largest value.
    pub fn write_png(&self, path: &Path, cell: u32) -> Result<()> {
        let cols = self.display.first().map_or(0, Vec::len) as u32;
        let rows = self.display.len() as u32;
        if cols == 0 || rows == 0 || cell == 0 {
            return Err(Error::Config("empty heatmap".into()));
        }
        let peak = self.display.iter().flatten().fold(0.0f64, |a, &b| a.max(b)).max(f64::MIN_POSITIVE);
        let (w, h) = (cols * cell, rows * cell);
        let mut pixels = Vec::with_capacity((w * h * 3) as usize);
        for y in 0..h {
            let row = &self.display[(y / cell) as usize];
            for x in 0..w {
                pixels.extend(heat(row[(x / cell) as usize] / peak));
            }
        }
        let file = File::create(path).map_err(|e| io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), w, h);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let png_err = |e: png::EncodingError| Error::Config(format!("{}: {e}", path.display()));
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(&pixels).map_err(png_err)?;
        writer.finish().map_err(png_err)
    }
}
