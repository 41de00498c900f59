//! Height-normalized MPJPE, foot-contact recall, FID over autoencoder
//! features, velocity-stratified sampling and attention heatmaps.

mod attention;
mod fid;
mod metrics;

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{io, Error, Result};
use crate::motion_io::MotionClip;

pub use attention::{attention_heatmap, AttentionHeatmap};
pub use fid::{fid, train_fid_model, FidConfig, FidModel, FidResult, COV_RIDGE, FID_STRIDE};
pub use metrics::{
    contact_counts, contact_frames, contact_recall, epsilon_grid, foot_tracks, log_grid, mpjpe, mpjpe_positions,
    pair_mpjpe, RecallPoint,
};

/// Number of equal-width speed strata used by [`sample_by_velocity`].
pub const VELOCITY_BINS: usize = 10;

/// Stratum of every clip by mean root speed.
fn strata(clips: &[MotionClip]) -> Vec<Vec<usize>> {
    let speeds: Vec<f64> = clips.iter().map(MotionClip::mean_speed).collect();
    let lo = speeds.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / VELOCITY_BINS as f64;
    let mut bins = vec![Vec::new(); VELOCITY_BINS];
    for (i, s) in speeds.iter().enumerate() {
        let b = if width > 0.0 { (((s - lo) / width) as usize).min(VELOCITY_BINS - 1) } else { 0 };
        bins[b].push(i);
    }
    bins.retain(|b| !b.is_empty());
    bins
}

/// Indices of `n` clips drawn evenly across root-speed strata, uniformly
/// within each stratum.
///
/// Without replacement, strata that run out pass their remaining quota
/// to the others, and asking for more clips than exist is an error.
pub fn sample_by_velocity(clips: &[MotionClip], n: usize, replace: bool, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if clips.is_empty() {
        return Err(Error::EmptyDataset("no clips to sample from".into()));
    }
    if !replace && n > clips.len() {
        return Err(Error::EmptyDataset(format!("asked for {n} clips without replacement, only {} exist", clips.len())));
    }
    let mut bins = strata(clips);
    for b in &mut bins {
        b.shuffle(rng);
    }
    let mut taken = vec![0usize; bins.len()];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let open: Vec<usize> = (0..bins.len()).filter(|&b| replace || taken[b] < bins[b].len()).collect();
        let round = (n - out.len()).min(open.len());
        // Strata served in this round; leftovers go to random strata.
        let mut chosen = open.clone();
        chosen.shuffle(rng);
        chosen.truncate(round);
        for b in chosen {
            let i = if replace { bins[b][rng.gen_range(0..bins[b].len())] } else { bins[b][taken[b]] };
            taken[b] += 1;
            out.push(i);
        }
    }
    Ok(out)
}

/// MPJPE of one evaluated pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub key: String,
    pub source_skeleton: String,
    pub target_skeleton: String,
    pub mpjpe: f64,
}

/// Metrics of one source-to-target evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub source: String,
    pub target: String,
    pub mpjpe: Option<f64>,
    pub pairs: Vec<PairScore>,
    pub recall: Vec<RecallPoint>,
    pub fid: Option<FidResult>,
}

impl MetricReport {
    pub fn recall_csv(&self) -> String {
        let mut s = String::from("epsilon,recall,hits,contacts\n");
        for p in &self.recall {
            let r = p.recall.map_or_else(String::new, |r| format!("{r:.6}"));
            let _ = writeln!(s, "{:.6e},{r},{},{}", p.epsilon, p.hits, p.contacts);
        }
        s
    }

    /// Writes `<stem>.toml` and `<stem>_recall.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        let report = dir.join(format!("{stem}.toml"));
        std::fs::write(&report, text).map_err(|e| io(&report, e))?;
        let csv = dir.join(format!("{stem}_recall.csv"));
        std::fs::write(&csv, self.recall_csv()).map_err(|e| io(&csv, e))
    }
}
