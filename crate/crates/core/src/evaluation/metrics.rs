use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::fk_clip;
use crate::motion_io::MotionClip;

/// Height-normalized position error of one pair: squared joint distance
/// averaged over frames and joints, divided by `height`, times 10^3.
///
/// `a` and `b` are flat `[T * J * 3]` position buffers.
pub fn mpjpe_positions(a: &[f64], b: &[f64], height: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() || a.len() % 3 != 0 {
        return Err(Error::PairMismatch(format!("position buffers of {} and {} values", a.len(), b.len())));
    }
    if !(height > 0.0) {
        return Err(Error::PairMismatch(format!("target height {height} must be positive")));
    }
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sq / (a.len() / 3) as f64 / height * 1e3)
}

/// Mean of [`mpjpe_positions`] over clip pairs, normalized by the height
/// of each ground-truth skeleton.
pub fn mpjpe(retargeted: &[MotionClip], ground_truth: &[MotionClip]) -> Result<f64> {
    if retargeted.len() != ground_truth.len() || retargeted.is_empty() {
        return Err(Error::PairMismatch(format!(
            "{} retargeted clips for {} ground-truth clips",
            retargeted.len(),
            ground_truth.len()
        )));
    }
    let mut total = 0.0;
    for (r, g) in retargeted.iter().zip(ground_truth) {
        total += pair_mpjpe(r, g)?;
    }
    Ok(total / retargeted.len() as f64)
}

/// [`mpjpe`] of a single pair.
pub fn pair_mpjpe(retargeted: &MotionClip, ground_truth: &MotionClip) -> Result<f64> {
    if retargeted.frames() != ground_truth.frames() || retargeted.num_joints() != ground_truth.num_joints() {
        return Err(Error::PairMismatch(format!(
            "clip of {}x{} paired with {}x{} (frames x joints)",
            retargeted.frames(),
            retargeted.num_joints(),
            ground_truth.frames(),
            ground_truth.num_joints()
        )));
    }
    let a = fk_clip(retargeted)?;
    let b = fk_clip(ground_truth)?;
    mpjpe_positions(a.0.data(), b.0.data(), ground_truth.skeleton.height)
}

/// `count` log-spaced contact thresholds over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
        }
    }
}

/// The default recall-curve thresholds: 20 points over `[1e-5, 1e-1]`
/// squared offset units per frame.
pub fn epsilon_grid() -> Vec<f64> {
    log_grid(1e-5, 1e-1, 20)
}

/// Frames `t >= 1` at which the squared displacement from `t - 1` is below
/// `eps`.
pub fn contact_frames(track: &[[f64; 3]], eps: f64) -> Vec<usize> {
    (1..track.len())
        .filter(|&t| {
            let d: f64 = (0..3).map(|k| (track[t][k] - track[t - 1][k]).powi(2)).sum();
            d < eps
        })
        .collect()
}

/// Ground-truth contact frames that are also target contacts, and all
/// ground-truth contact frames, summed over feet.
pub fn contact_counts(gt: &[Vec<[f64; 3]>], tar: &[Vec<[f64; 3]>], eps: f64) -> Result<(usize, usize)> {
    if gt.len() != tar.len() {
        return Err(Error::PairMismatch(format!("{} ground-truth feet vs {} target feet", gt.len(), tar.len())));
    }
    let (mut hits, mut total) = (0, 0);
    for (g, t) in gt.iter().zip(tar) {
        if g.len() != t.len() {
            return Err(Error::PairMismatch(format!("foot tracks of {} and {} frames", g.len(), t.len())));
        }
        let target = contact_frames(t, eps);
        for f in contact_frames(g, eps) {
            total += 1;
            if target.binary_search(&f).is_ok() {
                hits += 1;
            }
        }
    }
    Ok((hits, total))
}

/// One point of a recall curve; `recall` is `None` when the ground truth
/// has no contacts at this threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallPoint {
    pub epsilon: f64,
    pub recall: Option<f64>,
    pub hits: usize,
    pub contacts: usize,
}

/// World-space tracks of the skeleton's feet.
pub fn foot_tracks(clip: &MotionClip) -> Result<Vec<Vec<[f64; 3]>>> {
    let pos = fk_clip(clip)?.0;
    let j = clip.num_joints();
    let d = pos.data();
    Ok(clip
        .skeleton
        .feet()
        .into_iter()
        .map(|f| (0..clip.frames()).map(|t| std::array::from_fn(|k| d[(t * j + f) * 3 + k])).collect())
        .collect())
}

/// Foot-contact recall of `tar` against `gt` at every threshold, pooled
/// over all pairs.
pub fn contact_recall(pairs: &[(&MotionClip, &MotionClip)], epsilons: &[f64]) -> Result<Vec<RecallPoint>> {
    let tracks: Vec<_> = pairs
        .iter()
        .map(|(g, t)| Ok((foot_tracks(g)?, foot_tracks(t)?)))
        .collect::<Result<_>>()?;
    epsilons
        .iter()
        .map(|&eps| {
            let (mut hits, mut contacts) = (0, 0);
            for (g, t) in &tracks {
                let (h, c) = contact_counts(g, t, eps)?;
                hits += h;
                contacts += c;
            }
            let recall = (contacts > 0).then(|| hits as f64 / contacts as f64);
            Ok(RecallPoint { epsilon: eps, recall, hits, contacts })
        })
        .collect()
}
