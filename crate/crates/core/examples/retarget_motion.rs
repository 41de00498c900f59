//! Retargets a walk from one biped onto a quadruped with a model trained
//! for a few hundred steps, and writes the result as BVH.
//!
//! ```text
//! cargo run --release --example retarget_motion -- [out.bvh]
//! ```

use std::path::PathBuf;

use partret::body_parts::BodyPartition;
use partret::kinematics::fk_clip;
use partret::motion_io::synthetic::{tiny_biped, tiny_quadruped, walk_clips, Proportions};
use partret::motion_io::{parse_bvh, save_bvh};
use partret::networks::NetConfig;
use partret::training::{retarget, Mode, StructureData, TrainConfig, Trainer};

fn main() -> partret::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("partret-retarget.bvh"));
    let a = tiny_biped("biped", Proportions::default());
    let b = tiny_quadruped("quad", Proportions::default());
    let data = [
        StructureData::new("A", walk_clips(&a, 4, 16, 5), BodyPartition::preset("biped-quad3", &a)?)?,
        StructureData::new("B", walk_clips(&b, 4, 16, 6), BodyPartition::preset("biped-quad3", &b)?)?,
    ];
    let config = TrainConfig { mode: Mode::BipedQuad, batch_size: 4, net: NetConfig::tiny(), ..TrainConfig::default() };
    let mut trainer = Trainer::new(config, data)?;
    for _ in 0..200 {
        trainer.train_epoch()?;
    }

    let [ma, mb] = &trainer.models;
    let source = walk_clips(&a, 1, 32, 99).remove(0);
    // A differently proportioned quadruped than the one trained on.
    let long_legs = tiny_quadruped("long_legs", Proportions { limbs: 1.5, torso: 1.0 });
    let moved = retarget(&source, ma, mb, &long_legs)?;
    save_bvh(&out, &moved.to_raw())?;

    let (skel, raw) = parse_bvh(&out)?;
    println!("wrote {}: {} joints, {} frames", out.display(), skel.num_joints(), raw.frames());
    let (src, dst) = (fk_clip(&source)?, fk_clip(&moved)?);
    let last = src.frames() - 1;
    println!(
        "root after {} frames: source {:?}, retargeted {:?}",
        last + 1,
        src.get(0, last, 0).map(|v| (v * 100.0).round() / 100.0),
        dst.get(0, last, 0).map(|v| (v * 100.0).round() / 100.0)
    );

    // Identity retargeting: A onto its own skeleton.
    let same = retarget(&source, ma, ma, &a)?;
    let (p, q) = (fk_clip(&source)?.0, fk_clip(&same)?.0);
    let err = p.data().chunks(3).zip(q.data().chunks(3)).map(|(x, y)| {
        ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt()
    });
    let n = p.numel() / 3;
    println!("A -> A mean joint error / height: {:.4}", err.sum::<f64>() / n as f64 / a.height);
    Ok(())
}
