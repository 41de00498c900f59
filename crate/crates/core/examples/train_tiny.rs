//! Trains a tiny biped/quadruped model in memory, saves a checkpoint and
//! shows that resuming reproduces the next step exactly.
//!
//! ```text
//! cargo run --release --example train_tiny -- [epochs] [checkpoint]
//! ```

use std::path::PathBuf;

use partret::body_parts::BodyPartition;
use partret::checkpoint;
use partret::motion_io::synthetic::{tiny_biped, tiny_quadruped, walk_clips, Proportions};
use partret::networks::NetConfig;
use partret::training::{LossReport, Mode, StructureData, TrainConfig, Trainer};

fn data() -> partret::Result<[StructureData; 2]> {
    let a = tiny_biped("biped", Proportions::default());
    let b = tiny_quadruped("quad", Proportions { limbs: 1.2, torso: 0.9 });
    let pa = BodyPartition::preset("biped-quad3", &a)?;
    let pb = BodyPartition::preset("biped-quad3", &b)?;
    Ok([
        StructureData::new("A", walk_clips(&a, 4, 16, 1), pa)?,
        StructureData::new("B", walk_clips(&b, 4, 16, 2), pb)?,
    ])
}

fn main() -> partret::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(300, |s| s.parse().expect("epochs"));
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("partret-tiny.ckpt"));

    let config = TrainConfig { mode: Mode::BipedQuad, batch_size: 4, net: NetConfig::tiny(), seed: 3, ..TrainConfig::default() };
    let mut trainer = Trainer::new(config, data()?)?;
    println!("{}", LossReport::csv_header(Mode::BipedQuad));
    for _ in 0..epochs {
        let e = trainer.train_epoch()?;
        if e.epoch == 1 || e.epoch % (epochs / 10).max(1) == 0 {
            println!("{}", e.mean.csv_row(Mode::BipedQuad, e.epoch, e.steps.len()));
        }
    }
    checkpoint::save(&trainer, &path)?;
    println!("saved {} after {} steps", path.display(), trainer.step);

    let mut resumed = checkpoint::resume(&path, data()?)?;
    let next = trainer.train_epoch()?.mean.total;
    let again = resumed.train_epoch()?.mean.total;
    println!("next epoch total: continued {next:.12e}, resumed {again:.12e}");
    Ok(())
}
