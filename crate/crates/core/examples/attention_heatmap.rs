//! Exports first-layer attention of a walk as CSV and a PNG heatmap.
//!
//! ```text
//! cargo run --release --example attention_heatmap -- [out_dir]
//! ```

use std::path::PathBuf;

use partret::body_parts::BodyPartition;
use partret::evaluation::attention_heatmap;
use partret::motion_io::synthetic::{biped, walk_clips, Proportions};
use partret::networks::NetConfig;
use partret::training::{Mode, StructureData, TrainConfig, Trainer};

fn main() -> partret::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("partret-attention"));
    let short = biped("short", Proportions { limbs: 0.9, torso: 0.9 });
    let tall = biped("tall", Proportions { limbs: 1.1, torso: 1.1 });
    let data = [
        StructureData::new("A", walk_clips(&short, 4, 32, 1), BodyPartition::preset("humanoid6", &short)?)?,
        StructureData::new("B", walk_clips(&tall, 4, 32, 2), BodyPartition::preset("humanoid6", &tall)?)?,
    ];
    let config = TrainConfig { mode: Mode::Humanoid, batch_size: 4, net: NetConfig::tiny(), ..TrainConfig::default() };
    let mut trainer = Trainer::new(config, data)?;
    for _ in 0..50 {
        trainer.train_epoch()?;
    }

    let clip = &trainer.data[0].clips[0];
    let heat = attention_heatmap(clip, &trainer.models[0])?;
    std::fs::create_dir_all(&out).expect("create output dir");
    heat.write_csv(&out.join("attention.csv"))?;
    heat.write_png(&out.join("attention.png"), 10)?;
    println!("wrote {} frames to {}", heat.frames(), out.display());

    for (k, part) in heat.part_names.iter().enumerate() {
        let row = &heat.weights[0][k];
        let (best, w) = row.iter().enumerate().fold((0, 0.0), |acc, (i, &w)| if w > acc.1 { (i, w) } else { acc });
        println!("  {part:<10} row sum {:.6}, strongest {} ({w:.3})", row.iter().sum::<f64>(), heat.column_names[best]);
    }
    Ok(())
}
