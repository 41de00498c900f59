//! Writes a paired synthetic biped/quadruped corpus with manifests and a
//! run config, then prepares it the way `partret prepare` does.
//!
//! ```text
//! cargo run --release --example prepare_dataset -- /tmp/partret-demo
//! cargo run --release --bin partret -- --config /tmp/partret-demo/run.toml train
//! ```

use std::path::PathBuf;

use partret::cli::{prepare, RunConfig};
use partret::motion_io::synthetic::{biped, quadruped, write_corpus, CorpusSpec, Proportions};

const RUN_TOML: &str = r#"mode = "biped_quad"
seed = 7
run_dir = "run"
clip_len = 32

[[structures]]
id = "biped"
manifest = "biped/manifest.toml"
partition = "biped-quad3"

[[structures]]
id = "quad"
manifest = "quad/manifest.toml"
partition = "biped-quad3"

[train]
batch_size = 8
epochs = 4
checkpoint_every = 2

[train.net]
embed_dim = 8
embed_hidden = 16
conv_hidden = 4
kernel = 5
skeleton_hidden = 8
disc_channels = 8

[eval]
samples = 64

[eval.fid_model]
channels = 16
epochs = 5
"#;

fn main() -> partret::Result<()> {
    let root = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("partret-demo"));
    let bipeds = [
        biped("biped_short", Proportions { limbs: 0.85, torso: 0.9 }),
        biped("biped_tall", Proportions { limbs: 1.15, torso: 1.05 }),
    ];
    let quads = [
        quadruped("quad_small", Proportions { limbs: 0.8, torso: 0.9 }),
        quadruped("quad_large", Proportions { limbs: 1.2, torso: 1.2 }),
    ];
    for (id, skeletons) in [("biped", &bipeds), ("quad", &quads)] {
        let spec = CorpusSpec {
            structure_id: id,
            skeletons,
            motions: 6,
            frames: 260,
            source_fps: 60.0,
            fps: 30,
            test_every: 3,
            seed: 11,
        };
        let manifest = write_corpus(&root.join(id), &spec)?;
        println!("wrote {}", manifest.display());
    }
    let config = root.join("run.toml");
    std::fs::write(&config, RUN_TOML).expect("write run config");

    let cfg = RunConfig::load(&config)?;
    for s in prepare(&cfg)? {
        println!("{}: {} skeletons, clip length {}", s.structure_id, s.skeletons, s.clip_len);
    }
    println!("run config: {}", config.display());
    Ok(())
}
