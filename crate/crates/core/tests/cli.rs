mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use partret::motion_io::synthetic::{biped, quadruped, walk, write_corpus, CorpusSpec, Proportions, WalkParams};
use partret::motion_io::{parse_bvh, save_bvh};

use common::scratch;

const RUN_TOML: &str = r#"mode = "biped_quad"
seed = 5
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
batch_size = 4
epochs = 2
checkpoint_every = 1

[train.net]
embed_dim = 8
embed_hidden = 16
conv_hidden = 4
kernel = 5
skeleton_hidden = 8
disc_channels = 8

[eval]
samples = 8

[eval.fid_model]
channels = 8
epochs = 2
"#;

const FRAMES: usize = 140;

fn partret(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_partret")).args(args).output().expect("run partret")
}

fn ok(out: &Output) -> String {
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(out.status.success(), "partret failed: {stderr}");
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fail(out: &Output) -> (i32, String) {
    assert!(!out.status.success(), "partret unexpectedly succeeded");
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

/// Two structures with two skeletons and three motions each, plus the
/// run config. Returns the config path.
fn fixture(name: &str) -> PathBuf {
    let root = scratch(name);
    let bipeds = [biped("short", Proportions { limbs: 0.9, torso: 0.9 }), biped("tall", Proportions { limbs: 1.1, torso: 1.05 })];
    let quads = [quadruped("small", Proportions { limbs: 0.8, torso: 0.9 }), quadruped("large", Proportions { limbs: 1.2, torso: 1.1 })];
    for (id, skeletons) in [("biped", &bipeds[..]), ("quad", &quads[..])] {
        let spec = CorpusSpec {
            structure_id: id,
            skeletons,
            motions: 3,
            frames: FRAMES,
            source_fps: 60.0,
            fps: 30,
            test_every: 3,
            seed: 3,
        };
        write_corpus(&root.join(id), &spec).unwrap();
    }
    let config = root.join("run.toml");
    std::fs::write(&config, RUN_TOML).unwrap();
    config
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn prepared_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn prepare_skips_short_files_and_is_reproducible() {
    let config = fixture("prepare");
    let root = config.parent().unwrap();
    let skel = biped("short", Proportions { limbs: 0.9, torso: 0.9 });
    let short = WalkParams { frames: 20, fps: 60.0, ..WalkParams::default() };
    save_bvh(&root.join("biped/short/stub.bvh"), &walk(&skel, short)).unwrap();
    let manifest = root.join("biped/manifest.toml");
    let mut text = std::fs::read_to_string(&manifest).unwrap();
    text.push_str("\n[[files]]\npath = \"short/stub.bvh\"\nsplit = \"train\"\n");
    std::fs::write(&manifest, text).unwrap();

    let out = partret(&["--config", arg(&config), "prepare"]);
    ok(&out);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("warning: skipped") && stderr.contains("stub.bvh"), "{stderr}");

    let dir = root.join("run/prepared/biped");
    let first = prepared_files(&dir);
    assert!(first.iter().any(|(n, _)| n == "clips.bin"));
    ok(&partret(&["--config", arg(&config), "prepare"]));
    assert_eq!(first, prepared_files(&dir));
}

#[test]
fn fps_mismatch_names_the_file() {
    let config = fixture("fps");
    let manifest = config.parent().unwrap().join("quad/manifest.toml");
    let text = std::fs::read_to_string(&manifest).unwrap().replace("fps = 30", "fps = 25");
    std::fs::write(&manifest, text).unwrap();
    let (code, stderr) = fail(&partret(&["--config", arg(&config), "prepare"]));
    assert_eq!(code, 1);
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("error[E_FPS]") && stderr.contains("walk_00.bvh"), "{stderr}");
}

#[test]
fn train_resume_retarget_eval_and_attention() {
    let config = fixture("flow");
    let root = config.parent().unwrap();
    let cfg = arg(&config);
    ok(&partret(&["--config", cfg, "prepare"]));

    // One epoch, then resume to two.
    ok(&partret(&["--config", cfg, "train", "--epochs", "1"]));
    let ckpt = root.join("run/checkpoints");
    let saved: Vec<_> = std::fs::read_dir(&ckpt).unwrap().collect();
    assert_eq!(saved.len(), 1);
    let first = ckpt.join("epoch_00001.ckpt");
    assert!(first.exists());
    let log = std::fs::read_to_string(root.join("run/loss.csv")).unwrap();
    assert!(log.starts_with("epoch,steps,rec,cyc,kine,adv,vel,total,disc\n"), "{log}");
    ok(&partret(&["--config", cfg, "train", "--epochs", "2", "--checkpoint", arg(&first)]));
    let resumed = std::fs::read_to_string(root.join("run/loss.csv")).unwrap();
    assert_eq!(resumed.lines().count(), 3);

    // A straight two-epoch run logs the same second epoch.
    let straight = fixture("flow-straight");
    ok(&partret(&["--config", arg(&straight), "prepare"]));
    ok(&partret(&["--config", arg(&straight), "train", "--epochs", "2"]));
    let reference = std::fs::read_to_string(straight.parent().unwrap().join("run/loss.csv")).unwrap();
    assert_eq!(resumed, reference);

    let input = root.join("biped/short/walk_02.bvh");
    let out = root.join("out/walk_02_quad.bvh");
    let last = ckpt.join("epoch_00002.ckpt");
    ok(&partret(&["retarget", "--checkpoint", arg(&last), "--input", arg(&input), "--target", "quad", "--out", arg(&out)]));
    let (skel, motion) = parse_bvh(&out).unwrap();
    let quad = quadruped("q", Proportions::default());
    assert_eq!(skel.num_joints(), quad.num_joints());
    assert_eq!(motion.frames(), FRAMES / 2 / 4 * 4);

    // Retarget onto a BVH-defined target skeleton.
    let onto = root.join("out/onto_large.bvh");
    let target = root.join("quad/large/walk_00.bvh");
    ok(&partret(&["retarget", "--checkpoint", arg(&last), "--input", arg(&input), "--target", arg(&target), "--out", arg(&onto)]));
    let (large, _) = parse_bvh(&target).unwrap();
    assert_eq!(parse_bvh(&onto).unwrap().0.offsets, large.offsets);

    ok(&partret(&["--config", cfg, "eval"]));
    let pairs = std::fs::read_to_string(root.join("run/eval/pairs.csv")).unwrap();
    let mut lines = pairs.lines();
    assert_eq!(lines.next(), Some("source,target,source_skeleton,target_skeleton,clips,mpjpe"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);
    for r in &rows {
        assert_eq!(r.len(), 6);
        assert!(r[5].parse::<f64>().unwrap() >= 0.0);
    }
    for stem in ["biped_to_quad", "quad_to_biped"] {
        assert!(root.join(format!("run/eval/{stem}.toml")).exists());
        assert!(root.join(format!("run/eval/{stem}_recall.csv")).exists());
    }

    ok(&partret(&["--config", cfg, "attn-viz", "--input", arg(&input)]));
    let csv = std::fs::read_to_string(root.join("run/attention/walk_02_attention.csv")).unwrap();
    assert!(root.join("run/attention/walk_02_attention.png").exists());
    let mut sums = std::collections::BTreeMap::<(String, String), f64>::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        *sums.entry((f[0].to_string(), f[1].to_string())).or_default() += f[3].parse::<f64>().unwrap();
    }
    assert!(!sums.is_empty());
    for (key, s) in sums {
        assert!((s - 1.0).abs() < 1e-6, "{key:?} sums to {s}");
    }
}

#[test]
fn errors_are_one_line_with_a_code() {
    let (code, stderr) = fail(&partret(&["bogus"]));
    assert_eq!(code, 2);
    assert_eq!(stderr.lines().count(), 1);
    assert!(stderr.starts_with("error[E_USAGE]"), "{stderr}");

    let (code, stderr) = fail(&partret(&["prepare"]));
    assert_eq!(code, 1);
    assert!(stderr.starts_with("error[E_CONFIG]") && stderr.lines().count() == 1, "{stderr}");

    let dir = scratch("errors");
    let bad = dir.join("bad.bvh");
    std::fs::write(&bad, "HIERARCHY\nROOT a\n{\n  OFFSET 0 0\n").unwrap();
    let ckpt = dir.join("missing.ckpt");
    let (_, stderr) = fail(&partret(&["retarget", "--checkpoint", arg(&ckpt), "--input", arg(&bad), "--target", "x", "--out", "o.bvh"]));
    assert!(stderr.starts_with("error[E_IO]") && stderr.lines().count() == 1, "{stderr}");

    let config = fixture("errors-train");
    let (_, stderr) = fail(&partret(&["--config", arg(&config), "train"]));
    assert!(stderr.starts_with("error[") && stderr.lines().count() == 1, "{stderr}");
}
