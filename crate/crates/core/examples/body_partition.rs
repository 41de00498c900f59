//! Body-part presets, the attention mask they induce, and the joint
//! positional encoding.

use partret::body_parts::{build_mask, positional_encoding, BodyPartition, PRESETS};
use partret::motion_io::synthetic::{biped, quadruped, tiny_quadruped, Proportions};

fn main() -> partret::Result<()> {
    let human = biped("human", Proportions::default());
    let dog = quadruped("dog", Proportions::default());
    for preset in PRESETS {
        for skel in [&human, &dog] {
            let p = BodyPartition::preset(preset, skel)?;
            println!("{preset} on {}:", skel.name);
            for (k, name) in p.part_names.iter().enumerate() {
                let joints: Vec<&str> = p.joints_of(k).iter().map(|&j| skel.joint_names[j].as_str()).collect();
                println!("  {name:<8} {}{}", joints.join(" "), if p.parts[k].contains(&p.vel_index()) { " +vel" } else { "" });
            }
            let uncovered = (0..skel.num_joints()).filter(|j| !p.covered().contains(j)).count();
            println!("  {uncovered} joint(s) outside every part, digest {}", &p.digest()[..12]);
        }
    }

    // Mask rows: part tokens first, then joints, then root velocity.
    let small = tiny_quadruped("small", Proportions::default());
    let p = BodyPartition::preset("biped-quad3", &small)?;
    let mask = build_mask(&p, true);
    let mut labels: Vec<String> = p.part_names.clone();
    labels.extend(small.joint_names.iter().cloned());
    labels.push("vel".into());
    println!("\nmask for {} ('.' open, '#' blocked):", small.name);
    for (i, label) in labels.iter().enumerate() {
        let row: String = (0..mask.size).map(|j| if mask.is_open(i, j) { '.' } else { '#' }).collect();
        println!("  {label:>9} {row}");
    }

    let pe = positional_encoding(3, 8, 10_000.0)?;
    println!("\nPE(j=3, d=8) = {:?}", pe.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
    Ok(())
}
