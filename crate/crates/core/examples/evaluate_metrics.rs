//! The evaluation metrics on synthetic motion: MPJPE, foot-contact recall,
//! FID over autoencoder features and velocity-stratified sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use partret::evaluation::{contact_recall, epsilon_grid, fid, pair_mpjpe, sample_by_velocity, train_fid_model, FidConfig};
use partret::motion_io::synthetic::{biped, walk_clips, Proportions};
use partret::motion_io::MotionClip;

fn main() -> partret::Result<()> {
    let skel = biped("walker", Proportions::default());
    let real = walk_clips(&skel, 40, 32, 1);
    // A "retargeted" set: the same motion with every joint rotation damped.
    let damped: Vec<MotionClip> = real
        .iter()
        .map(|c| {
            let mut d = c.clone();
            let j = c.num_joints();
            for (i, v) in d.data.data_mut().iter_mut().enumerate() {
                let (row, k) = ((i / 4) % (j + 1), i % 4);
                if row > 0 && row < j && k > 0 {
                    *v *= 0.7;
                }
            }
            MotionClip::new(c.skeleton.clone(), d.data, c.frame_time).expect("same shape")
                .with_unit_rotations()
        })
        .collect();

    println!("MPJPE(real, real)   = {:.4}", pair_mpjpe(&real[0], &real[0])?);
    println!("MPJPE(damped, real) = {:.4}", pair_mpjpe(&damped[0], &real[0])?);

    let pairs: Vec<(&MotionClip, &MotionClip)> = real.iter().zip(&damped).collect();
    println!("contact recall:");
    for p in contact_recall(&pairs, &epsilon_grid())?.iter().step_by(4) {
        println!("  eps {:.1e}: {}", p.epsilon, p.recall.map_or("no contacts".into(), |r| format!("{r:.3} ({}/{})", p.hits, p.contacts)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let picked = sample_by_velocity(&real, 20, false, &mut rng)?;
    println!("velocity-stratified sample: {picked:?}");

    let cfg = FidConfig { channels: 16, epochs: 10, ..FidConfig::default() };
    let train: Vec<&MotionClip> = real.iter().collect();
    let (model, history) = train_fid_model(&train, &cfg)?;
    println!("feature model loss {:.4} -> {:.4}", history[0], history[history.len() - 1]);
    let fr = model.features(&train[..20])?;
    let fr2 = model.features(&train[20..])?;
    let fd = model.features(&damped.iter().collect::<Vec<_>>()[..20])?;
    println!("FID(real, real') = {:.4}", fid(&fr, &fr2)?.fid);
    println!("FID(damped, real) = {:.4}", fid(&fd, &fr)?.fid);
    Ok(())
}
