//! Seeded, reproducible measurement noise for synthetic trajectories.

use gapdyn_core::trajectory::TrajectoryPoint;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Adds independent uniform noise in `[-spread/2, +spread/2]` to every
/// `u_s` and `u_v` value. The stream is fully determined by `seed`: points
/// are visited in order and each point draws `u_s` noise first, then `u_v`.
pub fn perturb_trajectory(points: &mut [TrajectoryPoint], spread: f64, seed: u64) {
    if spread == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = spread / 2.0;
    for p in points.iter_mut() {
        p.u_s += rng.gen_range(-half..=half);
        p.u_v += rng.gen_range(-half..=half);
    }
}
