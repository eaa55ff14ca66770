#![allow(dead_code)]

use dcd_core::model::{Dialogue, ModelConfig, Turn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Random dialogue with speakers cycling through `speakers`.
pub fn random_dialogue(cfg: &ModelConfig, t: usize, speakers: &[&str], seed: u64) -> Dialogue {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let turns = (0..t)
        .map(|i| Turn {
            speaker: speakers[i % speakers.len()].to_string(),
            u: gaussian_vec(&mut rng, cfg.u_dim),
            f_raw: gaussian_vec(&mut rng, cfg.f_raw_dim),
            label: rng.random_range(0..cfg.n_classes),
            text: None,
        })
        .collect();
    Dialogue {
        id: format!("d{seed}"),
        turns,
    }
}
