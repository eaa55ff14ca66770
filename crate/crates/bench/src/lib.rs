//! Fixtures shared by the benchmarks.

use dcd_core::synthetic::{sample_spec, SyntheticConfig};
use dcd_core::{Dialogue, Model, ModelConfig, Result};

/// A freshly initialized model and one generated dialogue of `turns` turns
/// whose feature sizes match `cfg`.
pub fn fixture(cfg: ModelConfig, turns: usize, seed: u64) -> Result<(Model, Dialogue)> {
    let synth = SyntheticConfig {
        turns,
        seed,
        ..SyntheticConfig::matching(&cfg)
    };
    let dialogue = sample_spec(&synth)?
        .generate_corpus("bench", 1, 0)?
        .remove(0)
        .dialogue;
    Ok((Model::new(cfg, seed)?, dialogue))
}

/// Named model sizes: `toy`, `synthetic` and `full`.
pub fn sizes() -> Vec<(&'static str, ModelConfig)> {
    let synthetic = dcd_core::RunConfig::synthetic().model_config(16, 32, 4);
    vec![
        ("toy", ModelConfig::toy()),
        ("synthetic", synthetic),
        ("full", ModelConfig::default()),
    ]
}
