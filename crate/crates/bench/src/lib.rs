//! Fixtures shared by the benchmarks.

use cpgbn_core::generate::{planted_phrase_corpus, PlantedConfig};
use cpgbn_core::{Globals, Hyperparams, Observation, RngStream};

/// Planted-phrase documents copied `copies` times, with a two-layer model
/// drawn from its prior.
pub fn fixture(copies: usize, seed: u64) -> (Globals, Vec<Observation>) {
    let cfg = PlantedConfig {
        num_docs: 100,
        ..PlantedConfig::default()
    };
    let mut rng = RngStream::new(seed, 0);
    let pc = planted_phrase_corpus(&cfg, &mut rng).expect("valid planted config");
    let mut hyper = Hyperparams::new(cfg.width, vec![8, 4]);
    hyper.e0 = 1.0;
    hyper.f0 = 1.0;
    let globals = Globals::from_prior(hyper, cfg.vocab_size, &mut rng).expect("valid hyperparameters");
    let obs = pc
        .docs
        .iter()
        .cycle()
        .take(pc.docs.len() * copies)
        .map(|d| Observation::from_tokens(d))
        .collect();
    (globals, obs)
}
