//! Fixtures shared by the criterion benches.

use tempgnn::data::{expand, synth_corpus, LabeledInstance, SynthSpec, Vocabulary};
use tempgnn::model::{ModelConfig, TempGnn};

/// A model over a synthetic corpus with `n_items` items, plus its instances.
pub fn fixture(dim: usize, layers: usize, n_items: usize, seed: u64) -> (TempGnn, Vec<LabeledInstance>) {
    let sessions = synth_corpus(&SynthSpec::new(n_items, 300, seed, true));
    let vocab = Vocabulary::from_keys((0..n_items).map(SynthSpec::item_key).collect()).expect("distinct keys");
    let encoded: Vec<_> = sessions
        .iter()
        .map(|s| vocab.encode(s).expect("synthetic keys"))
        .collect();
    let instances = expand(&encoded, 10).expect("positive max_len");
    let config = ModelConfig {
        dim,
        layers,
        ..ModelConfig::new(n_items)
    };
    let model = TempGnn::from_training(config, &instances, seed).expect("valid fixture");
    (model, instances)
}

/// `n` time differences spread over seven orders of magnitude.
pub fn diffs(n: usize) -> Vec<i64> {
    (0..n as i64).map(|i| (i * 7919) % 10_000_000).collect()
}
