//! Shared fixtures for the criterion suite. Everything is seeded so two runs
//! of the same bench measure the same workload.

use kgrank_core::evalbench::{synth_generate, SynthSignalSpec};
use kgrank_core::{EstimatorConfig, EstimatorParams, SynthConfig, SynthData};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Preferential-attachment graph with three partially observed signals.
pub fn graph(nodes: usize) -> SynthData {
    let config = SynthConfig {
        nodes,
        predicates: 4,
        edges_per_node: 4,
        coherent: vec![SynthSignalSpec::default(); 3],
        seed: 17,
        ..SynthConfig::default()
    };
    synth_generate(&config).expect("the fixture config is valid")
}

/// Estimator sized to the fixture features. `pred_dim` matches the hidden
/// width so the bilinear edge term is available to the gradient bench.
pub fn estimator(data: &SynthData) -> (EstimatorConfig, EstimatorParams) {
    let config = EstimatorConfig { pred_dim: 6, ..EstimatorConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let params =
        kgrank_core::estimator::init_params(&config, &data.kg, data.features.dim(), &mut rng)
            .expect("fixture dimensions are consistent");
    (config, params)
}
