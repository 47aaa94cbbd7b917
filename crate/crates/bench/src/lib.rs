//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use avid_core::models::LayerSpec;
use avid_core::{ArchConfig, ModelInput, Tensor};

/// The reduced CPU architecture on 140 x 140 inputs.
pub fn quick_arch() -> ArchConfig {
    ArchConfig {
        input_height: 140,
        input_width: 140,
        inpainter_widths: vec![4, 8, 16, 32],
        detector_layers: vec![
            LayerSpec::new(3, 8, 5, 2),
            LayerSpec::new(8, 16, 5, 2),
            LayerSpec::new(16, 32, 3, 7),
            LayerSpec::new(32, 16, 1, 1),
            LayerSpec::new(16, 1, 1, 1),
        ],
    }
}

/// Sparse bright strokes on black, roughly like digit composites.
pub fn random_inputs(arch: &ArchConfig, n: usize, seed: u64) -> Vec<ModelInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = arch.input_size();
    (0..n)
        .map(|i| {
            let plane: Vec<f32> = (0..h * w)
                .map(|_| if rng.gen_bool(0.15) { rng.gen_range(0.5..1.0) } else { 0.0 })
                .collect();
            let data = plane.iter().chain(&plane).chain(&plane).copied().collect();
            ModelInput {
                tensor: Tensor::from_vec(3, h, w, data),
                source_frame_index: i,
            }
        })
        .collect()
}

pub fn random_scores(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
    let scores = labels
        .iter()
        .map(|&l| rng.gen_range(0.0..1.0) + if l { 0.3 } else { 0.0 })
        .collect();
    (scores, labels)
}
