#![allow(dead_code)]

use std::path::Path;

use pointcmt::diffcore::ParamStore;
use pointcmt::geometry::{normalize_unit_sphere, PointCloud};
use pointcmt::networks::NetworkConfig;
use pointcmt::pipeline::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A configuration small enough to run every stage in well under a second.
pub fn tiny_config(seed: u64, out: &Path) -> RunConfig {
    RunConfig {
        seed,
        out_dir: out.to_path_buf(),
        epochs_image: 2,
        epochs_cmpg: 2,
        epochs_student: 3,
        batch_size: 8,
        n_points: 64,
        n_per_class_train: 4,
        n_per_class_test: 3,
        image_size: 16,
        network: NetworkConfig {
            feature_dim: 8,
            point_mlp_widths: vec![8, 8],
            cnn_channels: vec![2, 4],
            classifier_hidden: vec![6],
            cmpg_hidden: vec![12, 16],
            n_gen: 16,
            ..Default::default()
        },
        ..Default::default()
    }
}

pub fn random_cloud(n: usize, rng: &mut ChaCha8Rng) -> PointCloud {
    let pts = (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    normalize_unit_sphere(&PointCloud::new(pts).unwrap()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small distinct positive biases so no unit sits exactly on the relu kink.
pub fn biases_off_kink(ps: &mut ParamStore) {
    let names: Vec<String> = ps.names().filter(|n| n.ends_with(".b")).map(String::from).collect();
    for (k, n) in names.iter().enumerate() {
        for (i, v) in ps.value_mut(n).unwrap().data_mut().iter_mut().enumerate() {
            *v = 0.005 + 0.01 * ((i + k) % 5) as f64;
        }
    }
}
