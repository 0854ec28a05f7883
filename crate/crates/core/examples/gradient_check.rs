// Finite-difference check of the full student objective: cross-entropy,
// EMD feature enhancement through a frozen point generator and KL
// classifier enhancement, all at once.
//
//     cargo run --release --example gradient_check -- [seed]

use pointcmt::diffcore::{grad_check, GradCheckOptions, GradCheckReport};
use pointcmt::networks::{Cmpg, NetworkConfig};
use pointcmt::pipeline::{
    new_cmpg_params, project_dataset, synth_dataset, Guidance, RunConfig, StudentObjective, TeacherFeatures, TeacherNet,
};
use pointcmt::geometry::PointCloud;
use pointcmt::Result;

pub fn tiny_config(seed: u64) -> RunConfig {
    RunConfig {
        seed,
        n_points: 64,
        image_size: 16,
        n_views: 6,
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

pub fn run(seed: u64) -> Result<GradCheckReport> {
    let cfg = tiny_config(seed);
    let ds = synth_dataset(1, cfg.n_points, seed)?;

    let mut teacher = TeacherNet::new(&cfg.network)?.init_params(&cfg)?;
    teacher.freeze();
    let feats = TeacherFeatures::compute(&project_dataset(&ds, &cfg)?, &teacher, &cfg)?;
    let mut cmpg = new_cmpg_params(&Cmpg::new(&cfg.network)?, &cfg)?;
    cmpg.freeze();

    let guidance = Guidance::PointCmt { teacher: &feats, cmpg: &cmpg, weights: cfg.weights };
    let objective = StudentObjective::new(ds.len(), guidance, &cfg)?;
    let mut params = objective.net.init_params(&cfg)?;
    // keep zero rows away from the relu kink
    let biases: Vec<String> = params.names().filter(|n| n.ends_with(".b")).map(String::from).collect();
    for (k, name) in biases.iter().enumerate() {
        for (i, v) in params.value_mut(name)?.data_mut().iter_mut().enumerate() {
            *v = 0.005 + 0.01 * ((i + k) % 5) as f64;
        }
    }

    let clouds: Vec<&PointCloud> = ds.samples.iter().map(|s| &s.cloud).collect();
    let labels = ds.labels();
    let batch: Vec<usize> = (0..ds.len()).collect();
    let r = objective.batch(&params, &clouds, &labels, &batch)?.report;
    println!("ce {:.6}  feature {:.6}  classifier {:.6}  total {:.6}", r.ce, r.feature, r.classifier, r.total);

    let report = grad_check(
        |p| {
            let out = objective.batch(p, &clouds, &labels, &batch)?;
            p.accumulate(&out.grads)?;
            Ok(out.report.total)
        },
        &mut params,
        &GradCheckOptions::default(),
    )?;
    println!("checked {} coordinates, max relative error {:.3e}", report.checked, report.max_rel_error);
    if let Some((name, idx)) = &report.worst {
        println!("worst at {name}[{idx}]");
    }
    Ok(report)
}

fn main() -> Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    run(seed).map(|_| ())
}
