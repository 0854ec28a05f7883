// Trains one teacher and point generator, then one student per distillation
// method over a few seeds and prints the accuracy table.
//
//     cargo run --release --example kd_comparison -- [out_dir] [seeds]
//
// `seeds` is comma separated, e.g. `0,1,2`.

use std::path::{Path, PathBuf};

use pointcmt::eval::{kd_comparison_run, train_teacher_artifacts, ComparisonTable, KdMethod};
use pointcmt::networks::NetworkConfig;
use pointcmt::pipeline::{datasets, RunConfig};
use pointcmt::Result;

pub fn desk_config(out: &Path) -> RunConfig {
    RunConfig {
        out_dir: out.to_path_buf(),
        epochs_image: 8,
        epochs_cmpg: 10,
        epochs_student: 15,
        n_per_class_train: 40,
        n_per_class_test: 25,
        network: NetworkConfig {
            feature_dim: 64,
            point_mlp_widths: vec![32, 64, 64],
            cnn_channels: vec![4, 8, 16],
            cmpg_hidden: vec![128, 256],
            n_gen: 64,
            ..Default::default()
        },
        ..Default::default()
    }
}

pub fn run(cfg: &RunConfig, seeds: &[u64]) -> Result<ComparisonTable> {
    let (train, test) = datasets(cfg)?;
    let (art, s1, _) = train_teacher_artifacts(&train, cfg)?;
    if let Some(m) = s1.final_metrics() {
        println!("teacher train acc {:.3}", m.train_acc);
    }
    let table = kd_comparison_run(&KdMethod::ALL, seeds, &train, &test, cfg, Some(&art))?;
    print!("{}", table.to_text());
    Ok(table)
}

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out/kd_comparison"));
    let seeds: Vec<u64> = match args.next() {
        Some(s) => s.split(',').filter_map(|x| x.trim().parse().ok()).collect(),
        None => vec![0, 1, 2],
    };
    run(&desk_config(&out), &seeds).map(|_| ())
}
