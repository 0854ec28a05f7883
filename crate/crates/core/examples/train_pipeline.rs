// The three training stages end to end through their checkpoints, then the
// student and a cross-entropy baseline evaluated on the test split.
//
//     cargo run --release --example train_pipeline -- [out_dir] [seed]
//
// Widths and epochs are cut down so the run takes a few minutes on one core.

use std::path::{Path, PathBuf};

use pointcmt::eval::{evaluate, EvalReport};
use pointcmt::networks::NetworkConfig;
use pointcmt::pipeline::{
    datasets, stage1_train_image, stage2_train_cmpg, stage3_train_student, train_baseline, RunConfig, StageArtifacts,
};
use pointcmt::Result;

pub fn desk_config(out: &Path, seed: u64) -> RunConfig {
    RunConfig {
        seed,
        out_dir: out.to_path_buf(),
        epochs_image: 8,
        epochs_cmpg: 10,
        epochs_student: 20,
        n_per_class_train: 50,
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

fn show(name: &str, s: &StageArtifacts) {
    let (first, last) = (s.trace.first(), s.trace.last());
    if let (Some(a), Some(b)) = (first, last) {
        println!("{name:9} loss {:.4} -> {:.4}  train acc {:.3}  ({})", a.loss_total, b.loss_total, b.train_acc, s.checkpoint.display());
    }
}

pub fn run(cfg: &RunConfig) -> Result<(EvalReport, EvalReport)> {
    let (train, test) = datasets(cfg)?;
    println!("{} train / {} test samples, config {}", train.len(), test.len(), cfg.hash());

    let s1 = stage1_train_image(&train, cfg)?;
    show("stage I", &s1);
    let s2 = stage2_train_cmpg(&train, &s1.checkpoint, cfg)?;
    show("stage II", &s2);
    let s3 = stage3_train_student(&train, &s1.checkpoint, &s2.checkpoint, cfg)?;
    show("stage III", &s3);
    let base = train_baseline(&train, cfg)?;
    show("baseline", &base);

    let student = evaluate(&s3.checkpoint, &test, cfg)?;
    let baseline = evaluate(&base.checkpoint, &test, cfg)?;
    println!("baseline OA {:.2}%  mAcc {:.2}%", baseline.overall_accuracy, baseline.class_mean_accuracy);
    println!("pointcmt OA {:.2}%  mAcc {:.2}%", student.overall_accuracy, student.class_mean_accuracy);
    Ok((baseline, student))
}

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out/train_pipeline"));
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    run(&desk_config(&out, seed)).map(|_| ())
}
