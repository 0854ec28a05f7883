//! Runs every example at small settings so they stay in working order.

#[allow(dead_code)]
mod emd_matching {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/emd_matching.rs"));
}

#[allow(dead_code)]
mod render_views {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/render_views.rs"));
}

#[allow(dead_code)]
mod gradient_check {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/gradient_check.rs"));
}

#[allow(dead_code)]
mod distill_losses {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/distill_losses.rs"));
}

#[allow(dead_code)]
mod train_pipeline {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/train_pipeline.rs"));
}

#[allow(dead_code)]
mod kd_comparison {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/kd_comparison.rs"));
}

use pointcmt::networks::NetworkConfig;
use pointcmt::pipeline::RunConfig;

fn shrink(cfg: RunConfig) -> RunConfig {
    RunConfig {
        epochs_image: 1,
        epochs_cmpg: 1,
        epochs_student: 1,
        n_per_class_train: 3,
        n_per_class_test: 2,
        n_points: 64,
        image_size: 16,
        network: NetworkConfig { n_gen: 32, ..cfg.network.clone() },
        ..cfg
    }
}

#[test]
fn emd_matching_runs() {
    let s = emd_matching::run(24, 1).unwrap();
    assert!(s.auction >= s.exact - 1e-9 && s.auction <= s.exact + 24.0 * 1e-6 + 1e-9);
    assert!(s.after < s.before);
}

#[test]
fn render_views_runs() {
    let dir = tempfile::tempdir().unwrap();
    let files = render_views::run(dir.path(), 6, 16).unwrap();
    assert_eq!(files.len(), 24);
    assert!(files.iter().all(|f| f.exists()));
}

#[test]
fn gradient_check_runs() {
    let r = gradient_check::run(0).unwrap();
    assert!(r.max_rel_error <= 1e-4, "{r:?}");
}

#[test]
fn distill_losses_runs() {
    let r = distill_losses::run(0).unwrap();
    assert!(r.total.is_finite() && r.feature > 0.0);
}

#[test]
fn train_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shrink(train_pipeline::desk_config(dir.path(), 0));
    let (base, cmt) = train_pipeline::run(&cfg).unwrap();
    assert_eq!(base.n_test, 8);
    assert!((0.0..=100.0).contains(&cmt.overall_accuracy));
}

#[test]
fn kd_comparison_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shrink(kd_comparison::desk_config(dir.path()));
    let table = kd_comparison::run(&cfg, &[0]).unwrap();
    assert_eq!(table.rows.len(), 5);
}
