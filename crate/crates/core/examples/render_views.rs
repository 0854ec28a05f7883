// Renders depth views of one synthetic sample per class and writes them as
// PGM files.
//
//     cargo run --release --example render_views -- [out_dir] [views] [size]

use std::path::{Path, PathBuf};

use pointcmt::pipeline::{synth_dataset, SYNTH_CLASSES};
use pointcmt::projection::{project_views, view_rig, write_view_set, DEFAULT_CAMERA_DISTANCE};
use pointcmt::Result;

pub fn run(out: &Path, views: usize, size: usize) -> Result<Vec<PathBuf>> {
    let ds = synth_dataset(1, 512, 7)?;
    let rig = view_rig(views, DEFAULT_CAMERA_DISTANCE, size, size)?;
    let mut written = Vec::new();
    for (sample, name) in ds.samples.iter().zip(SYNTH_CLASSES) {
        let set = project_views(&sample.cloud, &rig, size, size)?;
        println!("{name:9} lit {:5.1}%", 100.0 * set.lit_fraction());
        written.extend(write_view_set(out, name, &set)?);
    }
    println!("wrote {} images to {}", written.len(), out.display());
    Ok(written)
}

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out/views"));
    let views = args.next().and_then(|s| s.parse().ok()).unwrap_or(6);
    let size = args.next().and_then(|s| s.parse().ok()).unwrap_or(32);
    run(&out, views, size).map(|_| ())
}
