//! Trains on the reference synthetic scene and prints DSM errors.
//!
//! Usage: `cargo run --release --example train_synthetic -- [key=value ...]`

use std::time::Instant;

use satsplat_core::evalsynth::{extract_dsm, generate_scene, mae, render_dataset, SceneSpec, MULTIVIEW_MASK};
use satsplat_core::training::{train, TrainConfig};

fn main() -> satsplat_core::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = TrainConfig::default();
    cfg.apply_overrides(&std::env::args().skip(1).collect::<Vec<_>>())?;
    let t0 = Instant::now();
    let setup = generate_scene(&SceneSpec::default())?;
    let data = render_dataset(&setup, 0.5)?;
    let (w, h) = (data.frames[0].image.width(), data.frames[0].image.height());
    println!("dataset: {} views of {w}x{h} in {:.1} s", data.frames.len(), t0.elapsed().as_secs_f64());
    for f in &data.frames {
        println!("  {} fit {:.4} px  sun {:.0}/{:.0}", f.name, f.fit.mean_px, f.sun.azimuth_deg, f.sun.elevation_deg);
    }
    let report = train(&data, &cfg, None)?;
    let dsm = extract_dsm(&report.model.primitives, &data.frame, &data.world_bounds(), 0.5, &cfg.raster)?;
    let gt = data.gt_dsm.as_ref().expect("synthetic ground truth");
    let all = mae(&dsm.values, &gt.values, None)?;
    let mask = &data.masks.iter().find(|(n, _)| n == MULTIVIEW_MASK).expect("mask").1;
    let masked = mae(&dsm.values, &gt.values, Some(mask))?;
    let first = report.log.iter().find(|r| r.iteration == 100).map(|r| r.total).unwrap_or(f64::NAN);
    let last = report.log.last().map(|r| r.total).unwrap_or(f64::NAN);
    println!(
        "primitives {} -> {}  time {:.1} s  loss@100 {first:.4} final {last:.4}",
        report.initial_primitives,
        report.model.primitives.len(),
        report.elapsed_s
    );
    println!("MAE {:.3} m (coverage {:.3})  multiview {:.3} m", all.mae, all.coverage, masked.mae);
    Ok(())
}
