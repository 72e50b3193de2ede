//! `satsplat`: synthetic data, camera fitting, training, rendering, DSM
//! export and evaluation from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use satsplat_core::evalsynth::{
    dsm_camera, extract_dsm, generate_scene, mae, render_dataset, visibility_counts, DsmRaster, SceneSpec,
};
use satsplat_core::geocam::build_sun_camera;
use satsplat_core::io::{
    load_checkpoint, load_dataset, normalize_for_display, read_dsm, read_mask, save_checkpoint, save_dataset,
    write_dsm, write_pfm, write_png8, SceneDataset,
};
use satsplat_core::raster::Raster;
use satsplat_core::training::{render_view, sun_gsd, train, TrainConfig};
use satsplat_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "satsplat", version, about = "Gaussian splatting for satellite photogrammetry")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Run on a single thread.
    #[arg(long, global = true, conflicts_with = "threads")]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene dataset with ground truth.
    Synth(SynthArgs),
    /// Fit affine cameras to the RPCs of a dataset and report residuals.
    FitCameras(DataArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Render a trained model from the camera of one frame.
    Render(RenderArgs),
    /// Export the DSM of a trained model.
    Dsm(DsmArgs),
    /// Compare a DSM against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Scene parameters (TOML); defaults to the reference scene.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Scene seed, overriding the scene file.
    #[arg(long)]
    seed: Option<u64>,
    /// Ground sampling distance of the ground-truth DSM in meters.
    #[arg(long, default_value_t = 0.5)]
    dsm_gsd: f64,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Run directory for the config, log, checkpoints and final model.
    #[arg(long)]
    out: PathBuf,
    /// Training config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config override `key=value` with a dotted key, e.g. `ablation.shadows=false`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Output {
    Shaded,
    Albedo,
    Elevation,
    Shadow,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    data: PathBuf,
    /// Model directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Frame name; its camera, sun and color correction are used.
    #[arg(long, required_unless_present = "all_frames")]
    frame: Option<String>,
    /// Render every frame.
    #[arg(long, conflicts_with = "frame")]
    all_frames: bool,
    #[arg(long)]
    out: PathBuf,
    /// Rasters to write.
    #[arg(long, value_delimiter = ',', default_values = ["shaded", "albedo", "elevation", "shadow"])]
    outputs: Vec<Output>,
    /// Training config whose raster and shading settings are used.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DsmArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Output PFM path; georeferencing goes to a `.txt` sidecar.
    #[arg(long)]
    out: PathBuf,
    /// Meters per DSM pixel.
    #[arg(long, default_value_t = 0.5)]
    gsd: f64,
    /// Use the grid of the dataset's ground-truth DSM.
    #[arg(long, conflicts_with = "gsd")]
    match_gt: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Estimated DSM (PFM with sidecar).
    #[arg(long)]
    dsm: PathBuf,
    /// Ground-truth DSM (PFM with sidecar).
    #[arg(long)]
    gt: PathBuf,
    /// Evaluation mask PNG on the DSM grid; repeatable.
    #[arg(long)]
    mask: Vec<PathBuf>,
    /// Per-pixel count of views seeing the surface (PFM), for per-bin errors.
    #[arg(long)]
    visibility: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let threads = if cli.deterministic { 1 } else { cli.threads };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(4);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(&a),
        Command::FitCameras(a) => fit_cameras(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Render(a) => render_cmd(&a),
        Command::Dsm(a) => dsm_cmd(&a),
        Command::Eval(a) => eval_cmd(&a),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match &a.scene {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(format!("reading {}", p.display()), e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => SceneSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let setup = generate_scene(&spec)?;
    let data = render_dataset(&setup, a.dsm_gsd)?;
    save_dataset(&a.out, &data)?;
    let gt = a.out.join("gt");
    create_dir(&gt)?;
    let setup_json = serde_json::to_string_pretty(&setup).map_err(|e| Error::Data(e.to_string()))?;
    write_text(&gt.join("synthetic.json"), &(setup_json + "\n"))?;
    let grid = dsm_camera(&setup.frame, &setup.world_bounds(), a.dsm_gsd);
    let cameras: Vec<_> = setup.views.iter().map(|v| v.camera).collect();
    let counts = visibility_counts(&setup.scene, &setup.frame, &cameras, &grid)?;
    let counts = Raster::from_vec(grid.width, grid.height, 1, counts.iter().map(|&c| c as f64).collect());
    write_pfm(&gt.join("visibility.pfm"), &counts)?;
    println!(
        "wrote {} views of {}x{} px to {}",
        data.frames.len(),
        data.frames[0].image.width(),
        data.frames[0].image.height(),
        a.out.display()
    );
    Ok(())
}

fn fit_cameras(a: &DataArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    println!("{:<24} {:>10} {:>10} {:>8}", "frame", "mean_px", "max_px", "samples");
    for f in &data.frames {
        println!("{:<24} {:>10.4} {:>10.4} {:>8}", f.name, f.fit.mean_px, f.fit.max_px, f.fit.samples);
    }
    let n = data.frames.len().max(1) as f64;
    let mean = data.frames.iter().map(|f| f.fit.mean_px).sum::<f64>() / n;
    let max = data.frames.iter().map(|f| f.fit.max_px).fold(0.0, f64::max);
    println!("{:<24} {:>10.4} {:>10.4}", "all", mean, max);
    Ok(())
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => TrainConfig::from_file(p)?,
        None => TrainConfig::default(),
    };
    cfg.apply_overrides(overrides)?;
    Ok(cfg)
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), &a.overrides)?;
    let data = load_dataset(&a.data)?;
    create_dir(&a.out)?;
    write_text(&a.out.join("config.toml"), &cfg.to_toml_string())?;
    let report = train(&data, &cfg, Some(&a.out))?;
    report.write_log_csv(&a.out.join("log.csv"))?;
    save_checkpoint(&a.out.join("model"), &report.model)?;
    let last = report.log.last();
    let summary = format!(
        "iterations {}\nprimitives {} -> {}\nskipped_steps {}\nfinal_loss {:.6}\nelapsed_s {:.1}\n",
        report.model.iteration,
        report.initial_primitives,
        report.model.primitives.len(),
        report.skipped_steps,
        last.map_or(f64::NAN, |r| r.total),
        report.elapsed_s
    );
    write_text(&a.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    info!("model written to {}", a.out.join("model").display());
    Ok(())
}

fn render_cmd(a: &RenderArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), &[])?;
    let data = load_dataset(&a.data)?;
    let model = load_checkpoint(&a.model)?;
    let indices: Vec<usize> = match &a.frame {
        Some(name) => vec![data
            .frame_index(name)
            .ok_or_else(|| Error::Data(format!("no frame named {name:?}")))?],
        None => (0..data.frames.len()).collect(),
    };
    create_dir(&a.out)?;
    let bounds = data.world_bounds();
    let gsd = sun_gsd(&data, &cfg);
    for i in indices {
        let f = &data.frames[i];
        let app = model
            .appearance(&f.name)
            .ok_or_else(|| Error::Data(format!("model has no appearance for frame {:?}", f.name)))?;
        let sun = build_sun_camera(&f.sun, &data.frame, &bounds, gsd)?;
        let v = render_view(&model.primitives, &data.frame, &f.camera, Some(&sun), app, &cfg)?;
        for o in &a.outputs {
            let stem = a.out.join(format!("{}_{}", f.name, output_name(*o)));
            match o {
                Output::Shaded => write_png8(&stem.with_extension("png"), &v.shaded)?,
                Output::Albedo => write_png8(&stem.with_extension("png"), &v.albedo)?,
                Output::Elevation => {
                    write_pfm(&stem.with_extension("pfm"), &v.elevation)?;
                    write_png8(&stem.with_extension("png"), &normalize_for_display(&v.elevation))?;
                }
                Output::Shadow => {
                    if let Some(s) = &v.shadow {
                        write_png8(&stem.with_extension("png"), s)?;
                    }
                }
            }
        }
        println!("rendered {}", f.name);
    }
    Ok(())
}

fn output_name(o: Output) -> &'static str {
    match o {
        Output::Shaded => "shaded",
        Output::Albedo => "albedo",
        Output::Elevation => "elevation",
        Output::Shadow => "shadow",
    }
}

fn dsm_cmd(a: &DsmArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let model = load_checkpoint(&a.model)?;
    let gsd = if a.match_gt { gt_gsd(&data)? } else { a.gsd };
    if !(gsd > 0.0) {
        return Err(Error::Config(format!("gsd {gsd} must be positive")));
    }
    let cfg = TrainConfig::default();
    let dsm = extract_dsm(&model.primitives, &data.frame, &data.world_bounds(), gsd, &cfg.raster)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_dsm(&a.out, &dsm)?;
    println!(
        "wrote {}x{} DSM ({} valid pixels) to {}",
        dsm.width(),
        dsm.height(),
        dsm.valid_count(),
        a.out.display()
    );
    Ok(())
}

fn gt_gsd(data: &SceneDataset) -> Result<f64> {
    data.gt_dsm
        .as_ref()
        .map(|g| g.gsd)
        .ok_or_else(|| Error::Data("dataset has no ground-truth DSM".into()))
}

fn check_same_grid(a: &DsmRaster, b: &DsmRaster) -> Result<()> {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-6 * x.abs().max(1.0);
    let same = a.width() == b.width()
        && a.height() == b.height()
        && close(a.gsd, b.gsd)
        && close(a.origin[0], b.origin[0])
        && close(a.origin[1], b.origin[1])
        && a.zone == b.zone;
    if same {
        Ok(())
    } else {
        Err(Error::Evaluation(format!(
            "DSM grids differ: {}x{} at {} m from ({:.3}, {:.3}) vs {}x{} at {} m from ({:.3}, {:.3})",
            a.width(),
            a.height(),
            a.gsd,
            a.origin[0],
            a.origin[1],
            b.width(),
            b.height(),
            b.gsd,
            b.origin[0],
            b.origin[1]
        )))
    }
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let dsm = read_dsm(&a.dsm)?;
    let gt = read_dsm(&a.gt)?;
    check_same_grid(&dsm, &gt)?;
    let all = mae(&dsm.values, &gt.values, None)?;
    println!("MAE {:.3} m  ({} px, coverage {:.3})", all.mae, all.count, all.coverage);
    for path in &a.mask {
        let (w, h, mask) = read_mask(path)?;
        if (w, h) != (dsm.width(), dsm.height()) {
            return Err(Error::Evaluation(format!("{}: mask is {w}x{h}", path.display())));
        }
        let r = mae(&dsm.values, &gt.values, Some(&mask))?;
        let name = path.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
        println!("MAE {:.3} m  [{name}]  ({} px, coverage {:.3})", r.mae, r.count, r.coverage);
    }
    if let Some(path) = &a.visibility {
        let vis = satsplat_core::io::read_pfm(path)?;
        if (vis.width(), vis.height()) != (dsm.width(), dsm.height()) {
            return Err(Error::Evaluation(format!("{}: visibility raster size differs", path.display())));
        }
        let max = vis.data().iter().filter(|v| v.is_finite()).fold(0.0, |m: f64, &v| m.max(v)) as usize;
        println!("{:>6} {:>8} {:>10}", "views", "pixels", "MAE_m");
        for k in 0..=max {
            let mask: Vec<bool> = vis.data().iter().map(|&v| v.round() as usize == k).collect();
            match mae(&dsm.values, &gt.values, Some(&mask)) {
                Ok(r) => println!("{k:>6} {:>8} {:>10.3}", r.count, r.mae),
                Err(_) => println!("{k:>6} {:>8} {:>10}", 0, "-"),
            }
        }
    }
    Ok(())
}
