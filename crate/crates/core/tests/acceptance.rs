//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! The end-to-end criteria train the reference synthetic scene five times
//! (default config plus one run per disabled component), so a full run takes
//! roughly half an hour on one core.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Matrix2x3, Vector2, Vector3};
use rand::Rng;

use common::{brute_force, random_splat, rel_err, rng, test_frame};
use satsplat_core::evalsynth::{
    dsm_camera, extract_dsm, generate_scene, geometry_primitives, mae, oracle_render, render_dataset, OracleAppearance,
    PushbroomSensor, SceneSpec,
};
use satsplat_core::geocam::{
    build_sun_camera, fit_affine, rpc_ndc_sampler, utm_from_geodetic, Aabb, AffineCamera, AffineFitOptions, CameraKind,
    GeodeticPoint, SunDirection, WorldFrame,
};
use satsplat_core::losses::{binary_entropy, opaqueness, photometric, sparsity, total_loss, LossTerms};
use satsplat_core::raster::Raster;
use satsplat_core::shading::{darkening, form_image, lighting, CameraAppearance, Warp, APPEARANCE_FIELDS};
use satsplat_core::splat::{rasterize, render, Channels, Gaussian, RasterConfig, GAUSSIAN_FIELDS};
use satsplat_core::training::{
    effective_weights, loss_and_gradients, render_view, train, Ablation, StepViews, TrainConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

// 1. Affine camera fidelity.

const AFFINE_MAX_MEAN_PX: f64 = 0.05;
const AFFINE_MAX_SECONDS: f64 = 1.0;

fn affine_fidelity() -> Outcome {
    let target = GeodeticPoint::new(-81.66, 30.32, 0.0);
    let center = utm_from_geodetic(&target).unwrap();
    let half = 128.0;
    let utm_box = Aabb::new(
        Vector3::new(center.easting - half, center.northing - half, -10.0),
        Vector3::new(center.easting + half, center.northing + half, 50.0),
    );
    let frame = WorldFrame::from_utm_bbox(&utm_box, center.zone).unwrap();
    let bounds = frame.utm_box_to_world(&utm_box);
    let mut r = rng(11);
    let (mut worst_mean, mut worst_time, mut worst_max) = (0.0f64, 0.0f64, 0.0f64);
    for (off_nadir, azimuth) in [(5.0, 20.0), (12.0, 100.0), (18.0, 170.0), (24.0, 250.0), (30.0, 320.0)] {
        let (w, h) = (640, 640);
        let sensor = PushbroomSensor::new(&target, 617e3, off_nadir, azimuth, 0.5, w, h);
        let t0 = Instant::now();
        let rpc = sensor.fit_rpc(&frame, &bounds, 9).unwrap();
        let (_, stats) = fit_affine(
            rpc_ndc_sampler(&rpc, &frame, w, h),
            &bounds,
            w,
            h,
            &AffineFitOptions::default(),
            &mut r,
        )
        .unwrap();
        worst_time = worst_time.max(t0.elapsed().as_secs_f64());
        worst_mean = worst_mean.max(stats.mean_px);
        worst_max = worst_max.max(stats.max_px);
    }
    Outcome::new(
        worst_mean <= AFFINE_MAX_MEAN_PX && worst_time < AFFINE_MAX_SECONDS,
        format!(
            "worst mean residual {worst_mean:.4} px (max {worst_max:.4} px) over 5 pushbroom views of a 256 m scene, \
             slowest RPC+affine fit {worst_time:.3} s"
        ),
    )
}

// 2. Rasterizer against brute-force compositing.

const RASTER_TOL: f64 = 1e-5;

fn rasterizer_correctness() -> Outcome {
    let t0 = Instant::now();
    let cfg = RasterConfig::default();
    let mut r = rng(200);
    let mut worst = 0.0f64;
    let mut total_splats = 0;
    for _ in 0..100 {
        let n = r.random_range(1..=1000);
        let (w, h) = (r.random_range(8..=72), r.random_range(8..=72));
        let splats: Vec<_> = (0..n).map(|i| random_splat(&mut r, w, h, i)).collect();
        total_splats += n;
        let t = rasterize(&splats, w, h, &cfg, Channels::Both);
        let [f, e, o] = brute_force(&splats, w, h, &cfg, true);
        worst = worst
            .max(t.feature.max_abs_diff(&f))
            .max(t.elevation.max_abs_diff(&e))
            .max(t.opacity.max_abs_diff(&o));
    }
    let secs = t0.elapsed().as_secs_f64();
    Outcome::new(
        worst <= RASTER_TOL && secs < 60.0,
        format!("max |tile - brute force| {worst:.2e} over 100 scenes ({total_splats} splats), {secs:.1} s"),
    )
}

// 3. Gradients against central differences.

const GRAD_TOL: f64 = 1e-3;
const SHADOW_GRAD_TOL: f64 = 1e-2;
/// Small enough that no perturbation carries a pixel across the kink of the
/// darkening at zero height difference.
const FD_STEP: f64 = 1e-6;

struct GradScene {
    frame: WorldFrame,
    camera: AffineCamera,
    sun: AffineCamera,
    prims: Vec<Gaussian>,
    app: CameraAppearance,
    observed: Raster,
}

/// Five splats over a 24 px view: a wide low disc plus four smaller ones
/// above it that cast shadows on it.
fn grad_scene(r: &mut impl Rng) -> GradScene {
    let frame = test_frame();
    let camera = AffineCamera::new(
        Matrix2x3::new(0.9, 0.1, 0.0, -0.05, 0.95, 0.25),
        Vector2::new(0.02, -0.03),
        24,
        24,
        CameraKind::Satellite,
    );
    let sun = AffineCamera::new(
        Matrix2x3::new(0.85, 0.0, 0.35, 0.0, 0.9, -0.3),
        Vector2::new(0.0, 0.0),
        24,
        24,
        CameraKind::Sun,
    );
    let mut prims = vec![Gaussian {
        mean: [0.0, 0.0, 0.0],
        log_scale: [0.2f64.ln(), 0.2f64.ln(), 0.03f64.ln()],
        rotation: [1.0, 0.02, -0.03, 0.01],
        opacity_logit: 2.5,
        albedo: [0.6, 0.5, 0.4],
    }];
    for _ in 0..4 {
        prims.push(Gaussian {
            mean: [r.random_range(-0.4..0.4), r.random_range(-0.4..0.4), r.random_range(0.02..0.08)],
            log_scale: [
                r.random_range(-2.6..-2.0),
                r.random_range(-2.6..-2.0),
                r.random_range(-3.5..-2.8),
            ],
            rotation: [1.0, r.random_range(-0.3..0.3), r.random_range(-0.3..0.3), r.random_range(-0.3..0.3)],
            opacity_logit: r.random_range(0.0..2.5),
            albedo: [r.random(), r.random(), r.random()],
        });
    }
    let mut a = CameraAppearance::identity(0.3).to_array();
    for v in a.iter_mut() {
        *v += r.random_range(-0.1..0.1);
    }
    let app = CameraAppearance::from_array(&a);
    let observed = Raster::from_vec(24, 24, 3, (0..24 * 24 * 3).map(|_| r.random_range(0.0..1.0)).collect());
    GradScene {
        frame,
        camera,
        sun,
        prims,
        app,
        observed,
    }
}

fn perturbed(prims: &[Gaussian], k: usize, field: usize, d: f64) -> Vec<Gaussian> {
    let mut out = prims.to_vec();
    let mut a = out[k].to_array();
    a[field] += d;
    out[k] = Gaussian::from_array(&a);
    out
}

fn perturbed_app(app: &CameraAppearance, field: usize, d: f64) -> CameraAppearance {
    let mut a = app.to_array();
    a[field] += d;
    CameraAppearance::from_array(&a)
}

/// Objective of the full shaded step with the sun warp held fixed, the way
/// the analytic gradient treats it.
fn shaded_objective(s: &GradScene, cfg: &TrainConfig, warp: &Warp, prims: &[Gaussian], app: &CameraAppearance) -> f64 {
    let ra = render(prims, &s.camera, &s.frame, &cfg.raster, Channels::Both).unwrap().targets;
    let es = render(prims, &s.sun, &s.frame, &cfg.raster, Channels::Elevation).unwrap().targets.elevation;
    let mut dh = warp.resample(&es);
    dh.add_scaled(&ra.elevation, -1.0);
    let dark = darkening(&dh, cfg.shading.rho);
    let light = lighting(&dark, &app.ambient());
    let image = form_image(&ra.feature, &ra.opacity, Some(&light), app);
    let terms = LossTerms {
        photometric: photometric(&image, &s.observed).value,
        sparsity: sparsity(prims, None),
        opaqueness: opaqueness(&dark, cfg.consistency.mean).0,
        ..Default::default()
    };
    total_loss(&terms, &effective_weights(cfg), true)
}

/// Worst relative error of analytic against central-difference gradients.
fn worst_gradient_error(
    s: &GradScene,
    analytic: (&[[f64; GAUSSIAN_FIELDS]], &[f64; APPEARANCE_FIELDS]),
    skip_app: &[usize],
    objective: &dyn Fn(&[Gaussian], &CameraAppearance) -> f64,
) -> (f64, usize) {
    let (prim_grads, app_grad) = analytic;
    let scale = prim_grads
        .iter()
        .flatten()
        .chain(app_grad.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-4 * scale;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (k, g) in prim_grads.iter().enumerate() {
        for (field, &a) in g.iter().enumerate() {
            let fd = (objective(&perturbed(&s.prims, k, field, FD_STEP), &s.app)
                - objective(&perturbed(&s.prims, k, field, -FD_STEP), &s.app))
                / (2.0 * FD_STEP);
            worst = worst.max(rel_err(a, fd, floor));
            checked += 1;
        }
    }
    for (field, &a) in app_grad.iter().enumerate() {
        if skip_app.contains(&field) {
            continue;
        }
        let fd = (objective(&s.prims, &perturbed_app(&s.app, field, FD_STEP))
            - objective(&s.prims, &perturbed_app(&s.app, field, -FD_STEP)))
            / (2.0 * FD_STEP);
        worst = worst.max(rel_err(a, fd, floor));
        checked += 1;
    }
    (worst, checked)
}

fn gradient_correctness() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(300);
    let (mut plain_worst, mut shadow_worst) = (0.0f64, 0.0f64);
    let (mut plain_n, mut shadow_n) = (0, 0);
    for _ in 0..3 {
        let s = grad_scene(&mut r);
        let mut cfg = TrainConfig {
            raster: RasterConfig::exact(),
            ..TrainConfig::default()
        };

        // Photometric objective with the color map; ambient light is unused
        // without shading.
        let out = loss_and_gradients(
            &s.prims,
            &s.frame,
            StepViews {
                camera: &s.camera,
                observed: &s.observed,
                sun: None,
                perturbed: None,
            },
            &s.app,
            &cfg,
            false,
        )
        .unwrap();
        let grads: Vec<_> = out.primitive_grads.iter().map(|g| g.to_array()).collect();
        let objective = |p: &[Gaussian], a: &CameraAppearance| {
            let t = render(p, &s.camera, &s.frame, &cfg.raster, Channels::Feature).unwrap().targets;
            photometric(&form_image(&t.feature, &t.opacity, None, a), &s.observed).value
        };
        let (w, n) = worst_gradient_error(&s, (&grads, &out.appearance_grad), &[12, 13, 14], &objective);
        plain_worst = plain_worst.max(w);
        plain_n += n;

        // Shadow mapping, opaqueness and sparsity on.
        cfg.ablation = Ablation {
            consistency: false,
            ..Ablation::default()
        };
        let out = loss_and_gradients(
            &s.prims,
            &s.frame,
            StepViews {
                camera: &s.camera,
                observed: &s.observed,
                sun: Some(&s.sun),
                perturbed: None,
            },
            &s.app,
            &cfg,
            true,
        )
        .unwrap();
        let base = render(&s.prims, &s.camera, &s.frame, &cfg.raster, Channels::Elevation).unwrap();
        let warp = Warp::homologous(&s.camera, &s.sun, &base.targets.elevation, &s.frame).unwrap();
        let grads: Vec<_> = out.primitive_grads.iter().map(|g| g.to_array()).collect();
        let objective = |p: &[Gaussian], a: &CameraAppearance| shaded_objective(&s, &cfg, &warp, p, a);
        let direct = objective(&s.prims, &s.app);
        assert!((direct - out.total).abs() <= 1e-12 * direct.abs().max(1.0), "{direct} vs {}", out.total);
        let (w, n) = worst_gradient_error(&s, (&grads, &out.appearance_grad), &[], &objective);
        shadow_worst = shadow_worst.max(w);
        shadow_n += n;
    }
    let secs = t0.elapsed().as_secs_f64();
    Outcome::new(
        plain_worst <= GRAD_TOL && shadow_worst <= SHADOW_GRAD_TOL && secs < 300.0,
        format!(
            "photometric path worst rel. error {plain_worst:.2e} ({plain_n} derivatives), shadow path {shadow_worst:.2e} \
             ({shadow_n} derivatives), {secs:.1} s"
        ),
    )
}

// 4. Shadow fidelity of a dense fit of the true geometry.

const SHADOW_MATCH: f64 = 0.98;
const SHADOW_SUNS: usize = 20;
const SHADOW_FIT_SPACING: f64 = 0.25;
const SHADOW_GSD: f64 = 0.5;

fn shadow_fidelity() -> Outcome {
    let t0 = Instant::now();
    let setup = generate_scene(&SceneSpec::default()).unwrap();
    let bounds = setup.world_bounds();
    let cfg = TrainConfig::default();
    let prims = geometry_primitives(&setup.scene, &setup.frame, SHADOW_FIT_SPACING, 0.99);
    let cam = dsm_camera(&setup.frame, &bounds, SHADOW_GSD);
    let (mut pixels, mut matched) = (0usize, 0usize);
    let mut worst = 1.0f64;
    for k in 0..SHADOW_SUNS {
        let sun = SunDirection::new(18.0 * k as f64 + 5.0, 30.0 + 40.0 * k as f64 / (SHADOW_SUNS - 1) as f64);
        let sun_cam = build_sun_camera(&sun, &setup.frame, &bounds, SHADOW_GSD).unwrap();
        let view = render_view(&prims, &setup.frame, &cam, Some(&sun_cam), &CameraAppearance::identity(0.5), &cfg).unwrap();
        let s = view.shadow.unwrap();
        let oracle = oracle_render(&setup.scene, &setup.frame, &cam, &sun, &OracleAppearance::default(), 1).unwrap();
        let (mut n, mut ok) = (0usize, 0usize);
        for (i, &hit) in oracle.hit.iter().enumerate() {
            if hit {
                n += 1;
                ok += usize::from((s.data()[i] < 0.5) == oracle.shadow[i]);
            }
        }
        worst = worst.min(ok as f64 / n as f64);
        pixels += n;
        matched += ok;
    }
    let rate = matched as f64 / pixels as f64;
    let secs = t0.elapsed().as_secs_f64();
    Outcome::new(
        rate >= SHADOW_MATCH && secs < 120.0,
        format!(
            "s < 0.5 agrees with ray-cast occlusion on {:.2}% of {pixels} pixels over {SHADOW_SUNS} suns \
             (worst sun {:.2}%), {secs:.1} s",
            100.0 * rate,
            100.0 * worst
        ),
    )
}

// 5. Closed-form shading and entropy values.

fn closed_forms() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, got: f64, want: f64, tol: f64| {
        let ok = (got - want).abs() <= tol;
        if !ok {
            failures.push(format!("{name}: {got} != {want}"));
        }
    };
    let one = |v: f64| Raster::filled(1, 1, 1, v);
    check("s(dh=0)", darkening(&one(0.0), 10.0).data()[0], 1.0, 1e-12);
    check("s(dh=-2)", darkening(&one(-2.0), 10.0).data()[0], 1.0, 1e-12);
    check("s(dh=1, rho=ln2)", darkening(&one(1.0), std::f64::consts::LN_2).data()[0], 0.5, 1e-12);
    check("s(dh=0.1, rho=10)", darkening(&one(0.1), 10.0).data()[0], (-1.0f64).exp(), 1e-12);
    let psi = [0.2, 0.35, 0.5];
    for c in 0..3 {
        check("l(s=1)", lighting(&one(1.0), &psi).data()[c], 1.0, 1e-12);
        check("l(s=0)", lighting(&one(0.0), &psi).data()[c], psi[c], 1e-12);
    }
    check("l(s=0.5, psi=0.2)", lighting(&one(0.5), &[0.2; 3]).data()[0], 0.6, 1e-12);
    check("H(0.5)", binary_entropy(0.5), 1.0, 1e-12);
    let h_quarter = -(0.25 * 0.25f64.log2() + 0.75 * 0.75f64.log2());
    check("H(0.25)", binary_entropy(0.25), h_quarter, 1e-12);
    check("H(0.25) value", binary_entropy(0.25), 0.811_278_124_459_132_9, 1e-12);
    let binary = Raster::from_vec(4, 1, 1, vec![0.0, 1.0, 0.0, 1.0]);
    let (sum, _) = opaqueness(&binary, false);
    check("opaqueness(binary) per pixel", sum / 4.0, 0.0, 2e-5);
    let (half, _) = opaqueness(&Raster::filled(3, 2, 1, 0.5), false);
    check("opaqueness(0.5) sum", half, 6.0, 1e-12);
    let n = failures.len();
    Outcome::new(
        n == 0,
        if n == 0 {
            "darkening, lighting and entropy match their closed forms".into()
        } else {
            failures.join("; ")
        },
    )
}

// 6-8. End-to-end benchmark and its ablations.

const BENCH_MAE_M: f64 = 0.5;
const BENCH_MAX_SECONDS: f64 = 15.0 * 60.0;
const SPARSITY_MAX_FRACTION: f64 = 0.6;
const LOSS_RATIO: f64 = 0.25;

struct BenchRun {
    mae: f64,
    seconds: f64,
    train_seconds: f64,
    initial: usize,
    remaining: usize,
    loss_at_100: f64,
    loss_final: f64,
}

fn bench_run(ablation: Ablation) -> BenchRun {
    let setup = generate_scene(&SceneSpec::default()).unwrap();
    let data = render_dataset(&setup, 0.5).unwrap();
    let cfg = TrainConfig {
        ablation,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let report = train(&data, &cfg, None).unwrap();
    let dsm = extract_dsm(&report.model.primitives, &data.frame, &data.world_bounds(), 0.5, &cfg.raster).unwrap();
    let seconds = t0.elapsed().as_secs_f64();
    let gt = data.gt_dsm.as_ref().expect("synthetic ground truth");
    let loss_at = |it: usize| report.log.iter().find(|r| r.iteration == it).map_or(f64::NAN, |r| r.total);
    BenchRun {
        mae: mae(&dsm.values, &gt.values, None).unwrap().mae,
        seconds,
        train_seconds: report.elapsed_s,
        initial: report.initial_primitives,
        remaining: report.model.primitives.len(),
        loss_at_100: loss_at(100),
        loss_final: report.log.last().map_or(f64::NAN, |r| r.total),
    }
}

struct Bench {
    default: BenchRun,
    /// Runs with one component disabled: shadows, sparsity, consistency,
    /// opaqueness.
    ablated: Vec<(&'static str, BenchRun)>,
}

fn bench() -> Bench {
    let default = bench_run(Ablation::default());
    type Toggle = (&'static str, fn(&mut Ablation));
    let toggles: [Toggle; 4] = [
        ("shadows", |a| a.shadows = false),
        ("sparsity", |a| a.sparsity = false),
        ("consistency", |a| a.consistency = false),
        ("opaqueness", |a| a.opaqueness = false),
    ];
    let ablated = toggles
        .into_iter()
        .map(|(name, off)| {
            let mut a = Ablation::default();
            off(&mut a);
            (name, bench_run(a))
        })
        .collect();
    Bench { default, ablated }
}

fn end_to_end(b: &Bench) -> Outcome {
    let d = &b.default;
    Outcome::new(
        d.mae <= BENCH_MAE_M && d.seconds <= BENCH_MAX_SECONDS,
        format!("DSM MAE {:.3} m (bar {BENCH_MAE_M} m), train + export {:.0} s", d.mae, d.seconds),
    )
}

fn ablation_direction(b: &Bench) -> Outcome {
    let deltas: Vec<(&str, f64)> = b.ablated.iter().map(|(n, r)| (*n, r.mae - b.default.mae)).collect();
    let shadow = deltas[0].1;
    let largest = deltas.iter().all(|&(_, d)| d <= shadow);
    let listing = deltas
        .iter()
        .map(|(n, d)| format!("{n} {d:+.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome::new(
        largest && shadow > 0.0,
        format!("MAE change when disabled: {listing} m (default {:.3} m)", b.default.mae),
    )
}

fn sparsity_mechanism(b: &Bench) -> Outcome {
    let d = &b.default;
    let no_sparsity = &b.ablated[1].1;
    let fraction = d.remaining as f64 / d.initial as f64;
    Outcome::new(
        fraction <= SPARSITY_MAX_FRACTION && d.train_seconds < no_sparsity.train_seconds,
        format!(
            "{} of {} primitives remain ({:.0}%), training {:.0} s vs {:.0} s without sparsity ({} remain)",
            d.remaining,
            d.initial,
            100.0 * fraction,
            d.train_seconds,
            no_sparsity.train_seconds,
            no_sparsity.remaining
        ),
    )
}

fn loss_decrease(b: &Bench) -> Outcome {
    let d = &b.default;
    Outcome::new(
        d.loss_final < LOSS_RATIO * d.loss_at_100,
        format!("total loss {:.4} at the end vs {:.4} at iteration 100", d.loss_final, d.loss_at_100),
    )
}

// 9. Real-data procedure.

fn real_data_procedure() -> Outcome {
    let readme = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
    let text = std::fs::read_to_string(&readme).unwrap_or_default();
    let section = text
        .split("\n## ")
        .find(|s| s.starts_with("Running on DFC2019"))
        .unwrap_or_default();
    let needed = ["satsplat train", "satsplat dsm", "satsplat eval", "RPC", "sun_azimuth_deg", "gt/dsm.pfm"];
    let missing: Vec<_> = needed.iter().filter(|k| !section.contains(*k)).collect();
    Outcome::new(
        missing.is_empty(),
        if missing.is_empty() {
            "README documents dataset layout, training, DSM export and evaluation on DFC2019 scenes".into()
        } else {
            format!("README DFC2019 section is missing {missing:?}")
        },
    )
}

fn report(id: &str, name: &str, o: &Outcome) -> bool {
    println!(
        "criterion {id:<3} {:<4}  {name}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    o.pass
}

fn main() -> ExitCode {
    // Ignore libtest flags such as `--nocapture` or a name filter.
    let quick = std::env::var_os("SATSPLAT_ACCEPTANCE_QUICK").is_some();
    let mut ok = true;
    ok &= report("1", "affine camera fidelity", &affine_fidelity());
    ok &= report("2", "rasterizer vs brute force", &rasterizer_correctness());
    ok &= report("3", "gradients vs finite differences", &gradient_correctness());
    ok &= report("4", "shadow fidelity", &shadow_fidelity());
    ok &= report("5", "closed-form shading and entropy", &closed_forms());
    if quick {
        println!("criteria 6-8 skipped (SATSPLAT_ACCEPTANCE_QUICK is set)");
    } else {
        let b = bench();
        ok &= report("6", "end-to-end synthetic benchmark", &end_to_end(&b));
        ok &= report("7", "shadow ablation has the largest effect", &ablation_direction(&b));
        ok &= report("8", "sparsity prunes and speeds up training", &sparsity_mechanism(&b));
        ok &= report("6b", "training loss at the end below 25% of iteration 100", &loss_decrease(&b));
    }
    ok &= report("9", "real-data procedure documented", &real_data_procedure());
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
