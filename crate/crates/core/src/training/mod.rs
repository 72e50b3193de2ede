//! Initialization, Adam, pruning and the training loop.
//!
//! Iterations before `enable_iteration` fit the photometric term only, with
//! the per-camera color correction active and no shading. From then on each
//! iteration renders the drawn satellite view, its sun view and a randomly
//! perturbed copy of the satellite view, and optimizes the full regularized
//! objective.

mod adam;
mod config;
mod init;

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use adam::{adam_update, AdamTable, OptimState, BETA1, BETA2, EPS_DEFAULT, EPS_POSITION};
pub use config::{Ablation, LearningRates, TrainConfig};
pub use init::{init_primitives, mean_nearest_neighbor, random_rotation};

use crate::evalsynth::DSM_MIN_OPACITY;
use crate::geocam::{build_sun_camera, AffineCamera, WorldFrame};
use crate::io::{save_checkpoint, SceneDataset};
use crate::losses::{
    altitude_consistency, color_consistency, consistency_mask, opaqueness, perturb_camera, photometric, sparsity,
    total_loss, LossTerms, LossWeights,
};
use crate::raster::Raster;
use crate::shading::{
    darkening_backward, delta_h_backward, form_image, form_image_backward, lighting_backward, shadow_buffers,
    CameraAppearance, APPEARANCE_FIELDS,
};
use crate::splat::{render, render_backward, Channels, Gaussian, GaussianGrad, RenderGrads, GAUSSIAN_FIELDS};
use crate::{Error, Result};

/// Trained scene: primitives plus the per-camera appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub primitives: Vec<Gaussian>,
    pub frame: WorldFrame,
    pub camera_names: Vec<String>,
    pub appearances: Vec<CameraAppearance>,
    /// Iterations completed.
    pub iteration: usize,
}

impl Model {
    pub fn appearance(&self, name: &str) -> Option<&CameraAppearance> {
        self.camera_names.iter().position(|n| n == name).map(|i| &self.appearances[i])
    }
}

/// Removes primitives with opacity below `alpha_min` together with their
/// optimizer rows. Returns the number removed.
pub fn prune(prims: &mut Vec<Gaussian>, state: &mut AdamTable<GAUSSIAN_FIELDS>, alpha_min: f64) -> Result<usize> {
    let keep: Vec<bool> = prims.iter().map(|g| g.opacity() >= alpha_min).collect();
    let kept = keep.iter().filter(|&&k| k).count();
    if kept == 0 {
        return Err(Error::Training(format!(
            "pruning at alpha_min {alpha_min} would remove all {} primitives",
            prims.len()
        )));
    }
    let removed = prims.len() - kept;
    if removed > 0 {
        let mut k = keep.iter();
        prims.retain(|_| *k.next().expect("keep mask length"));
        state.retain(&keep);
    }
    Ok(removed)
}

/// Position learning rate at `iteration`: log-linear from `init` to `final`
/// over the run, times the scene radius.
pub fn position_lr(lr: &LearningRates, iteration: usize, iterations: usize, radius: f64) -> f64 {
    let t = (iteration as f64 / iterations as f64).clamp(0.0, 1.0);
    radius * (lr.position_init.ln() * (1.0 - t) + lr.position_final.ln() * t).exp()
}

/// Weights with disabled components set to zero.
pub fn effective_weights(cfg: &TrainConfig) -> LossWeights {
    let a = &cfg.ablation;
    let w = &cfg.weights;
    LossWeights {
        sparsity: if a.sparsity { w.sparsity } else { 0.0 },
        color_consistency: if a.consistency { w.color_consistency } else { 0.0 },
        altitude_consistency: if a.consistency { w.altitude_consistency } else { 0.0 },
        opaqueness: if a.opaqueness && a.shadows { w.opaqueness } else { 0.0 },
    }
}

/// Cameras and observation for one iteration.
#[derive(Debug, Clone, Copy)]
pub struct StepViews<'a> {
    pub camera: &'a AffineCamera,
    pub observed: &'a Raster,
    /// Sun camera; required when shading is on.
    pub sun: Option<&'a AffineCamera>,
    /// Perturbed camera; required when consistency is on.
    pub perturbed: Option<&'a AffineCamera>,
}

/// Objective and gradients of one iteration.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub terms: LossTerms,
    pub total: f64,
    pub primitive_grads: Vec<GaussianGrad>,
    pub appearance_grad: [f64; APPEARANCE_FIELDS],
    /// Pixels selected by the consistency mask.
    pub mask_pixels: usize,
}

/// Loss and gradients for one view. `full = false` is the first phase:
/// photometric only, lighting fixed to one.
pub fn loss_and_gradients(
    prims: &[Gaussian],
    frame: &WorldFrame,
    views: StepViews<'_>,
    app: &CameraAppearance,
    cfg: &TrainConfig,
    full: bool,
) -> Result<StepOutput> {
    let rc = &cfg.raster;
    let weights = effective_weights(cfg);
    let shadows = full && cfg.ablation.shadows;
    let consistency = full && cfg.ablation.consistency;
    let entropy = shadows && cfg.ablation.opaqueness;
    let channels = if full { Channels::Both } else { Channels::Feature };
    let ra = render(prims, views.camera, frame, rc, channels)?;
    let (albedo, opacity, elev_a) = (&ra.targets.feature, &ra.targets.opacity, &ra.targets.elevation);

    let sun = if shadows {
        let cam_s = views
            .sun
            .ok_or_else(|| Error::Config("shading is enabled but no sun camera was given".into()))?;
        let rs = render(prims, cam_s, frame, rc, Channels::Elevation)?;
        let sb = shadow_buffers(views.camera, cam_s, elev_a, &rs.targets.elevation, frame, &cfg.shading, &app.ambient())?;
        Some((rs, sb))
    } else {
        None
    };
    let lighting = sun.as_ref().map(|(_, sb)| &sb.lighting);
    let image = form_image(albedo, opacity, lighting, app);
    let pm = photometric(&image, views.observed);
    let mut terms = LossTerms {
        photometric: pm.value,
        ..Default::default()
    };
    let ig = form_image_backward(albedo, opacity, lighting, app, &pm.grad);
    let mut app_grad = ig.appearance;
    let mut d_albedo = ig.albedo;
    let mut d_elev_a = Raster::new(albedo.width(), albedo.height(), 1);
    let mut sun_upstream = None;
    if let (Some((_, sb)), Some(d_l)) = (&sun, &ig.lighting) {
        let (mut d_s, d_ambient) = lighting_backward(&sb.darkening, app, d_l);
        for c in 0..3 {
            app_grad.ambient_logit[c] += d_ambient[c];
        }
        if entropy {
            let (value, grad) = opaqueness(&sb.darkening, cfg.consistency.mean);
            terms.opaqueness = value;
            d_s.add_scaled(&grad, weights.opaqueness);
        }
        let d_dh = darkening_backward(&sb.delta_h, &sb.darkening, cfg.shading.rho, &d_s);
        let (d_ea, d_es) = delta_h_backward(&sb.warp, &d_dh);
        d_elev_a.add_scaled(&d_ea, 1.0);
        sun_upstream = Some(d_es);
    }

    let mut mask_pixels = 0;
    let mut perturbed = None;
    if consistency {
        let cam_b = views
            .perturbed
            .ok_or_else(|| Error::Config("consistency is enabled but no perturbed camera was given".into()))?;
        let rb = render(prims, cam_b, frame, rc, Channels::Both)?;
        let mask = consistency_mask(views.camera, cam_b, elev_a, &rb.targets.elevation, frame, &cfg.consistency)?;
        mask_pixels = mask.count();
        let cc = color_consistency(albedo, &rb.targets.feature, &mask, cfg.consistency.mean);
        let ac = altitude_consistency(elev_a, &rb.targets.elevation, &mask, cfg.consistency.mean);
        terms.color_consistency = cc.value;
        terms.altitude_consistency = ac.value;
        d_albedo.add_scaled(&cc.grad_a, weights.color_consistency);
        d_elev_a.add_scaled(&ac.grad_a, weights.altitude_consistency);
        let mut d_fb = cc.grad_b;
        d_fb.data_mut().iter_mut().for_each(|v| *v *= weights.color_consistency);
        let mut d_eb = ac.grad_b;
        d_eb.data_mut().iter_mut().for_each(|v| *v *= weights.altitude_consistency);
        perturbed = Some((rb, d_fb, d_eb));
    }

    let mut grads = render_backward(
        prims,
        frame,
        rc,
        &ra,
        &RenderGrads {
            feature: Some(d_albedo),
            elevation: full.then_some(d_elev_a),
            opacity: Some(ig.opacity),
        },
    );
    if let (Some((rs, _)), Some(d_es)) = (&sun, sun_upstream) {
        let g = render_backward(
            prims,
            frame,
            rc,
            rs,
            &RenderGrads {
                elevation: Some(d_es),
                ..Default::default()
            },
        );
        grads.iter_mut().zip(&g).for_each(|(a, b)| a.add_assign(b));
    }
    if let Some((rb, d_fb, d_eb)) = perturbed {
        let g = render_backward(
            prims,
            frame,
            rc,
            &rb,
            &RenderGrads {
                feature: Some(d_fb),
                elevation: Some(d_eb),
                opacity: None,
            },
        );
        grads.iter_mut().zip(&g).for_each(|(a, b)| a.add_assign(b));
    }
    if full && cfg.ablation.sparsity {
        terms.sparsity = sparsity(prims, Some((&mut grads, weights.sparsity)));
    }
    Ok(StepOutput {
        total: total_loss(&terms, &weights, full),
        terms,
        primitive_grads: grads,
        appearance_grad: app_grad.to_array(),
        mask_pixels,
    })
}

/// Meters per pixel of the sun cameras: the configured value or the mean
/// GSD of the satellite cameras.
pub fn sun_gsd(data: &SceneDataset, cfg: &TrainConfig) -> f64 {
    cfg.sun_gsd.unwrap_or_else(|| {
        data.frames
            .iter()
            .map(|f| f.camera.ground_sampling_distance(&data.frame))
            .sum::<f64>()
            / data.frames.len().max(1) as f64
    })
}

/// Rasters of one view of a trained model.
#[derive(Debug, Clone)]
pub struct ViewRender {
    /// Predicted image, shaded when a sun camera is given.
    pub shaded: Raster,
    pub albedo: Raster,
    /// Opacity-normalized altitude in meters; NaN where opacity is below
    /// [`DSM_MIN_OPACITY`].
    pub elevation: Raster,
    pub opacity: Raster,
    /// Darkening `s` (1 lit, 0 shadowed).
    pub shadow: Option<Raster>,
}

pub fn render_view(
    prims: &[Gaussian],
    frame: &WorldFrame,
    camera: &AffineCamera,
    sun: Option<&AffineCamera>,
    app: &CameraAppearance,
    cfg: &TrainConfig,
) -> Result<ViewRender> {
    let ra = render(prims, camera, frame, &cfg.raster, Channels::Both)?.targets;
    let shading = match sun {
        Some(cam_s) => {
            let es = render(prims, cam_s, frame, &cfg.raster, Channels::Elevation)?.targets.elevation;
            Some(shadow_buffers(camera, cam_s, &ra.elevation, &es, frame, &cfg.shading, &app.ambient())?)
        }
        None => None,
    };
    let shaded = form_image(&ra.feature, &ra.opacity, shading.as_ref().map(|b| &b.lighting), app);
    let mut elevation = ra.elevation.clone();
    for (e, &t) in elevation.data_mut().iter_mut().zip(ra.opacity.data()) {
        *e = if t >= DSM_MIN_OPACITY { *e / t } else { f64::NAN };
    }
    Ok(ViewRender {
        shaded,
        albedo: ra.feature,
        elevation,
        opacity: ra.opacity,
        shadow: shading.map(|b| b.darkening),
    })
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRow {
    pub iteration: usize,
    pub view: usize,
    pub phase: u8,
    pub photometric: f64,
    pub sparsity: f64,
    pub color_consistency: f64,
    pub altitude_consistency: f64,
    pub opaqueness: f64,
    pub total: f64,
    pub primitives: usize,
    pub mask_pixels: usize,
    pub skipped: bool,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: Model,
    pub log: Vec<LogRow>,
    pub initial_primitives: usize,
    pub elapsed_s: f64,
    /// Iterations whose update was skipped for non-finite gradients.
    pub skipped_steps: usize,
}

impl TrainReport {
    pub fn write_log_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        for row in &self.log {
            w.serialize(row).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Satellite view prepared for training.
struct View<'a> {
    camera: &'a AffineCamera,
    image: &'a Raster,
    sun: AffineCamera,
}

fn step_parameters(
    prims: &mut [Gaussian],
    state: &mut AdamTable<GAUSSIAN_FIELDS>,
    grads: &[GaussianGrad],
    lr: &[f64; GAUSSIAN_FIELDS],
    eps: &[f64; GAUSSIAN_FIELDS],
) {
    let mut params: Vec<[f64; GAUSSIAN_FIELDS]> = prims.iter().map(Gaussian::to_array).collect();
    let g: Vec<[f64; GAUSSIAN_FIELDS]> = grads.iter().map(GaussianGrad::to_array).collect();
    state.step_all(&mut params, &g, lr, eps);
    for (p, a) in prims.iter_mut().zip(&params) {
        *p = Gaussian::from_array(a);
        p.normalize_rotation();
        p.albedo = p.albedo.map(|v| v.clamp(0.0, 1.0));
    }
}

/// Optimizes a model of `data` from scratch. With `out_dir`, periodic
/// checkpoints are written under `out_dir/checkpoints/`.
pub fn train(data: &SceneDataset, cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainReport> {
    cfg.validate()?;
    if data.frames.len() < 2 {
        return Err(Error::Config(format!(
            "training needs at least 2 posed images, got {}",
            data.frames.len()
        )));
    }
    let frame = &data.frame;
    let bounds = data.world_bounds();
    let sun_gsd = sun_gsd(data, cfg);
    let views = data
        .frames
        .iter()
        .map(|f| {
            Ok(View {
                camera: &f.camera,
                image: &f.image,
                sun: build_sun_camera(&f.sun, frame, &bounds, sun_gsd)
                    .map_err(|e| Error::Config(format!("frame {}: {e}", f.name)))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut prims = init_primitives(frame, &bounds, cfg.init_density, cfg.init_opacity, &mut rng)?;
    let initial_primitives = prims.len();
    let mut apps = vec![CameraAppearance::identity(cfg.init_ambient); views.len()];
    let mut state = OptimState::new(prims.len(), views.len());
    let radius = 0.5 * bounds.extent().max();
    let mut order: Vec<usize> = Vec::new();
    let mut log = Vec::with_capacity(cfg.iterations);
    let mut skipped_steps = 0;
    let start = Instant::now();
    log::info!(
        "training {} views, {} primitives, {} iterations",
        views.len(),
        initial_primitives,
        cfg.iterations
    );

    for it in 0..cfg.iterations {
        if order.is_empty() {
            order = (0..views.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let vi = order.pop().expect("non-empty epoch");
        let view = &views[vi];
        let full = it >= cfg.enable_iteration;
        let perturbed = if full && cfg.ablation.consistency {
            Some(perturb_camera(view.camera, frame, &cfg.consistency, &mut rng).0)
        } else {
            None
        };
        let out = loss_and_gradients(
            &prims,
            frame,
            StepViews {
                camera: view.camera,
                observed: view.image,
                sun: Some(&view.sun),
                perturbed: perturbed.as_ref(),
            },
            &apps[vi],
            cfg,
            full,
        )?;

        let finite = out.total.is_finite()
            && out.primitive_grads.iter().all(GaussianGrad::is_finite)
            && out.appearance_grad.iter().all(|v| v.is_finite());
        if finite {
            let p_lr = position_lr(&cfg.lr, it, cfg.iterations, radius);
            let l = &cfg.lr;
            let mut lr = [0.0; GAUSSIAN_FIELDS];
            let mut eps = [EPS_DEFAULT; GAUSSIAN_FIELDS];
            lr[0..3].fill(p_lr);
            eps[0..3].fill(EPS_POSITION);
            lr[3..6].fill(l.scale);
            lr[6..10].fill(l.rotation);
            lr[10] = l.opacity;
            lr[11..14].fill(l.albedo);
            step_parameters(&mut prims, &mut state.primitives, &out.primitive_grads, &lr, &eps);
            let mut a = [apps[vi].to_array()];
            state.cameras[vi].step_all(
                &mut a,
                &[out.appearance_grad],
                &[l.camera; APPEARANCE_FIELDS],
                &[EPS_DEFAULT; APPEARANCE_FIELDS],
            );
            apps[vi] = CameraAppearance::from_array(&a[0]);
        } else {
            skipped_steps += 1;
            log::warn!("iteration {it}: non-finite loss or gradient, update skipped");
        }

        let next = it + 1;
        if next >= cfg.enable_iteration && (next - cfg.enable_iteration) % cfg.prune_every == 0 && next < cfg.iterations {
            let removed = prune(&mut prims, &mut state.primitives, cfg.alpha_min)?;
            if removed > 0 {
                log::debug!("iteration {next}: pruned {removed}, {} left", prims.len());
            }
        }
        let t = &out.terms;
        log.push(LogRow {
            iteration: it,
            view: vi,
            phase: if full { 2 } else { 1 },
            photometric: t.photometric,
            sparsity: t.sparsity,
            color_consistency: t.color_consistency,
            altitude_consistency: t.altitude_consistency,
            opaqueness: t.opaqueness,
            total: out.total,
            primitives: prims.len(),
            mask_pixels: out.mask_pixels,
            skipped: !finite,
            elapsed_s: start.elapsed().as_secs_f64(),
        });
        if next % 500 == 0 || next == cfg.iterations {
            log::info!(
                "iteration {next}/{}: loss {:.5}, {} primitives, {:.1} s",
                cfg.iterations,
                out.total,
                prims.len(),
                start.elapsed().as_secs_f64()
            );
        }
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && next % cfg.checkpoint_every == 0 {
                let model = Model {
                    primitives: prims.clone(),
                    frame: *frame,
                    camera_names: data.frames.iter().map(|f| f.name.clone()).collect(),
                    appearances: apps.clone(),
                    iteration: next,
                };
                save_checkpoint(&dir.join("checkpoints").join(format!("iter_{next:05}")), &model)?;
            }
        }
    }
    Ok(TrainReport {
        model: Model {
            primitives: prims,
            frame: *frame,
            camera_names: data.frames.iter().map(|f| f.name.clone()).collect(),
            appearances: apps,
            iteration: cfg.iterations,
        },
        log,
        initial_primitives,
        elapsed_s: start.elapsed().as_secs_f64(),
        skipped_steps,
    })
}
