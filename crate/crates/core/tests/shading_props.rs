mod common;

use common::{oblique_camera, random_gaussian, rel_err, rng, test_frame};
use nalgebra::{Matrix2x3, Vector2};
use proptest::prelude::*;
use satsplat_core::geocam::{AffineCamera, CameraKind};
use satsplat_core::raster::Raster;
use satsplat_core::shading::{
    colorize, darkening, darkening_backward, delta_h_backward, form_image, form_image_backward, lighting, lighting_backward,
    CameraAppearance, Warp,
};
use satsplat_core::splat::{render, render_backward, Channels, Gaussian, RasterConfig, RenderGrads};

fn appearance(seed: u64) -> CameraAppearance {
    let mut r = rng(seed);
    let mut a = CameraAppearance::identity(0.3).to_array();
    for v in a.iter_mut() {
        *v += rand::Rng::random_range(&mut r, -0.3..0.3);
    }
    CameraAppearance::from_array(&a)
}

proptest! {
    #[test]
    fn darkening_is_a_unit_fraction(dh in prop::collection::vec(-50.0..50.0f64, 1..64), rho in 0.01..20.0f64) {
        let n = dh.len();
        let s = darkening(&Raster::from_vec(n, 1, 1, dh.clone()), rho);
        for (&d, &v) in dh.iter().zip(s.data()) {
            prop_assert!(v > 0.0 || rho * d > 700.0);
            prop_assert!(v <= 1.0);
            if d <= 0.0 {
                prop_assert_eq!(v, 1.0);
            }
        }
    }

    #[test]
    fn lighting_increases_with_s(a in 0.0..1.0f64, b in 0.0..1.0f64, psi in prop::array::uniform3(0.0..0.999f64)) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9);
        let l_lo = lighting(&Raster::filled(1, 1, 1, lo), &psi);
        let l_hi = lighting(&Raster::filled(1, 1, 1, hi), &psi);
        for c in 0..3 {
            prop_assert!(l_hi.data()[c] > l_lo.data()[c]);
        }
    }

    #[test]
    fn identity_appearance_reduces_to_plain_render(seed in 0u64..10_000, n in 1usize..150) {
        let mut r = rng(seed);
        let prims: Vec<Gaussian> = (0..n).map(|_| random_gaussian(&mut r, 1.0, (-3.5, -1.5))).collect();
        let t = render(&prims, &oblique_camera(32), &test_frame(), &RasterConfig::default(), Channels::Feature).unwrap().targets;
        let ones = Raster::filled(32, 32, 3, 1.0);
        let image = form_image(&t.feature, &t.opacity, Some(&ones), &CameraAppearance::identity(0.4));
        prop_assert_eq!(image, t.feature);
    }

    /// The color map applied after compositing equals compositing primitives
    /// whose colors were mapped first (`M f_k + o`).
    #[test]
    fn color_map_commutes_with_compositing(seed in 0u64..10_000, n in 1usize..150) {
        let mut r = rng(seed);
        let prims: Vec<Gaussian> = (0..n).map(|_| random_gaussian(&mut r, 1.0, (-3.5, -1.5))).collect();
        let app = appearance(seed);
        let (cam, frame, cfg) = (oblique_camera(32), test_frame(), RasterConfig::default());
        let t = render(&prims, &cam, &frame, &cfg, Channels::Feature).unwrap().targets;
        let composited = colorize(&t.feature, &t.opacity, &app);
        let mapped: Vec<Gaussian> = prims
            .iter()
            .map(|p| Gaussian { albedo: app.apply(&p.albedo), ..*p })
            .collect();
        let per_primitive = render(&mapped, &cam, &frame, &cfg, Channels::Feature).unwrap().targets.feature;
        prop_assert!(composited.max_abs_diff(&per_primitive) <= 1e-6);
    }
}

/// Chain rule through Δh (warp frozen) against central differences of a
/// weighted sum of the shaded image, for every primitive position.
#[test]
fn shaded_image_gradient_through_delta_h() {
    let frame = test_frame();
    let cam = oblique_camera(24);
    let sun = AffineCamera::new(
        Matrix2x3::new(0.85, 0.0, 0.35, 0.0, 0.9, -0.3),
        Vector2::new(0.0, 0.0),
        24,
        24,
        CameraKind::Sun,
    );
    let cfg = RasterConfig::exact();
    let mut r = rng(41);
    let mut prims: Vec<Gaussian> = (0..5).map(|_| random_gaussian(&mut r, 0.5, (-2.6, -2.0))).collect();
    prims[0].log_scale = [0.25f64.ln(), 0.25f64.ln(), 0.02f64.ln()];
    prims[0].rotation = [1.0, 0.0, 0.0, 0.0];
    prims[0].mean = [0.0, 0.0, -0.2];
    let app = appearance(3);
    let rho = 10.0;
    let weights = Raster::from_vec(24, 24, 3, (0..24 * 24 * 3).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect());

    let ra = render(&prims, &cam, &frame, &cfg, Channels::Both).unwrap();
    let rs = render(&prims, &sun, &frame, &cfg, Channels::Elevation).unwrap();
    let warp = Warp::homologous(&cam, &sun, &ra.targets.elevation, &frame).unwrap();
    let objective = |p: &[Gaussian]| -> f64 {
        let a = render(p, &cam, &frame, &cfg, Channels::Both).unwrap().targets;
        let es = render(p, &sun, &frame, &cfg, Channels::Elevation).unwrap().targets.elevation;
        let mut dh = warp.resample(&es);
        dh.add_scaled(&a.elevation, -1.0);
        let l = lighting(&darkening(&dh, rho), &app.ambient());
        let img = form_image(&a.feature, &a.opacity, Some(&l), &app);
        img.data().iter().zip(weights.data()).map(|(x, w)| x * w).sum()
    };

    let mut dh = warp.resample(&rs.targets.elevation);
    dh.add_scaled(&ra.targets.elevation, -1.0);
    let s = darkening(&dh, rho);
    let l = lighting(&s, &app.ambient());
    let g = form_image_backward(&ra.targets.feature, &ra.targets.opacity, Some(&l), &app, &weights);
    let (d_s, _) = lighting_backward(&s, &app, g.lighting.as_ref().unwrap());
    let (d_ea, d_es) = delta_h_backward(&warp, &darkening_backward(&dh, &s, rho, &d_s));
    let ga = render_backward(
        &prims,
        &frame,
        &cfg,
        &ra,
        &RenderGrads { feature: Some(g.albedo), elevation: Some(d_ea), opacity: Some(g.opacity) },
    );
    let gs = render_backward(&prims, &frame, &cfg, &rs, &RenderGrads { feature: None, elevation: Some(d_es), opacity: None });

    let h = 1e-6;
    for k in 0..prims.len() {
        for axis in 0..3 {
            let analytic = ga[k].mean[axis] + gs[k].mean[axis];
            let mut plus = prims.clone();
            let mut minus = prims.clone();
            plus[k].mean[axis] += h;
            minus[k].mean[axis] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            assert!(rel_err(analytic, fd, 1e-4) <= 1e-2, "prim {k} axis {axis}: {analytic} vs {fd}");
        }
    }
}
