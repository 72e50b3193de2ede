#![allow(dead_code)]

use nalgebra::{Matrix2, Matrix2x3, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use satsplat_core::geocam::{AffineCamera, CameraKind, UtmZone, WorldFrame};
use satsplat_core::raster::Raster;
use satsplat_core::splat::{Gaussian, RasterConfig, Splat2D};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn test_frame() -> WorldFrame {
    WorldFrame {
        scale: 20.0,
        offset: [440_000.0, 3_350_000.0, 30.0],
        zone: UtmZone {
            number: 17,
            north: true,
        },
    }
}

/// Slightly oblique camera covering roughly `[-1, 1]²` of world space.
pub fn oblique_camera(size: usize) -> AffineCamera {
    AffineCamera::new(
        Matrix2x3::new(0.9, 0.1, 0.25, -0.05, 0.95, -0.2),
        Vector2::new(0.02, -0.03),
        size,
        size,
        CameraKind::Satellite,
    )
}

pub fn random_gaussian(rng: &mut impl Rng, extent: f64, log_scale: (f64, f64)) -> Gaussian {
    Gaussian {
        mean: [
            rng.random_range(-extent..extent),
            rng.random_range(-extent..extent),
            rng.random_range(-0.5..0.5),
        ],
        log_scale: [
            rng.random_range(log_scale.0..log_scale.1),
            rng.random_range(log_scale.0..log_scale.1),
            rng.random_range(log_scale.0..log_scale.1),
        ],
        rotation: [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ],
        opacity_logit: rng.random_range(-2.0..3.0),
        albedo: [rng.random(), rng.random(), rng.random()],
    }
}

/// Random screen-space splat in a `w×h` image, already in sorted order.
pub fn random_splat(rng: &mut impl Rng, w: usize, h: usize, index: usize) -> Splat2D {
    let sx: f64 = rng.random_range(0.5..6.0);
    let sy: f64 = rng.random_range(0.5..6.0);
    let rho: f64 = rng.random_range(-0.8..0.8);
    let cov = [sx * sx + 0.3, rho * sx * sy, sy * sy + 0.3];
    let det = cov[0] * cov[2] - cov[1] * cov[1];
    Splat2D {
        mean: [rng.random_range(-4.0..w as f64 + 4.0), rng.random_range(-4.0..h as f64 + 4.0)],
        cov,
        conic: [cov[2] / det, -cov[1] / det, cov[0] / det],
        depth: index as f64,
        alpha: rng.random_range(0.0..1.0),
        feature: [rng.random(), rng.random(), rng.random()],
        elevation: rng.random_range(0.0..40.0),
        index,
    }
}

/// Direct per-pixel compositing over every splat in order, inverting each
/// covariance independently. `rules` applies the contribution cutoffs of
/// `cfg`; otherwise every splat contributes everywhere.
pub fn brute_force(splats: &[Splat2D], w: usize, h: usize, cfg: &RasterConfig, rules: bool) -> [Raster; 3] {
    let mut feature = Raster::new(w, h, 3);
    let mut elevation = Raster::new(w, h, 1);
    let mut opacity = Raster::new(w, h, 1);
    let inverses: Vec<Matrix2<f64>> = splats
        .iter()
        .map(|s| {
            Matrix2::new(s.cov[0], s.cov[1], s.cov[1], s.cov[2])
                .try_inverse()
                .unwrap()
        })
        .collect();
    for row in 0..h {
        for col in 0..w {
            let p = Vector2::new(col as f64 + 0.5, row as f64 + 0.5);
            let mut t = 1.0;
            for (s, inv) in splats.iter().zip(&inverses) {
                let d = p - Vector2::new(s.mean[0], s.mean[1]);
                let q = (d.transpose() * inv * d)[0];
                if rules && q > cfg.cull_sigma * cfg.cull_sigma {
                    continue;
                }
                let a = s.alpha * (-0.5 * q).exp();
                if rules && a < cfg.alpha_cutoff {
                    continue;
                }
                let wgt = a * t;
                for c in 0..3 {
                    let v = feature.get(row, col, c) + s.feature[c] * wgt;
                    feature.set(row, col, c, v);
                }
                elevation.set(row, col, 0, elevation.get(row, col, 0) + s.elevation * wgt);
                opacity.set(row, col, 0, opacity.get(row, col, 0) + wgt);
                t *= 1.0 - a;
                if rules && t < cfg.transmittance_stop {
                    break;
                }
            }
        }
    }
    [feature, elevation, opacity]
}

/// Relative error with a floor that keeps near-zero pairs from exploding.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
