//! Training objectives: photometric distance and the sparsity, view
//! consistency and opaqueness regularizers.

mod photometric;

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use photometric::{photometric, ssim, Photometric, SSIM_WEIGHT};

use crate::geocam::{AffineCamera, WorldFrame};
use crate::raster::Raster;
use crate::shading::Warp;
use crate::splat::{Gaussian, GaussianGrad};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub sparsity: f64,
    pub color_consistency: f64,
    pub altitude_consistency: f64,
    pub opaqueness: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            sparsity: 0.1,
            color_consistency: 0.1,
            altitude_consistency: 0.01,
            opaqueness: 0.01,
        }
    }
}

/// How the altitude in the camera perturbation is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbAltitude {
    /// Absolute altitude in meters: `B(x) = A(x) + k ℰ(x) q`.
    Meters,
    /// Normalized world height `(ℰ(x) - e0) / c`, i.e. the world z coordinate.
    World,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsistencyConfig {
    /// Occlusion threshold in meters.
    pub delta_h_min: f64,
    /// Shift in NDC per unit of altitude.
    pub perturb_scale: f64,
    pub perturb_altitude: PerturbAltitude,
    /// Divide the consistency and opaqueness sums by their pixel counts.
    pub mean: bool,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            delta_h_min: 0.30,
            perturb_scale: 0.05,
            perturb_altitude: PerturbAltitude::World,
            mean: true,
        }
    }
}

/// Values of every objective term for one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossTerms {
    pub photometric: f64,
    pub sparsity: f64,
    pub color_consistency: f64,
    pub altitude_consistency: f64,
    pub opaqueness: f64,
}

/// Weighted objective. With `regularize = false` only the photometric term
/// counts.
pub fn total_loss(terms: &LossTerms, weights: &LossWeights, regularize: bool) -> f64 {
    if !regularize {
        return terms.photometric;
    }
    terms.photometric
        + weights.sparsity * terms.sparsity
        + weights.color_consistency * terms.color_consistency
        + weights.altitude_consistency * terms.altitude_consistency
        + weights.opaqueness * terms.opaqueness
}

/// Mean opacity `(1/K) Σ α_k`, with its gradient on the opacity logits
/// accumulated into `grads` scaled by `weight`.
pub fn sparsity(prims: &[Gaussian], grads: Option<(&mut [GaussianGrad], f64)>) -> f64 {
    if prims.is_empty() {
        return 0.0;
    }
    let k = prims.len() as f64;
    let value = prims.iter().map(Gaussian::opacity).sum::<f64>() / k;
    if let Some((grads, weight)) = grads {
        for (g, p) in grads.iter_mut().zip(prims) {
            let a = p.opacity();
            g.opacity_logit += weight * a * (1.0 - a) / k;
        }
    }
    value
}

/// Sample from the standard normal restricted to `[-1, 1]`.
pub fn truncated_normal(rng: &mut impl Rng) -> f64 {
    loop {
        let v: f64 = rng.sample(StandardNormal);
        if v.abs() <= 1.0 {
            return v;
        }
    }
}

/// `B(x) = A(x) + k·alt(x)·q` for a given `q`.
pub fn perturb_camera_with(
    cam: &AffineCamera,
    frame: &WorldFrame,
    cfg: &ConsistencyConfig,
    q: Vector2<f64>,
) -> AffineCamera {
    let (g, e0) = match cfg.perturb_altitude {
        PerturbAltitude::Meters => (frame.elevation_gradient(), frame.elevation_offset()),
        PerturbAltitude::World => (nalgebra::Vector3::z(), 0.0),
    };
    let kq = q * cfg.perturb_scale;
    let linear = cam.linear() + kq * g.transpose();
    let offset = cam.offset() + kq * e0;
    cam.with_affine(linear, offset)
}

/// Random nearby camera with `q₁, q₂` drawn from the ±1-truncated normal.
pub fn perturb_camera(
    cam: &AffineCamera,
    frame: &WorldFrame,
    cfg: &ConsistencyConfig,
    rng: &mut impl Rng,
) -> (AffineCamera, Vector2<f64>) {
    let q = Vector2::new(truncated_normal(rng), truncated_normal(rng));
    (perturb_camera_with(cam, frame, cfg, q), q)
}

/// Pixels of A whose homologous point lies in B and is not occluded there.
#[derive(Debug, Clone)]
pub struct ConsistencyMask {
    pub mask: Vec<bool>,
    pub warp: Warp,
    /// `E_B(hom(u)) - E_A(u)`.
    pub delta_h: Raster,
}

impl ConsistencyMask {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// `M(u) = [Δh^{A,B}(u) < Δh_min] ∧ [hom^{A,B}(u) inside B]`.
pub fn consistency_mask(
    cam_a: &AffineCamera,
    cam_b: &AffineCamera,
    elev_a: &Raster,
    elev_b: &Raster,
    frame: &WorldFrame,
    cfg: &ConsistencyConfig,
) -> Result<ConsistencyMask> {
    let (delta_h, warp) = crate::shading::delta_h(cam_a, cam_b, elev_a, elev_b, frame)?;
    let mask = delta_h
        .data()
        .iter()
        .zip(&warp.inside)
        .map(|(&d, &inside)| inside && d < cfg.delta_h_min)
        .collect();
    Ok(ConsistencyMask { mask, warp, delta_h })
}

/// Value and gradients of a masked consistency term.
#[derive(Debug, Clone)]
pub struct Consistency {
    pub value: f64,
    /// Gradient on A's raster.
    pub grad_a: Raster,
    /// Gradient on B's raster.
    pub grad_b: Raster,
}

/// `Σ_u M(u) |a(u) - b(hom(u))|`, summed over channels. With `mean`, divided
/// by the number of masked samples (pixels × channels).
pub fn masked_consistency(a: &Raster, b: &Raster, mask: &ConsistencyMask, mean: bool) -> Consistency {
    let resampled = mask.warp.resample(b);
    let ch = a.channels();
    let count = mask.count() * ch;
    let norm = if mean && count > 0 { 1.0 / count as f64 } else { 1.0 };
    let mut value = 0.0;
    let mut grad_a = Raster::new(a.width(), a.height(), ch);
    let mut grad_on_resampled = Raster::new(a.width(), a.height(), ch);
    for (i, &m) in mask.mask.iter().enumerate() {
        if !m {
            continue;
        }
        let (av, bv) = (a.at(i), resampled.at(i));
        for c in 0..ch {
            let d = av[c] - bv[c];
            value += d.abs();
            let s = norm * d.signum() * (d != 0.0) as u8 as f64;
            grad_a.at_mut(i)[c] = s;
            grad_on_resampled.at_mut(i)[c] = -s;
        }
    }
    Consistency {
        value: value * norm,
        grad_a,
        grad_b: mask.warp.scatter(&grad_on_resampled),
    }
}

/// Color consistency between albedo renders of A and B.
pub fn color_consistency(albedo_a: &Raster, albedo_b: &Raster, mask: &ConsistencyMask, mean: bool) -> Consistency {
    masked_consistency(albedo_a, albedo_b, mask, mean)
}

/// Altitude consistency between elevation renders of A and B.
pub fn altitude_consistency(elev_a: &Raster, elev_b: &Raster, mask: &ConsistencyMask, mean: bool) -> Consistency {
    masked_consistency(elev_a, elev_b, mask, mean)
}

const ENTROPY_EPS: f64 = 1e-7;

/// Binary entropy in bits.
pub fn binary_entropy(x: f64) -> f64 {
    let x = x.clamp(ENTROPY_EPS, 1.0 - ENTROPY_EPS);
    -(x * x.log2() + (1.0 - x) * (1.0 - x).log2())
}

/// `Σ_u H(s(u))` (divided by the pixel count with `mean`), with its
/// gradient on `s`. The gradient is zero where the clamp is active.
pub fn opaqueness(s: &Raster, mean: bool) -> (f64, Raster) {
    let n = s.data().len();
    let norm = if mean && n > 0 { 1.0 / n as f64 } else { 1.0 };
    let mut grad = Raster::new(s.width(), s.height(), s.channels());
    let mut value = 0.0;
    for (g, &x) in grad.data_mut().iter_mut().zip(s.data()) {
        value += binary_entropy(x);
        if x > ENTROPY_EPS && x < 1.0 - ENTROPY_EPS {
            *g = norm * ((1.0 - x) / x).log2();
        }
    }
    (value * norm, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geocam::{CameraKind, UtmZone};
    use crate::splat::logit;
    use nalgebra::{Matrix2x3, Vector3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame() -> WorldFrame {
        WorldFrame {
            scale: 10.0,
            offset: [0.0, 0.0, 20.0],
            zone: UtmZone {
                number: 17,
                north: true,
            },
        }
    }

    fn cam() -> AffineCamera {
        AffineCamera::new(
            Matrix2x3::new(0.8, 0.1, 0.2, 0.0, 0.85, -0.1),
            Vector2::new(0.05, 0.0),
            20,
            20,
            CameraKind::Satellite,
        )
    }

    fn prim(alpha: f64) -> Gaussian {
        Gaussian {
            mean: [0.0; 3],
            log_scale: [0.0; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: logit(alpha),
            albedo: [1.0; 3],
        }
    }

    #[test]
    fn sparsity_closed_forms() {
        assert!((sparsity(&[prim(0.2), prim(0.4)], None) - 0.3).abs() < 1e-12);
        let ones = [Gaussian {
            opacity_logit: f64::INFINITY,
            ..prim(0.5)
        }];
        assert_eq!(sparsity(&ones, None), 1.0);
        let zeros = [Gaussian {
            opacity_logit: f64::NEG_INFINITY,
            ..prim(0.5)
        }];
        assert_eq!(sparsity(&zeros, None), 0.0);
    }

    #[test]
    fn sparsity_gradient_matches_finite_differences() {
        let p = vec![prim(0.2), prim(0.7), prim(0.01)];
        let mut g = vec![GaussianGrad::default(); 3];
        sparsity(&p, Some((&mut g, 1.0)));
        for k in 0..3 {
            let h = 1e-6;
            let mut a = p.clone();
            a[k].opacity_logit += h;
            let mut b = p.clone();
            b[k].opacity_logit -= h;
            let fd = (sparsity(&a, None) - sparsity(&b, None)) / (2.0 * h);
            assert!((fd - g[k].opacity_logit).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_perturbation_keeps_camera() {
        let c = cam();
        for mode in [PerturbAltitude::Meters, PerturbAltitude::World] {
            let cfg = ConsistencyConfig {
                perturb_altitude: mode,
                ..Default::default()
            };
            assert_eq!(perturb_camera_with(&c, &frame(), &cfg, Vector2::zeros()), c);
        }
    }

    #[test]
    fn perturbation_in_meters_closed_form() {
        let c = cam();
        let f = frame();
        let cfg = ConsistencyConfig {
            perturb_altitude: PerturbAltitude::Meters,
            ..Default::default()
        };
        let b = perturb_camera_with(&c, &f, &cfg, Vector2::new(1.0, 0.0));
        // ℰ(x) = 10 m and ℰ(x) = 0 m.
        let x10 = Vector3::new(0.3, -0.2, f.altitude_to_world_z(10.0));
        let d = b.project(&x10) - c.project(&x10);
        assert!((d - Vector2::new(0.5, 0.0)).norm() < 1e-12);
        let x0 = Vector3::new(-0.4, 0.1, f.altitude_to_world_z(0.0));
        assert!((b.project(&x0) - c.project(&x0)).norm() < 1e-12);
    }

    #[test]
    fn perturbation_in_world_units_is_zero_on_center_plane() {
        let c = cam();
        let f = frame();
        let b = perturb_camera_with(&c, &f, &ConsistencyConfig::default(), Vector2::new(0.7, -0.4));
        let x = Vector3::new(0.3, -0.2, 0.0);
        assert!((b.project(&x) - c.project(&x)).norm() < 1e-15);
        let x = Vector3::new(0.3, -0.2, 1.0);
        assert!((b.project(&x) - c.project(&x) - Vector2::new(0.035, -0.02)).norm() < 1e-15);
    }

    #[test]
    fn truncated_normal_stays_in_range() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..5000).map(|_| truncated_normal(&mut r)).collect();
        assert!(v.iter().all(|x| x.abs() <= 1.0));
        let m = v.iter().sum::<f64>() / v.len() as f64;
        assert!(m.abs() < 0.03);
    }

    #[test]
    fn identity_camera_pair_gives_full_mask_and_zero_losses() {
        let c = cam();
        let f = frame();
        let mut elev = Raster::new(20, 20, 1);
        let mut albedo = Raster::new(20, 20, 3);
        for (i, v) in elev.data_mut().iter_mut().enumerate() {
            *v = 15.0 + (i % 11) as f64;
        }
        for (i, v) in albedo.data_mut().iter_mut().enumerate() {
            *v = (i % 5) as f64 * 0.2;
        }
        let m = consistency_mask(&c, &c, &elev, &elev, &f, &ConsistencyConfig::default()).unwrap();
        assert_eq!(m.count(), 400);
        assert!(color_consistency(&albedo, &albedo, &m, true).value < 1e-12);
        assert!(altitude_consistency(&elev, &elev, &m, false).value < 1e-9);
    }

    #[test]
    fn shifted_elevation_gives_unit_altitude_loss() {
        let c = cam();
        let f = frame();
        let elev_a = Raster::filled(20, 20, 1, 22.0);
        let elev_b = Raster::filled(20, 20, 1, 23.0);
        let cfg = ConsistencyConfig {
            delta_h_min: 1.5,
            ..Default::default()
        };
        let m = consistency_mask(&c, &c, &elev_a, &elev_b, &f, &cfg).unwrap();
        let sum = altitude_consistency(&elev_a, &elev_b, &m, false).value;
        assert!((sum / m.count() as f64 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_closed_forms() {
        assert!(binary_entropy(0.0) <= 2e-5);
        assert!(binary_entropy(1.0) <= 2e-5);
        assert!((binary_entropy(0.5) - 1.0).abs() < 1e-15);
        assert!((binary_entropy(0.25) - 0.811_278_124_459_132_8).abs() < 1e-12);
    }

    #[test]
    fn total_loss_weighting() {
        let t = LossTerms {
            photometric: 0.0,
            sparsity: 1.0,
            ..Default::default()
        };
        assert!((total_loss(&t, &LossWeights::default(), true) - 0.1).abs() < 1e-15);
        assert_eq!(total_loss(&t, &LossWeights::default(), false), 0.0);
    }
}
