use nalgebra::{Matrix2, Vector2, Vector3};

use super::Gaussian;
use crate::geocam::{PixelProjection, WorldFrame};

/// A primitive splatted onto an image, in continuous pixel coordinates.
///
/// `cov` and `conic` store the symmetric 2×2 matrices as `(xx, xy, yy)`;
/// `cov` already includes the isotropic dilation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat2D {
    pub mean: [f64; 2],
    pub cov: [f64; 3],
    pub conic: [f64; 3],
    /// Distance along the view direction; smaller is closer to the sensor.
    pub depth: f64,
    pub alpha: f64,
    pub feature: [f64; 3],
    /// Altitude of the center in meters.
    pub elevation: f64,
    /// Index of the source primitive.
    pub index: usize,
}

impl Splat2D {
    pub fn cov_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.cov[0], self.cov[1], self.cov[1], self.cov[2])
    }

    pub fn conic_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.conic[0], self.conic[1], self.conic[1], self.conic[2])
    }

    /// Kernel value `exp(-½ dᵀ Σ⁻¹ d)` at a pixel position.
    #[inline]
    pub fn kernel(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.mean[0];
        let dy = y - self.mean[1];
        (-0.5 * (self.conic[0] * dx * dx + 2.0 * self.conic[1] * dx * dy + self.conic[2] * dy * dy)).exp()
    }
}

/// Exact affine splatting: `μ₂ = Pμ + p`, `Σ₂ = P Σ Pᵀ + dilation·I`,
/// `depth = <μ, view_dir>`.
pub fn splat_primitive(
    proj: &PixelProjection,
    view_dir: &Vector3<f64>,
    frame: &WorldFrame,
    g: &Gaussian,
    dilation: f64,
    index: usize,
) -> Splat2D {
    let mu = g.mean();
    let mean = proj.project(&mu);
    let cov3 = g.covariance();
    let cov2 = proj.linear * cov3 * proj.linear.transpose() + Matrix2::identity() * dilation;
    let cov = [cov2[(0, 0)], 0.5 * (cov2[(0, 1)] + cov2[(1, 0)]), cov2[(1, 1)]];
    let det = cov[0] * cov[2] - cov[1] * cov[1];
    let conic = [cov[2] / det, -cov[1] / det, cov[0] / det];
    Splat2D {
        mean: [mean.x, mean.y],
        cov,
        conic,
        depth: mu.dot(view_dir),
        alpha: g.opacity(),
        feature: g.albedo,
        elevation: frame.elevation(&mu),
        index,
    }
}

/// Stable front-to-back order: increasing depth, ties by primitive index.
pub fn sort_front_to_back(splats: &[Splat2D]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..splats.len()).collect();
    order.sort_by(|&a, &b| {
        splats[a]
            .depth
            .total_cmp(&splats[b].depth)
            .then(splats[a].index.cmp(&splats[b].index))
    });
    order
}

/// Pixel-space mean of a splat, as a vector.
pub fn splat_mean(s: &Splat2D) -> Vector2<f64> {
    Vector2::new(s.mean[0], s.mean[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geocam::{AffineCamera, CameraKind, UtmZone};
    use nalgebra::{Matrix2x3, Matrix3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame() -> WorldFrame {
        WorldFrame {
            scale: 10.0,
            offset: [0.0, 0.0, 5.0],
            zone: UtmZone {
                number: 31,
                north: true,
            },
        }
    }

    fn unit_gaussian() -> Gaussian {
        Gaussian {
            mean: [0.1, 0.2, 0.3],
            log_scale: [0.0; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: 0.0,
            albedo: [0.2, 0.4, 0.6],
        }
    }

    #[test]
    fn nadir_unit_covariance_gets_dilated() {
        // A 2×2 image makes NDC and pixel units coincide in scale.
        let cam = AffineCamera::new(
            Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0),
            Vector2::zeros(),
            2,
            2,
            CameraKind::Satellite,
        );
        let s = splat_primitive(
            &cam.pixel_projection(),
            &Vector3::new(0.0, 0.0, -1.0),
            &frame(),
            &unit_gaussian(),
            0.3,
            0,
        );
        assert!((s.cov_matrix() - Matrix2::identity() * 1.3).norm() < 1e-14);
        assert!((s.conic_matrix() * s.cov_matrix() - Matrix2::identity()).norm() < 1e-14);
        assert_eq!(s.elevation, 5.0 + 10.0 * 0.3);
        assert!((s.depth + 0.3).abs() < 1e-15);
    }

    #[test]
    fn doubling_linear_part_quadruples_covariance() {
        let p = PixelProjection {
            linear: Matrix2x3::new(0.7, 0.2, -0.1, 0.1, 0.9, 0.3),
            offset: Vector2::new(3.0, 4.0),
        };
        let p2 = PixelProjection {
            linear: p.linear * 2.0,
            offset: p.offset,
        };
        let d = Vector3::new(0.0, 0.0, -1.0);
        let a = splat_primitive(&p, &d, &frame(), &unit_gaussian(), 0.0, 0);
        let b = splat_primitive(&p2, &d, &frame(), &unit_gaussian(), 0.0, 0);
        assert!((b.cov_matrix() - a.cov_matrix() * 4.0).norm() < 1e-13);
    }

    #[test]
    fn random_projection_matches_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let lin = Matrix2x3::from_fn(|_, _| rng.random_range(-3.0..3.0));
            let p = PixelProjection {
                linear: lin,
                offset: Vector2::new(rng.random_range(0.0..50.0), rng.random_range(0.0..50.0)),
            };
            let mut g = unit_gaussian();
            g.log_scale = [rng.random_range(-1.0..0.5), rng.random_range(-1.0..0.5), rng.random_range(-1.0..0.5)];
            g.rotation = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let s = splat_primitive(&p, &Vector3::new(0.0, 0.0, -1.0), &frame(), &g, 0.0, 0);
            // Assemble A Σ Aᵀ entry by entry.
            let cov: Matrix3<f64> = g.covariance();
            let mut direct = Matrix2::zeros();
            for i in 0..2 {
                for j in 0..2 {
                    let mut acc = 0.0;
                    for k in 0..3 {
                        for l in 0..3 {
                            acc += lin[(i, k)] * cov[(k, l)] * lin[(j, l)];
                        }
                    }
                    direct[(i, j)] = acc;
                }
            }
            assert!((s.cov_matrix() - direct).norm() < 1e-12 * direct.norm().max(1.0));
        }
    }

    fn at_depth(depth: f64, index: usize) -> Splat2D {
        Splat2D {
            mean: [0.0; 2],
            cov: [1.0, 0.0, 1.0],
            conic: [1.0, 0.0, 1.0],
            depth,
            alpha: 0.5,
            feature: [0.0; 3],
            elevation: 0.0,
            index,
        }
    }

    #[test]
    fn sort_orders_by_depth_then_index() {
        let s = vec![at_depth(2.0, 0), at_depth(1.0, 1)];
        assert_eq!(sort_front_to_back(&s), vec![1, 0]);
        let s = vec![at_depth(1.0, 0), at_depth(1.0, 1), at_depth(1.0, 2)];
        assert_eq!(sort_front_to_back(&s), vec![0, 1, 2]);
    }

    #[test]
    fn sort_matches_reference_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s: Vec<Splat2D> = (0..500).map(|i| at_depth((rng.random_range(0..50) as f64) * 0.1, i)).collect();
        let order = sort_front_to_back(&s);
        // Reference: insertion sort on (depth, index) keys.
        let mut reference: Vec<usize> = Vec::new();
        for i in 0..s.len() {
            let pos = reference
                .iter()
                .position(|&j| (s[j].depth, s[j].index) > (s[i].depth, s[i].index))
                .unwrap_or(reference.len());
            reference.insert(pos, i);
        }
        assert_eq!(order, reference);
    }
}
