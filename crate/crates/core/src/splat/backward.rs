use nalgebra::{Matrix2, Matrix3, Vector2, Vector4};

use super::gaussian::{normalized, quaternion_backward, quaternion_to_matrix};
use super::{Gaussian, GaussianGrad, SplatGrad, Splat2D};
use crate::geocam::{PixelProjection, WorldFrame};

/// Pulls a 2D splat gradient back to the primitive's parameters.
///
/// `splat` must be the output of `splat_primitive` for `g` under `proj`.
pub fn splat_backward(
    proj: &PixelProjection,
    frame: &WorldFrame,
    g: &Gaussian,
    splat: &Splat2D,
    grad: &SplatGrad,
) -> GaussianGrad {
    let p = &proj.linear;
    let d_mean2 = Vector2::new(grad.mean[0], grad.mean[1]);
    let mut d_mu = p.transpose() * d_mean2;
    d_mu += frame.elevation_gradient() * grad.elevation;

    let alpha = splat.alpha;
    let d_logit = grad.alpha * alpha * (1.0 - alpha);

    // Conic scalars (a, b, c) enter as [[a, b], [b, c]].
    let g_q = Matrix2::new(grad.conic[0], 0.5 * grad.conic[1], 0.5 * grad.conic[1], grad.conic[2]);
    let q = splat.conic_matrix();
    let d_cov2 = -(q * g_q * q);
    let d_cov3: Matrix3<f64> = p.transpose() * d_cov2 * p;

    let raw = Vector4::from(g.rotation);
    let r = quaternion_to_matrix(&normalized(&raw));
    let s = g.scales();
    let m = r * Matrix3::from_diagonal(&s);
    let d_m = (d_cov3 + d_cov3.transpose()) * m;
    let rt_dm = r.transpose() * d_m;
    let d_r = d_m * Matrix3::from_diagonal(&s);
    let d_q = quaternion_backward(&raw, &d_r);

    GaussianGrad {
        mean: [d_mu.x, d_mu.y, d_mu.z],
        log_scale: [rt_dm[(0, 0)] * s.x, rt_dm[(1, 1)] * s.y, rt_dm[(2, 2)] * s.z],
        rotation: [d_q[0], d_q[1], d_q[2], d_q[3]],
        opacity_logit: d_logit,
        albedo: grad.feature,
    }
}
