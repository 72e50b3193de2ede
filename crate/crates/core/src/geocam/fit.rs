use nalgebra::{Matrix2x3, Matrix4, Vector2, Vector3, Vector4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Aabb, AffineCamera, CameraKind, RpcModel, WorldFrame};
use crate::{Error, Result};

/// Sampling layout for [`fit_affine`]: a regular grid plus uniform samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFitOptions {
    pub grid_per_axis: usize,
    pub random_samples: usize,
}

impl Default for AffineFitOptions {
    fn default() -> Self {
        Self {
            grid_per_axis: 5,
            random_samples: 100,
        }
    }
}

impl AffineFitOptions {
    pub fn sample_count(&self) -> usize {
        self.grid_per_axis.pow(3) + self.random_samples
    }
}

/// Fit residuals in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFitStats {
    pub mean_px: f64,
    pub max_px: f64,
    pub samples: usize,
}

/// Least-squares affine approximation of a world → NDC map over `bounds`.
pub fn fit_affine<F, R>(
    sampler: F,
    bounds: &Aabb,
    width: usize,
    height: usize,
    options: &AffineFitOptions,
    rng: &mut R,
) -> Result<(AffineCamera, AffineFitStats)>
where
    F: Fn(&Vector3<f64>) -> Result<Vector2<f64>>,
    R: Rng + ?Sized,
{
    let n = options.sample_count();
    if n < 12 {
        return Err(Error::Fit(format!("need at least 12 samples, got {n}")));
    }
    let mut points = Vec::with_capacity(n);
    let g = options.grid_per_axis;
    let ext = bounds.extent();
    for i in 0..g {
        for j in 0..g {
            for k in 0..g {
                let t = |idx: usize| if g > 1 { idx as f64 / (g - 1) as f64 } else { 0.5 };
                points.push(bounds.min + Vector3::new(t(i) * ext.x, t(j) * ext.y, t(k) * ext.z));
            }
        }
    }
    for _ in 0..options.random_samples {
        points.push(
            bounds.min
                + Vector3::new(
                    rng.random::<f64>() * ext.x,
                    rng.random::<f64>() * ext.y,
                    rng.random::<f64>() * ext.z,
                ),
        );
    }
    let targets = points
        .iter()
        .map(&sampler)
        .collect::<Result<Vec<_>>>()?;

    // Normal equations, centered for conditioning.
    let center = bounds.center();
    let mut ata = Matrix4::<f64>::zeros();
    let mut atu = Vector4::<f64>::zeros();
    let mut atv = Vector4::<f64>::zeros();
    for (p, t) in points.iter().zip(&targets) {
        let d = p - center;
        let row = Vector4::new(d.x, d.y, d.z, 1.0);
        ata += row * row.transpose();
        atu += row * t.x;
        atv += row * t.y;
    }
    let max_diag = ata.diagonal().max();
    let chol = ata
        .cholesky()
        .ok_or_else(|| Error::Fit("rank-deficient normal equations".into()))?;
    let min_pivot = chol.l().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if !(min_pivot * min_pivot > 1e-12 * max_diag) {
        return Err(Error::Fit("rank-deficient normal equations".into()));
    }
    let cu = chol.solve(&atu);
    let cv = chol.solve(&atv);
    let linear = Matrix2x3::new(cu[0], cu[1], cu[2], cv[0], cv[1], cv[2]);
    let offset = Vector2::new(cu[3], cv[3]) - linear * center;
    let cam = AffineCamera::new(linear, offset, width, height, CameraKind::Satellite);

    let half = Vector2::new(0.5 * width as f64, 0.5 * height as f64);
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    for (p, t) in points.iter().zip(&targets) {
        let r = (cam.project(p) - t).component_mul(&half).norm();
        sum += r;
        max = max.max(r);
    }
    Ok((
        cam,
        AffineFitStats {
            mean_px: sum / n as f64,
            max_px: max,
            samples: n,
        },
    ))
}

/// The exact world → NDC chain of an RPC image of size `width × height`.
pub fn rpc_ndc_sampler<'a>(
    rpc: &'a RpcModel,
    frame: &'a WorldFrame,
    width: usize,
    height: usize,
) -> impl Fn(&Vector3<f64>) -> Result<Vector2<f64>> + 'a {
    move |x| {
        let geo = frame.world_to_geodetic(x);
        let (row, col) = rpc.project(&geo)?;
        Ok(Vector2::new(
            2.0 * (col + 0.5) / width as f64 - 1.0,
            2.0 * (row + 0.5) / height as f64 - 1.0,
        ))
    }
}
