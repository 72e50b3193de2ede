use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{Aabb, SunDirection, WorldFrame};
use crate::raster::Raster;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraKind {
    Satellite,
    Sun,
}

/// Affine map from world space to NDC: `u = A x + a`.
///
/// NDC spans `[-1, 1]` across the image: `u.x = -1` is the left edge of the
/// first column and `u.y = -1` the top edge of the first row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineCamera {
    pub linear: [[f64; 3]; 2],
    pub offset: [f64; 2],
    pub width: usize,
    pub height: usize,
    pub kind: CameraKind,
}

/// The same camera expressed in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelProjection {
    pub linear: Matrix2x3<f64>,
    pub offset: Vector2<f64>,
}

impl PixelProjection {
    #[inline]
    pub fn project(&self, x: &Vector3<f64>) -> Vector2<f64> {
        self.linear * x + self.offset
    }
}

impl AffineCamera {
    pub fn new(
        linear: Matrix2x3<f64>,
        offset: Vector2<f64>,
        width: usize,
        height: usize,
        kind: CameraKind,
    ) -> Self {
        Self {
            linear: [
                [linear[(0, 0)], linear[(0, 1)], linear[(0, 2)]],
                [linear[(1, 0)], linear[(1, 1)], linear[(1, 2)]],
            ],
            offset: [offset.x, offset.y],
            width,
            height,
            kind,
        }
    }

    pub fn linear(&self) -> Matrix2x3<f64> {
        let l = &self.linear;
        Matrix2x3::new(l[0][0], l[0][1], l[0][2], l[1][0], l[1][1], l[1][2])
    }

    pub fn offset(&self) -> Vector2<f64> {
        Vector2::from(self.offset)
    }

    /// `A x + a`.
    #[inline]
    pub fn project(&self, x: &Vector3<f64>) -> Vector2<f64> {
        self.linear() * x + self.offset()
    }

    pub fn ndc_to_pixel(&self, u: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(
            (u.x + 1.0) * 0.5 * self.width as f64,
            (u.y + 1.0) * 0.5 * self.height as f64,
        )
    }

    pub fn pixel_to_ndc(&self, p: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(
            2.0 * p.x / self.width as f64 - 1.0,
            2.0 * p.y / self.height as f64 - 1.0,
        )
    }

    /// NDC of the center of pixel `(row, col)`.
    pub fn pixel_center_ndc(&self, row: usize, col: usize) -> Vector2<f64> {
        self.pixel_to_ndc(&Vector2::new(col as f64 + 0.5, row as f64 + 0.5))
    }

    pub fn pixel_projection(&self) -> PixelProjection {
        let sx = 0.5 * self.width as f64;
        let sy = 0.5 * self.height as f64;
        let mut linear = self.linear();
        linear.row_mut(0).scale_mut(sx);
        linear.row_mut(1).scale_mut(sy);
        let a = self.offset();
        PixelProjection {
            linear,
            offset: Vector2::new((a.x + 1.0) * sx, (a.y + 1.0) * sy),
        }
    }

    /// Unit kernel vector of the linear part, oriented from sky to ground.
    pub fn view_direction(&self) -> Result<Vector3<f64>> {
        let a = self.linear();
        let r0: Vector3<f64> = a.row(0).transpose();
        let r1: Vector3<f64> = a.row(1).transpose();
        let k = r0.cross(&r1);
        let scale = r0.norm() * r1.norm();
        if !(k.norm() > 1e-12 * scale) || scale == 0.0 {
            return Err(Error::DegenerateCamera("linear part has rank < 2".into()));
        }
        let k = k.normalize();
        if k.z.abs() < 1e-12 {
            return Err(Error::DegenerateCamera(
                "view direction is horizontal".into(),
            ));
        }
        Ok(if k.z > 0.0 { -k } else { k })
    }

    /// Approximate ground sampling distance in meters per pixel.
    pub fn ground_sampling_distance(&self, frame: &WorldFrame) -> f64 {
        let p = self.pixel_projection().linear;
        let det = p[(0, 0)] * p[(1, 1)] - p[(0, 1)] * p[(1, 0)];
        frame.scale / det.abs().sqrt()
    }

    /// Camera with a different linear part and offset, same image grid.
    pub fn with_affine(&self, linear: Matrix2x3<f64>, offset: Vector2<f64>) -> Self {
        Self::new(linear, offset, self.width, self.height, self.kind)
    }
}

/// Inverse of the system `[A; g] x = (u, h) - (a, e0)` used by [`localize`],
/// returned with the right-hand-side shift `(a, e0)`.
pub fn localization_system(cam: &AffineCamera, frame: &WorldFrame) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    let a = cam.linear();
    let g = frame.elevation_gradient();
    let m = Matrix3::new(
        a[(0, 0)],
        a[(0, 1)],
        a[(0, 2)],
        a[(1, 0)],
        a[(1, 1)],
        a[(1, 2)],
        g.x,
        g.y,
        g.z,
    );
    let scale = a.row(0).norm() * a.row(1).norm() * g.norm();
    let det = m.determinant();
    if !(det.abs() > 1e-12 * scale) {
        return Err(Error::Localization(format!(
            "camera views parallel to level sets (det {det:e})"
        )));
    }
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::Localization("singular system".into()))?;
    Ok((inv, Vector3::new(cam.offset[0], cam.offset[1], frame.elevation_offset())))
}

/// World point `x` with `A x + a = u` and `elevation(x) = h`.
pub fn localize(
    cam: &AffineCamera,
    frame: &WorldFrame,
    u: &Vector2<f64>,
    h: f64,
) -> Result<Vector3<f64>> {
    let (inv, shift) = localization_system(cam, frame)?;
    Ok(inv * (Vector3::new(u.x, u.y, h) - shift))
}

/// Pixel of `cam_b` corresponding to NDC point `u` of `cam_a`, using the
/// elevation raster of `cam_a` (bilinear, clamp-to-edge).
pub fn homologous(
    cam_a: &AffineCamera,
    cam_b: &AffineCamera,
    elev_a: &Raster,
    frame: &WorldFrame,
    u: &Vector2<f64>,
) -> Result<Vector2<f64>> {
    let p = cam_a.ndc_to_pixel(u);
    let h = elev_a.sample(p.x, p.y, 0);
    let x = localize(cam_a, frame, u, h)?;
    Ok(cam_b.project(&x))
}

/// Orthographic camera looking along `-toward_viewer`, covering `bounds`
/// (world units) at `gsd` meters per pixel with `margin` pixels on each side.
pub fn orthographic_camera(
    toward_viewer: &Vector3<f64>,
    frame: &WorldFrame,
    bounds: &Aabb,
    gsd: f64,
    margin: usize,
    kind: CameraKind,
) -> AffineCamera {
    let s = toward_viewer.normalize();
    let horiz = (s.x * s.x + s.y * s.y).sqrt();
    let e1 = if horiz > 1e-12 {
        Vector3::new(s.y / horiz, -s.x / horiz, 0.0)
    } else {
        Vector3::new(1.0, 0.0, 0.0)
    };
    // For a nadir view e1 × s points south, so row 0 is the northern edge.
    let e2 = e1.cross(&s);
    let k = frame.scale / gsd;
    let linear_px = Matrix2x3::new(e1.x, e1.y, e1.z, e2.x, e2.y, e2.z) * k;

    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    for c in bounds.corners() {
        let p = linear_px * c;
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    }
    let m = margin as f64;
    let width = ((hi.x - lo.x).ceil() as usize + 2 * margin).max(1);
    let height = ((hi.y - lo.y).ceil() as usize + 2 * margin).max(1);
    let offset_px = Vector2::new(m - lo.x, m - lo.y);

    let sx = 0.5 * width as f64;
    let sy = 0.5 * height as f64;
    let mut linear = linear_px;
    linear.row_mut(0).scale_mut(1.0 / sx);
    linear.row_mut(1).scale_mut(1.0 / sy);
    let offset = Vector2::new(offset_px.x / sx - 1.0, offset_px.y / sy - 1.0);
    AffineCamera::new(linear, offset, width, height, kind)
}

/// Affine camera aligned with a directional sun, covering `bounds`.
pub fn build_sun_camera(
    sun: &SunDirection,
    frame: &WorldFrame,
    bounds: &Aabb,
    gsd: f64,
) -> Result<AffineCamera> {
    if !(sun.elevation_deg > 0.0 && sun.elevation_deg <= 90.0) {
        return Err(Error::Config(format!(
            "sun elevation {}° must lie in (0, 90]",
            sun.elevation_deg
        )));
    }
    Ok(orthographic_camera(
        &sun.to_sun(),
        frame,
        bounds,
        gsd,
        SUN_CAMERA_MARGIN,
        CameraKind::Sun,
    ))
}

pub const SUN_CAMERA_MARGIN: usize = 8;
