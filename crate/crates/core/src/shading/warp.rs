use nalgebra::{Matrix2x3, Vector2, Vector3};

use crate::geocam::{localization_system, AffineCamera, WorldFrame};
use crate::raster::{BilinearTaps, Raster};
use crate::Result;

/// Per-pixel homologous lookup from camera A into camera B.
///
/// The sampling positions are fixed when the warp is built, so resampling is
/// linear in the target raster and [`Warp::scatter`] is its exact adjoint.
#[derive(Debug, Clone)]
pub struct Warp {
    pub width: usize,
    pub height: usize,
    /// Size of the raster being resampled (camera B).
    pub source_width: usize,
    pub source_height: usize,
    /// Continuous pixel position in B of every pixel center of A.
    pub positions: Vec<Vector2<f64>>,
    pub taps: Vec<BilinearTaps>,
    pub inside: Vec<bool>,
}

impl Warp {
    /// Builds `hom^{A,B}` at every pixel center of A from A's elevation render.
    pub fn homologous(cam_a: &AffineCamera, cam_b: &AffineCamera, elev_a: &Raster, frame: &WorldFrame) -> Result<Self> {
        assert_eq!(elev_a.width(), cam_a.width);
        assert_eq!(elev_a.height(), cam_a.height);
        let (inv, shift) = localization_system(cam_a, frame)?;
        let pb = cam_b.pixel_projection();
        // Pixel of B as an affine function of (u_x, u_y, h).
        let k: Matrix2x3<f64> = pb.linear * inv;
        let k0 = pb.offset - k * shift;
        let (w, h) = (cam_a.width, cam_a.height);
        let mut positions = Vec::with_capacity(w * h);
        let mut taps = Vec::with_capacity(w * h);
        let mut inside = Vec::with_capacity(w * h);
        for row in 0..h {
            for col in 0..w {
                let u = cam_a.pixel_center_ndc(row, col);
                let p = k * Vector3::new(u.x, u.y, elev_a.get(row, col, 0)) + k0;
                positions.push(p);
                taps.push(BilinearTaps::new(cam_b.width, cam_b.height, p.x, p.y));
                inside.push(p.x.is_finite() && p.y.is_finite() && BilinearTaps::in_bounds(cam_b.width, cam_b.height, p.x, p.y));
            }
        }
        Ok(Self {
            width: w,
            height: h,
            source_width: cam_b.width,
            source_height: cam_b.height,
            positions,
            taps,
            inside,
        })
    }

    /// Samples every channel of `src` (a raster of camera B) at the warp
    /// positions, giving a raster on A's grid.
    pub fn resample(&self, src: &Raster) -> Raster {
        assert_eq!((src.width(), src.height()), (self.source_width, self.source_height));
        let ch = src.channels();
        let mut out = Raster::new(self.width, self.height, ch);
        for (i, t) in self.taps.iter().enumerate() {
            let o = out.at_mut(i);
            for (&p, &w) in t.pixels.iter().zip(&t.weights) {
                let s = src.at(p);
                for c in 0..ch {
                    o[c] += w * s[c];
                }
            }
        }
        out
    }

    /// Adjoint of [`Warp::resample`]: spreads a gradient on A's grid back onto
    /// B's raster.
    pub fn scatter(&self, grad: &Raster) -> Raster {
        assert_eq!((grad.width(), grad.height()), (self.width, self.height));
        let ch = grad.channels();
        let mut out = Raster::new(self.source_width, self.source_height, ch);
        for (i, t) in self.taps.iter().enumerate() {
            let g = grad.at(i);
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (&p, &w) in t.pixels.iter().zip(&t.weights) {
                let o = out.at_mut(p);
                for c in 0..ch {
                    o[c] += w * g[c];
                }
            }
        }
        out
    }
}
