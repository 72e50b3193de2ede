//! Analytic ray-cast renderer of synthetic scenes, used as ground truth.

use nalgebra::{Vector2, Vector3};

use super::scene::{surface_albedo, SyntheticScene};
use crate::geocam::{localize, AffineCamera, SunDirection, WorldFrame};
use crate::raster::Raster;
use crate::Result;

/// Closest surface hit along a ray, in UTM meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    /// 0 for the ground, `1 + 2·box` for a roof, `2 + 2·box` for a wall.
    pub face: usize,
}

/// Slab intersection of a ray with an axis-aligned box. Returns the entry
/// distance and the entry normal.
fn ray_box(origin: &Vector3<f64>, dir: &Vector3<f64>, min: &Vector3<f64>, max: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut normal = Vector3::zeros();
    for axis in 0..3 {
        let (o, d) = (origin[axis], dir[axis]);
        if d.abs() < 1e-15 {
            if o < min[axis] || o > max[axis] {
                return None;
            }
            continue;
        }
        let t1 = (min[axis] - o) / d;
        let t2 = (max[axis] - o) / d;
        let (ta, tb, sign) = if t1 < t2 { (t1, t2, -1.0) } else { (t2, t1, 1.0) };
        if ta > t_near {
            t_near = ta;
            normal = Vector3::zeros();
            normal[axis] = sign;
        }
        t_far = t_far.min(tb);
        if t_near > t_far {
            return None;
        }
    }
    if t_far < 0.0 {
        return None;
    }
    Some((t_near, normal))
}

impl SyntheticScene {
    /// First surface hit with `t ≥ t_min` along `origin + t·dir`.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t_min: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        if dir.z.abs() > 1e-15 {
            let t = (self.ground_altitude - origin.z) / dir.z;
            let p = origin + dir * t;
            let inside = p.x >= self.bbox.min.x && p.x <= self.bbox.max.x && p.y >= self.bbox.min.y && p.y <= self.bbox.max.y;
            if t >= t_min && inside {
                best = Some(Hit {
                    t,
                    point: p,
                    normal: Vector3::z(),
                    face: 0,
                });
            }
        }
        for (i, b) in self.boxes.iter().enumerate() {
            let (min, max) = (Vector3::from(b.min), Vector3::from(b.max));
            if let Some((t, n)) = ray_box(origin, dir, &min, &max) {
                if t >= t_min && best.is_none_or(|h| t < h.t) {
                    let face = if n.z > 0.5 { 1 + 2 * i } else { 2 + 2 * i };
                    best = Some(Hit {
                        t,
                        point: origin + dir * t,
                        normal: n,
                        face,
                    });
                }
            }
        }
        best
    }

    /// True when the ray from surface point `p` toward `dir` hits a box.
    pub fn occluded(&self, p: &Vector3<f64>, normal: &Vector3<f64>, dir: &Vector3<f64>) -> bool {
        if normal.dot(dir) <= 0.0 {
            // Facing away from the light.
            return true;
        }
        let origin = p + normal * 1e-6;
        self.boxes.iter().any(|b| {
            ray_box(&origin, dir, &Vector3::from(b.min), &Vector3::from(b.max)).is_some_and(|(t, _)| t > 1e-9)
        })
    }

    /// Top of the scene box, used as the ray start altitude.
    fn ray_start_altitude(&self) -> f64 {
        self.bbox.max.z + 1.0
    }

    /// Hit of the camera ray through NDC point `u`.
    pub fn cast(&self, cam: &AffineCamera, frame: &WorldFrame, u: &Vector2<f64>) -> Result<Option<Hit>> {
        let start = localize(cam, frame, u, self.ray_start_altitude())?;
        let origin = frame.world_to_utm(&start);
        let dir = cam.view_direction()?;
        Ok(self.intersect(&origin, &dir, 0.0))
    }
}

/// Oracle rasters of one view.
#[derive(Debug, Clone)]
pub struct OracleRender {
    /// Shaded, gain-adjusted image (supersampled).
    pub image: Raster,
    /// Pure albedo image (supersampled).
    pub albedo: Raster,
    /// Surface altitude at pixel centers; NaN where the ray misses.
    pub elevation: Raster,
    /// Shadow flag at pixel centers.
    pub shadow: Vec<bool>,
    pub hit: Vec<bool>,
}

/// Appearance of one acquisition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleAppearance {
    pub gain: [f64; 3],
    pub ambient: [f64; 3],
}

impl Default for OracleAppearance {
    fn default() -> Self {
        Self {
            gain: [1.0; 3],
            ambient: [0.3; 3],
        }
    }
}

/// Renders `scene` through `cam` lit by `sun`: flat Lambertian albedo,
/// multiplied by the ambient level where occluded from the sun, then by the
/// per-channel gain. Rays that miss the scene are black.
pub fn oracle_render(
    scene: &SyntheticScene,
    frame: &WorldFrame,
    cam: &AffineCamera,
    sun: &SunDirection,
    appearance: &OracleAppearance,
    supersample: usize,
) -> Result<OracleRender> {
    let (w, h) = (cam.width, cam.height);
    let ss = supersample.max(1);
    let to_sun = sun.to_sun();
    let mut image = Raster::new(w, h, 3);
    let mut albedo_img = Raster::new(w, h, 3);
    let mut elevation = Raster::filled(w, h, 1, f64::NAN);
    let mut shadow = vec![false; w * h];
    let mut hit = vec![false; w * h];
    let norm = 1.0 / (ss * ss) as f64;
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            let center = cam.pixel_center_ndc(row, col);
            if let Some(hc) = scene.cast(cam, frame, &center)? {
                hit[i] = true;
                elevation.set(row, col, 0, hc.point.z);
                shadow[i] = scene.occluded(&hc.point, &hc.normal, &to_sun);
            }
            let mut acc = [0.0; 3];
            let mut acc_albedo = [0.0; 3];
            for sy in 0..ss {
                for sx in 0..ss {
                    let px = Vector2::new(
                        col as f64 + (sx as f64 + 0.5) / ss as f64,
                        row as f64 + (sy as f64 + 0.5) / ss as f64,
                    );
                    let u = cam.pixel_to_ndc(&px);
                    if let Some(hs) = scene.cast(cam, frame, &u)? {
                        let a = surface_albedo(scene, hs.face, &hs.point);
                        let lit = !scene.occluded(&hs.point, &hs.normal, &to_sun);
                        for c in 0..3 {
                            let light = if lit { 1.0 } else { appearance.ambient[c] };
                            acc[c] += appearance.gain[c] * a[c] * light;
                            acc_albedo[c] += a[c];
                        }
                    }
                }
            }
            let p = image.pixel_mut(row, col);
            for c in 0..3 {
                p[c] = acc[c] * norm;
            }
            let p = albedo_img.pixel_mut(row, col);
            for c in 0..3 {
                p[c] = acc_albedo[c] * norm;
            }
        }
    }
    Ok(OracleRender {
        image,
        albedo: albedo_img,
        elevation,
        shadow,
        hit,
    })
}

/// Surface altitude at the pixel centers of `cam`; NaN where the ray misses.
pub fn oracle_elevation(scene: &SyntheticScene, frame: &WorldFrame, cam: &AffineCamera) -> Result<Raster> {
    let mut out = Raster::filled(cam.width, cam.height, 1, f64::NAN);
    for row in 0..cam.height {
        for col in 0..cam.width {
            if let Some(hit) = scene.cast(cam, frame, &cam.pixel_center_ndc(row, col))? {
                out.set(row, col, 0, hit.point.z);
            }
        }
    }
    Ok(out)
}

/// Number of cameras seeing the surface point behind each pixel of `grid`
/// (unoccluded and inside the image).
pub fn visibility_counts(
    scene: &SyntheticScene,
    frame: &WorldFrame,
    cameras: &[AffineCamera],
    grid: &AffineCamera,
) -> Result<Vec<u32>> {
    let mut out = vec![0; grid.width * grid.height];
    let dirs: Vec<Vector3<f64>> = cameras
        .iter()
        .map(|c| c.view_direction().map(|d| -d))
        .collect::<Result<_>>()?;
    for row in 0..grid.height {
        for col in 0..grid.width {
            let Some(hit) = scene.cast(grid, frame, &grid.pixel_center_ndc(row, col))? else {
                continue;
            };
            let x = frame.utm_to_world(&hit.point);
            out[row * grid.width + col] = cameras
                .iter()
                .zip(&dirs)
                .filter(|(cam, toward)| {
                    let p = cam.ndc_to_pixel(&cam.project(&x));
                    let inside = p.x >= 0.0 && p.y >= 0.0 && p.x <= cam.width as f64 && p.y <= cam.height as f64;
                    inside && !scene.occluded(&hit.point, &hit.normal, toward)
                })
                .count() as u32;
        }
    }
    Ok(out)
}
