use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::geocam::{localize, orthographic_camera, Aabb, AffineCamera, CameraKind, UtmZone, WorldFrame};
use crate::raster::Raster;
use crate::splat::{render, Channels, Gaussian, RasterConfig};
use crate::{Error, Result};

/// Pixels with less accumulated opacity are exported as nodata.
pub const DSM_MIN_OPACITY: f64 = 0.1;

/// North-up altitude grid. Nodata cells hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct DsmRaster {
    pub values: Raster,
    /// Meters per pixel.
    pub gsd: f64,
    /// UTM easting/northing of the top-left corner of the first pixel.
    pub origin: [f64; 2],
    pub zone: UtmZone,
}

impl DsmRaster {
    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn valid_count(&self) -> usize {
        self.values.data().iter().filter(|v| v.is_finite()).count()
    }
}

/// Nadir camera whose pixels tile the horizontal extent of `bounds`.
pub fn dsm_camera(frame: &WorldFrame, bounds: &Aabb, gsd: f64) -> AffineCamera {
    orthographic_camera(&Vector3::z(), frame, bounds, gsd, 0, CameraKind::Satellite)
}

fn grid_origin(cam: &AffineCamera, frame: &WorldFrame) -> Result<[f64; 2]> {
    let corner = localize(cam, frame, &Vector2::new(-1.0, -1.0), frame.elevation_offset())?;
    let u = frame.world_to_utm(&corner);
    Ok([u.x, u.y])
}

impl DsmRaster {
    /// Wraps an altitude raster rendered through `dsm_camera`.
    pub fn from_camera(values: Raster, cam: &AffineCamera, frame: &WorldFrame, gsd: f64) -> Result<Self> {
        Ok(Self {
            origin: grid_origin(cam, frame)?,
            values,
            gsd,
            zone: frame.zone,
        })
    }
}

/// Alpha-normalized elevation render from a nadir view: `E / T` where
/// `T ≥ DSM_MIN_OPACITY`, nodata elsewhere.
pub fn extract_dsm(
    prims: &[Gaussian],
    frame: &WorldFrame,
    bounds: &Aabb,
    gsd: f64,
    cfg: &RasterConfig,
) -> Result<DsmRaster> {
    let cam = dsm_camera(frame, bounds, gsd);
    let t = render(prims, &cam, frame, cfg, Channels::Elevation)?.targets;
    let mut values = Raster::filled(cam.width, cam.height, 1, f64::NAN);
    for i in 0..values.pixel_count() {
        let op = t.opacity.at(i)[0];
        if op >= DSM_MIN_OPACITY {
            values.at_mut(i)[0] = t.elevation.at(i)[0] / op;
        }
    }
    DsmRaster::from_camera(values, &cam, frame, gsd)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaeReport {
    /// Mean absolute error in meters.
    pub mae: f64,
    /// Number of pixels used.
    pub count: usize,
    /// Used pixels over pixels selected by the mask (all pixels without one).
    pub coverage: f64,
}

/// Mean `|dsm - gt|` over pixels where both are finite and `mask` (if any)
/// is set.
pub fn mae(dsm: &Raster, gt: &Raster, mask: Option<&[bool]>) -> Result<MaeReport> {
    if dsm.width() != gt.width() || dsm.height() != gt.height() {
        return Err(Error::Evaluation(format!(
            "DSM is {}x{} but ground truth is {}x{}",
            dsm.width(),
            dsm.height(),
            gt.width(),
            gt.height()
        )));
    }
    if let Some(m) = mask {
        if m.len() != dsm.pixel_count() {
            return Err(Error::Evaluation("mask size differs from DSM".into()));
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut selected = 0usize;
    for i in 0..dsm.pixel_count() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        selected += 1;
        let (a, b) = (dsm.at(i)[0], gt.at(i)[0]);
        if a.is_finite() && b.is_finite() {
            sum += (a - b).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Evaluation("no valid pixels to compare".into()));
    }
    Ok(MaeReport {
        mae: sum / count as f64,
        count,
        coverage: count as f64 / selected as f64,
    })
}
