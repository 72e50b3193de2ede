//! World frame: a uniformly rescaled and recentered UTM frame.
//!
//! `utm = scale * world + offset`, east-north-up aligned, so the scene box
//! fits in `[-1, 1]^3`. The elevation functional maps world points to
//! altitude in meters: `elevation(x) = <gradient, x> + elevation_offset`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::utm::{geodetic_from_utm, utm_from_geodetic_in_zone, UtmPoint, UtmZone};
use super::{Aabb, GeodeticPoint};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldFrame {
    /// Meters per world unit.
    pub scale: f64,
    /// UTM easting, northing and altitude of the world origin.
    pub offset: [f64; 3],
    pub zone: UtmZone,
}

impl WorldFrame {
    /// Frame centered on `utm_bbox` (easting, northing, altitude in meters)
    /// with the largest half-extent mapped to one world unit.
    pub fn from_utm_bbox(utm_bbox: &Aabb, zone: UtmZone) -> Result<Self> {
        let ext = utm_bbox.max - utm_bbox.min;
        if !(ext.min() > 0.0) || !ext.iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!(
                "degenerate scene bounding box {:?} .. {:?}",
                utm_bbox.min, utm_bbox.max
            )));
        }
        let center = utm_bbox.center();
        Ok(Self {
            scale: 0.5 * ext.max(),
            offset: [center.x, center.y, center.z],
            zone,
        })
    }

    pub fn offset(&self) -> Vector3<f64> {
        Vector3::from(self.offset)
    }

    pub fn world_to_utm(&self, x: &Vector3<f64>) -> Vector3<f64> {
        x * self.scale + self.offset()
    }

    pub fn utm_to_world(&self, u: &Vector3<f64>) -> Vector3<f64> {
        (u - self.offset()) / self.scale
    }

    pub fn world_to_geodetic(&self, x: &Vector3<f64>) -> GeodeticPoint {
        let u = self.world_to_utm(x);
        geodetic_from_utm(
            &UtmPoint {
                easting: u.x,
                northing: u.y,
                zone: self.zone,
            },
            u.z,
        )
    }

    pub fn geodetic_to_world(&self, p: &GeodeticPoint) -> Result<Vector3<f64>> {
        let u = utm_from_geodetic_in_zone(p, self.zone)?;
        Ok(self.utm_to_world(&Vector3::new(u.easting, u.northing, p.alt)))
    }

    /// Gradient of the elevation functional (meters per world unit).
    pub fn elevation_gradient(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.scale)
    }

    /// Altitude of the world origin in meters.
    pub fn elevation_offset(&self) -> f64 {
        self.offset[2]
    }

    #[inline]
    pub fn elevation(&self, x: &Vector3<f64>) -> f64 {
        self.scale * x.z + self.offset[2]
    }

    /// World z of a given altitude.
    pub fn altitude_to_world_z(&self, h: f64) -> f64 {
        (h - self.offset[2]) / self.scale
    }

    pub fn utm_box_to_world(&self, b: &Aabb) -> Aabb {
        Aabb::new(self.utm_to_world(&b.min), self.utm_to_world(&b.max))
    }
}
