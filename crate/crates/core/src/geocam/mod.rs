//! Sensor models and scene geometry.
//!
//! The full image formation chain is world → UTM → geodetic → RPC →
//! row/col → NDC. Training never evaluates it directly: each image gets a
//! per-scene affine approximation ([`AffineCamera`]) fitted by
//! [`fit_affine`]. The sun is handled by the same camera type.

mod camera;
mod fit;
mod frame;
mod rpc;
mod utm;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use camera::{
    build_sun_camera, homologous, localization_system, localize, orthographic_camera, AffineCamera, CameraKind,
    PixelProjection,
};
pub use fit::{fit_affine, rpc_ndc_sampler, AffineFitOptions, AffineFitStats};
pub use frame::WorldFrame;
pub use rpc::{rpc_terms, Normalization, RpcModel, RPC_TERMS};
pub use utm::{geodetic_from_utm, utm_from_geodetic, utm_from_geodetic_in_zone, UtmPoint, UtmZone};

/// Longitude/latitude in degrees, altitude in meters above the ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPoint {
    pub lon: f64,
    pub lat: f64,
    pub alt: f64,
}

impl GeodeticPoint {
    pub fn new(lon: f64, lat: f64, alt: f64) -> Self {
        Self { lon, lat, alt }
    }
}

/// Sun position: azimuth clockwise from north, elevation above the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SunDirection {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl SunDirection {
    pub fn new(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self {
            azimuth_deg,
            elevation_deg,
        }
    }

    /// Unit east-north-up vector pointing from the scene toward the sun.
    pub fn to_sun(&self) -> Vector3<f64> {
        direction_from_angles(self.azimuth_deg, self.elevation_deg)
    }
}

/// Unit ENU vector for an azimuth (clockwise from north) and elevation.
pub fn direction_from_angles(azimuth_deg: f64, elevation_deg: f64) -> Vector3<f64> {
    let (saz, caz) = azimuth_deg.to_radians().sin_cos();
    let (sel, cel) = elevation_deg.to_radians().sin_cos();
    Vector3::new(saz * cel, caz * cel, sel)
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self { min, max }
    }

    pub fn center(&self) -> Vector3<f64> {
        0.5 * (self.min + self.max)
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let mut out = [Vector3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            *c = Vector3::new(
                if i & 1 == 0 { self.min.x } else { self.max.x },
                if i & 2 == 0 { self.min.y } else { self.max.y },
                if i & 4 == 0 { self.min.z } else { self.max.z },
            );
        }
        out
    }
}
