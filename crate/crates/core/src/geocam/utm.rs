//! Transverse Mercator on WGS84 with sixth-order Krüger series.
//!
//! Zones follow the regular 6° grid; the Norway/Svalbard exceptions are not
//! applied.

use serde::{Deserialize, Serialize};

use super::GeodeticPoint;
use crate::{Error, Result};

const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;
const K0: f64 = 0.9996;
const FALSE_EASTING: f64 = 500_000.0;
const FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;
const MAX_LATITUDE: f64 = 84.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtmZone {
    pub number: u8,
    pub north: bool,
}

impl UtmZone {
    pub fn for_point(p: &GeodeticPoint) -> Self {
        let lon = if p.lon >= 180.0 { p.lon - 360.0 } else { p.lon };
        let number = (((lon + 180.0) / 6.0).floor() as i32).clamp(0, 59) + 1;
        Self {
            number: number as u8,
            north: p.lat >= 0.0,
        }
    }

    pub fn central_meridian(&self) -> f64 {
        -183.0 + 6.0 * self.number as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtmPoint {
    pub easting: f64,
    pub northing: f64,
    pub zone: UtmZone,
}

struct Series {
    e: f64,
    a_rect: f64,
    alpha: [f64; 6],
    beta: [f64; 6],
}

fn series() -> Series {
    let f = WGS84_F;
    let n = f / (2.0 - f);
    let n2 = n * n;
    let n3 = n2 * n;
    let n4 = n3 * n;
    let n5 = n4 * n;
    let n6 = n5 * n;
    let a_rect = WGS84_A / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
    let alpha = [
        n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0
            + 7891.0 * n6 / 37800.0,
        13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0
            - 1983433.0 * n6 / 1935360.0,
        61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0
            + 167603.0 * n6 / 181440.0,
        49561.0 * n4 / 161280.0 - 179.0 * n5 / 168.0 + 6601661.0 * n6 / 7257600.0,
        34729.0 * n5 / 80640.0 - 3418889.0 * n6 / 1995840.0,
        212378941.0 * n6 / 319334400.0,
    ];
    let beta = [
        n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0 - 81.0 * n5 / 512.0
            + 96199.0 * n6 / 604800.0,
        n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0 + 46.0 * n5 / 105.0
            - 1118711.0 * n6 / 3870720.0,
        17.0 * n3 / 480.0 - 37.0 * n4 / 840.0 - 209.0 * n5 / 4480.0 + 5569.0 * n6 / 90720.0,
        4397.0 * n4 / 161280.0 - 11.0 * n5 / 504.0 - 830251.0 * n6 / 7257600.0,
        4583.0 * n5 / 161280.0 - 108847.0 * n6 / 3991680.0,
        20648693.0 * n6 / 638668800.0,
    ];
    Series {
        e: (f * (2.0 - f)).sqrt(),
        a_rect,
        alpha,
        beta,
    }
}

/// tan of the conformal latitude from tan of the geodetic latitude.
fn conformal_tan(tau: f64, e: f64) -> f64 {
    let sigma = (e * (e * tau / tau.hypot(1.0)).atanh()).sinh();
    tau * sigma.hypot(1.0) - sigma * tau.hypot(1.0)
}

/// Inverse of [`conformal_tan`] by Newton iteration.
fn geodetic_tan(tau_c: f64, e: f64) -> f64 {
    let e2m = 1.0 - e * e;
    let mut tau = tau_c;
    for _ in 0..8 {
        let tc = conformal_tan(tau, e);
        let d = (tau_c - tc) * (1.0 + e2m * tau * tau)
            / (e2m * tc.hypot(1.0) * tau.hypot(1.0));
        tau += d;
        if d.abs() < 1e-15 * tau.abs().max(1.0) {
            break;
        }
    }
    tau
}

/// Forward projection into the point's own zone.
pub fn utm_from_geodetic(p: &GeodeticPoint) -> Result<UtmPoint> {
    utm_from_geodetic_in_zone(p, UtmZone::for_point(p))
}

/// Forward projection into a fixed zone (points may lie outside its strip).
pub fn utm_from_geodetic_in_zone(p: &GeodeticPoint, zone: UtmZone) -> Result<UtmPoint> {
    if !(p.lat.abs() < MAX_LATITUDE) {
        return Err(Error::UnsupportedLatitude(p.lat));
    }
    let s = series();
    let phi = p.lat.to_radians();
    let mut dlon = p.lon - zone.central_meridian();
    if dlon > 180.0 {
        dlon -= 360.0;
    } else if dlon < -180.0 {
        dlon += 360.0;
    }
    let lam = dlon.to_radians();
    let tau_c = conformal_tan(phi.tan(), s.e);
    let xi_p = tau_c.atan2(lam.cos());
    let eta_p = (lam.sin() / tau_c.hypot(lam.cos())).asinh();
    let mut xi = xi_p;
    let mut eta = eta_p;
    for (j, a) in s.alpha.iter().enumerate() {
        let k = 2.0 * (j + 1) as f64;
        xi += a * (k * xi_p).sin() * (k * eta_p).cosh();
        eta += a * (k * xi_p).cos() * (k * eta_p).sinh();
    }
    let easting = FALSE_EASTING + K0 * s.a_rect * eta;
    let mut northing = K0 * s.a_rect * xi;
    if !zone.north {
        northing += FALSE_NORTHING_SOUTH;
    }
    Ok(UtmPoint {
        easting,
        northing,
        zone,
    })
}

/// Inverse projection; the altitude is passed through unchanged.
pub fn geodetic_from_utm(u: &UtmPoint, alt: f64) -> GeodeticPoint {
    let s = series();
    let northing = if u.zone.north {
        u.northing
    } else {
        u.northing - FALSE_NORTHING_SOUTH
    };
    let xi = northing / (K0 * s.a_rect);
    let eta = (u.easting - FALSE_EASTING) / (K0 * s.a_rect);
    let mut xi_p = xi;
    let mut eta_p = eta;
    for (j, b) in s.beta.iter().enumerate() {
        let k = 2.0 * (j + 1) as f64;
        xi_p -= b * (k * xi).sin() * (k * eta).cosh();
        eta_p -= b * (k * xi).cos() * (k * eta).sinh();
    }
    let tau_c = xi_p.sin() / eta_p.sinh().hypot(xi_p.cos());
    let lam = eta_p.sinh().atan2(xi_p.cos());
    let phi = geodetic_tan(tau_c, s.e).atan();
    GeodeticPoint {
        lon: u.zone.central_meridian() + lam.to_degrees(),
        lat: phi.to_degrees(),
        alt,
    }
}
