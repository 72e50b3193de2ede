use nalgebra::Vector3;

use crate::geocam::{Aabb, GeodeticPoint, RpcModel, WorldFrame};
use crate::Result;

const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;

fn ecef(p: &GeodeticPoint) -> Vector3<f64> {
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let (sl, cl) = p.lat.to_radians().sin_cos();
    let (so, co) = p.lon.to_radians().sin_cos();
    let n = WGS84_A / (1.0 - e2 * sl * sl).sqrt();
    Vector3::new((n + p.alt) * cl * co, (n + p.alt) * cl * so, (n * (1.0 - e2) + p.alt) * sl)
}

/// Linear pushbroom sensor on a straight orbit: perspective across track,
/// one image row per `gsd` meters of travel along track.
#[derive(Debug, Clone, PartialEq)]
pub struct PushbroomSensor {
    position: Vector3<f64>,
    look: Vector3<f64>,
    along: Vector3<f64>,
    across: Vector3<f64>,
    focal_px: f64,
    row_gsd: f64,
    center_row: f64,
    center_col: f64,
}

impl PushbroomSensor {
    /// Sensor at `orbit_altitude` meters viewing `target` from `off_nadir_deg`
    /// at azimuth `azimuth_deg`, with `gsd` meters per pixel at the target.
    pub fn new(
        target: &GeodeticPoint,
        orbit_altitude: f64,
        off_nadir_deg: f64,
        azimuth_deg: f64,
        gsd: f64,
        width: usize,
        height: usize,
    ) -> Self {
        let p0 = ecef(target);
        let (sl, cl) = target.lat.to_radians().sin_cos();
        let (so, co) = target.lon.to_radians().sin_cos();
        let east = Vector3::new(-so, co, 0.0);
        let north = Vector3::new(-sl * co, -sl * so, cl);
        let up = Vector3::new(cl * co, cl * so, sl);
        let (st, ct) = off_nadir_deg.to_radians().sin_cos();
        let (sa, ca) = azimuth_deg.to_radians().sin_cos();
        let toward = east * (st * sa) + north * (st * ca) + up * ct;
        let range = orbit_altitude / ct;
        let position = p0 + toward * range;
        let look = -toward;
        let along = (north - look * north.dot(&look)).normalize();
        let across = along.cross(&look);
        Self {
            position,
            look,
            along,
            across,
            focal_px: range / gsd,
            row_gsd: gsd,
            center_row: 0.5 * height as f64 - 0.5,
            center_col: 0.5 * width as f64 - 0.5,
        }
    }

    /// `(row, col)` of a ground point; integer values are pixel centers.
    pub fn project(&self, p: &GeodeticPoint) -> (f64, f64) {
        let d = ecef(p) - self.position;
        let row = self.center_row - d.dot(&self.along) / self.row_gsd;
        let col = self.center_col + self.focal_px * d.dot(&self.across) / d.dot(&self.look);
        (row, col)
    }

    /// Cubic RPC fitted to this sensor over a `n³` grid spanning `bounds`
    /// (world units).
    pub fn fit_rpc(&self, frame: &WorldFrame, bounds: &Aabb, n: usize) -> Result<RpcModel> {
        let ext = bounds.extent();
        let mut samples = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let t = Vector3::new(i as f64, j as f64, k as f64) / (n - 1) as f64;
                    let g = frame.world_to_geodetic(&(bounds.min + ext.component_mul(&t)));
                    let (row, col) = self.project(&g);
                    samples.push((g, row, col));
                }
            }
        }
        RpcModel::fit_polynomial(&samples)
    }
}
