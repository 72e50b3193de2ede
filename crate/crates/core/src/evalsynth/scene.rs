use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geocam::{
    orthographic_camera, utm_from_geodetic, Aabb, AffineCamera, CameraKind, GeodeticPoint, RpcModel, SunDirection,
    UtmZone, WorldFrame,
};
use crate::{Error, Result};

/// Axis-aligned box standing on the ground, in UTM meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub roof_albedo: [f64; 3],
    pub wall_albedo: [f64; 3],
}

impl SceneBox {
    pub fn height(&self) -> f64 {
        self.max[2] - self.min[2]
    }
}

/// Flat textured ground plus boxes. Coordinates are UTM easting, northing
/// and altitude; the ground covers the horizontal extent of `bbox` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub ground_altitude: f64,
    pub ground_albedo: [f64; 3],
    pub boxes: Vec<SceneBox>,
    pub bbox: Aabb,
    pub zone: UtmZone,
    /// Seed of the procedural texture.
    pub texture_seed: u64,
}

/// Parameters of [`generate_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub views: usize,
    pub boxes: usize,
    /// Side of the square ground footprint in meters.
    pub footprint: f64,
    pub ground_altitude: f64,
    pub box_height: (f64, f64),
    pub box_size: (f64, f64),
    pub gsd: f64,
    pub off_nadir_deg: (f64, f64),
    pub sun_elevation_deg: (f64, f64),
    pub sun_azimuth_deg: (f64, f64),
    pub gain: (f64, f64),
    pub ambient: (f64, f64),
    /// Longitude/latitude of the footprint center.
    pub center_lon: f64,
    pub center_lat: f64,
    /// Margin around the projected scene box in each image, in pixels.
    pub image_margin: usize,
    /// Sub-samples per pixel axis in the oracle images.
    pub supersample: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            views: 10,
            boxes: 3,
            footprint: 48.0,
            ground_altitude: 10.0,
            box_height: (5.0, 20.0),
            box_size: (8.0, 16.0),
            gsd: 0.5,
            off_nadir_deg: (5.0, 30.0),
            sun_elevation_deg: (30.0, 70.0),
            sun_azimuth_deg: (90.0, 270.0),
            gain: (0.85, 1.15),
            ambient: (0.2, 0.4),
            center_lon: -81.66,
            center_lat: 30.32,
            image_margin: 4,
            supersample: 2,
        }
    }
}

/// One synthetic acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticView {
    pub name: String,
    pub camera: AffineCamera,
    pub sun: SunDirection,
    /// Per-channel radiometric gain of the sensor.
    pub gain: [f64; 3],
    /// Ambient level inside shadows.
    pub ambient: [f64; 3],
    pub off_nadir_deg: f64,
    pub azimuth_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSetup {
    pub scene: SyntheticScene,
    pub frame: WorldFrame,
    pub views: Vec<SyntheticView>,
    pub spec: SceneSpec,
}

impl SyntheticSetup {
    /// Scene box in world coordinates.
    pub fn world_bounds(&self) -> Aabb {
        self.frame.utm_box_to_world(&self.scene.bbox)
    }
}

fn uniform(rng: &mut impl Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

/// Scene box extends this far below the ground and above the tallest box.
const VERTICAL_MARGIN: (f64, f64) = (4.0, 4.0);

/// Deterministic scene, cameras and suns from a spec.
pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticSetup> {
    if !(spec.footprint > 0.0 && spec.gsd > 0.0) || spec.views == 0 {
        return Err(Error::Config("scene footprint, gsd and view count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let center = utm_from_geodetic(&GeodeticPoint::new(spec.center_lon, spec.center_lat, 0.0))?;
    let half = 0.5 * spec.footprint;
    let (e0, n0) = (center.easting - half, center.northing - half);
    let g = spec.ground_altitude;

    let mut boxes: Vec<SceneBox> = Vec::new();
    let edge = 4.0;
    let mut attempts = 0;
    while boxes.len() < spec.boxes {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::Config("could not place the requested boxes".into()));
        }
        let sx = uniform(&mut rng, spec.box_size);
        let sy = uniform(&mut rng, spec.box_size);
        if sx + 2.0 * edge >= spec.footprint || sy + 2.0 * edge >= spec.footprint {
            return Err(Error::Config("boxes do not fit in the footprint".into()));
        }
        let x = e0 + edge + rng.random_range(0.0..spec.footprint - 2.0 * edge - sx);
        let y = n0 + edge + rng.random_range(0.0..spec.footprint - 2.0 * edge - sy);
        let h = uniform(&mut rng, spec.box_height);
        let gap = 3.0;
        let overlaps = boxes.iter().any(|b| {
            x < b.max[0] + gap && x + sx + gap > b.min[0] && y < b.max[1] + gap && y + sy + gap > b.min[1]
        });
        if overlaps {
            continue;
        }
        let roof: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.3..0.9));
        let wall = roof.map(|v| 0.75 * v);
        boxes.push(SceneBox {
            min: [x, y, g],
            max: [x + sx, y + sy, g + h],
            roof_albedo: roof,
            wall_albedo: wall,
        });
    }
    let top = g + spec.box_height.1.max(spec.box_height.0);
    let bbox = Aabb::new(
        Vector3::new(e0, n0, g - VERTICAL_MARGIN.0),
        Vector3::new(e0 + spec.footprint, n0 + spec.footprint, top + VERTICAL_MARGIN.1),
    );
    let scene = SyntheticScene {
        ground_altitude: g,
        ground_albedo: [0.42, 0.40, 0.34],
        boxes,
        bbox,
        zone: center.zone,
        texture_seed: spec.seed ^ 0x5eed_7e87,
    };
    let frame = WorldFrame::from_utm_bbox(&bbox, center.zone)?;
    let world_bounds = frame.utm_box_to_world(&bbox);

    let az0 = rng.random_range(0.0..360.0);
    let views = (0..spec.views)
        .map(|i| {
            let azimuth = (az0 + 360.0 * i as f64 / spec.views as f64 + rng.random_range(-10.0..10.0)).rem_euclid(360.0);
            let off_nadir = uniform(&mut rng, spec.off_nadir_deg);
            let (st, ct) = off_nadir.to_radians().sin_cos();
            let (sa, ca) = azimuth.to_radians().sin_cos();
            let toward = Vector3::new(st * sa, st * ca, ct);
            let camera = orthographic_camera(
                &toward,
                &frame,
                &world_bounds,
                spec.gsd,
                spec.image_margin,
                CameraKind::Satellite,
            );
            let sun = SunDirection::new(uniform(&mut rng, spec.sun_azimuth_deg), uniform(&mut rng, spec.sun_elevation_deg));
            let gain = std::array::from_fn(|_| uniform(&mut rng, spec.gain));
            let a = uniform(&mut rng, spec.ambient);
            let ambient = std::array::from_fn(|_| (a + rng.random_range(-0.03..0.03)).clamp(0.01, 0.99));
            SyntheticView {
                name: format!("view_{i:02}"),
                camera,
                sun,
                gain,
                ambient,
                off_nadir_deg: off_nadir,
                azimuth_deg: azimuth,
            }
        })
        .collect();
    Ok(SyntheticSetup {
        scene,
        frame,
        views,
        spec: spec.clone(),
    })
}

/// RPC with unit denominators reproducing an affine camera over `bounds`
/// (world units): fitted to a regular 7³ grid of ground points.
pub fn rpc_for_camera(cam: &AffineCamera, frame: &WorldFrame, bounds: &Aabb) -> Result<RpcModel> {
    let n = 7;
    let mut samples = Vec::with_capacity(n * n * n);
    let ext = bounds.extent();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let t = Vector3::new(i as f64, j as f64, k as f64) / (n - 1) as f64;
                let x = bounds.min + ext.component_mul(&t);
                let p = cam.ndc_to_pixel(&cam.project(&x));
                samples.push((frame.world_to_geodetic(&x), p.y - 0.5, p.x - 0.5));
            }
        }
    }
    RpcModel::fit_polynomial(&samples)
}

/// Procedural albedo. `face` is 0 for the ground, `1 + 2·box` for a roof and
/// `2 + 2·box` for a wall.
pub fn surface_albedo(scene: &SyntheticScene, face: usize, p: &Vector3<f64>) -> [f64; 3] {
    let local = Vector2::new(p.x - scene.bbox.min.x, p.y - scene.bbox.min.y);
    let seed = scene.texture_seed.wrapping_add(face as u64 * 0x9e37_79b9);
    let (base, cell, wave, period) = if face == 0 {
        (scene.ground_albedo, 4.0, 0.08, 6.3)
    } else {
        let b = &scene.boxes[(face - 1) / 2];
        let base = if face % 2 == 1 { b.roof_albedo } else { b.wall_albedo };
        let along = if face % 2 == 1 { local } else { Vector2::new(local.x + local.y, p.z) };
        return textured(base, &along, seed, 3.0, 0.06, 2.9);
    };
    textured(base, &local, seed, cell, wave, period)
}

fn textured(base: [f64; 3], q: &Vector2<f64>, seed: u64, cell: f64, wave: f64, period: f64) -> [f64; 3] {
    let ix = (q.x / cell).floor() as i64;
    let iy = (q.y / cell).floor() as i64;
    let tau = std::f64::consts::TAU;
    let s = (tau * q.x / period).sin() * (tau * q.y / (0.77 * period)).cos();
    // Finer octaves give texture down to about the pixel size.
    let fine = |size: f64, salt: u64| {
        let (fx, fy) = ((q.x / size).floor() as i64, (q.y / size).floor() as i64);
        hash_unit(seed ^ salt, fx, fy, 7) - 0.5
    };
    let detail = 0.16 * fine(1.3, 0x51) + 0.12 * fine(0.7, 0xa3);
    std::array::from_fn(|c| {
        let h = hash_unit(seed, ix, iy, c as u64) - 0.5;
        (base[c] + 0.25 * h + wave * s + detail).clamp(0.02, 0.98)
    })
}

/// Uniform value in `[0, 1)` from a splitmix64 hash of the inputs.
fn hash_unit(seed: u64, x: i64, y: i64, c: u64) -> f64 {
    let mut z = seed
        ^ (x as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (y as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f)
        ^ c.wrapping_mul(0x1656_67b1_9e37_79f9);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}
