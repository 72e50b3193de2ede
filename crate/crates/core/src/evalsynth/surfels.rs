use nalgebra::Vector3;

use super::scene::{surface_albedo, SyntheticScene};
use crate::geocam::WorldFrame;
use crate::splat::{logit, Gaussian};

/// Thickness of a surfel along its normal, in meters.
const THICKNESS: f64 = 0.02;

/// Dense opaque flat primitives tiling every visible surface of `scene`
/// (ground outside the boxes, roofs and walls) at `spacing` meters.
pub fn geometry_primitives(scene: &SyntheticScene, frame: &WorldFrame, spacing: f64, opacity: f64) -> Vec<Gaussian> {
    let mut out = Vec::new();
    let sigma = 0.6 * spacing;
    let logit_a = logit(opacity);
    let mut emit = |p: Vector3<f64>, thin_axis: usize, face: usize| {
        let x = frame.utm_to_world(&p);
        let mut s = [sigma; 3];
        s[thin_axis] = THICKNESS;
        out.push(Gaussian {
            mean: [x.x, x.y, x.z],
            log_scale: s.map(|v| (v / frame.scale).ln()),
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: logit_a,
            albedo: surface_albedo(scene, face, &p),
        });
    };
    let steps = |lo: f64, hi: f64| {
        let n = ((hi - lo) / spacing).round().max(1.0) as usize;
        let d = (hi - lo) / n as f64;
        (0..n).map(move |i| lo + (i as f64 + 0.5) * d)
    };
    let bb = &scene.bbox;
    let g = scene.ground_altitude;
    for y in steps(bb.min.y, bb.max.y) {
        for x in steps(bb.min.x, bb.max.x) {
            let under = scene.boxes.iter().any(|b| x > b.min[0] && x < b.max[0] && y > b.min[1] && y < b.max[1]);
            if !under {
                emit(Vector3::new(x, y, g), 2, 0);
            }
        }
    }
    for (i, b) in scene.boxes.iter().enumerate() {
        for y in steps(b.min[1], b.max[1]) {
            for x in steps(b.min[0], b.max[0]) {
                emit(Vector3::new(x, y, b.max[2]), 2, 1 + 2 * i);
            }
        }
        for z in steps(b.min[2], b.max[2]) {
            for x in steps(b.min[0], b.max[0]) {
                emit(Vector3::new(x, b.min[1], z), 1, 2 + 2 * i);
                emit(Vector3::new(x, b.max[1], z), 1, 2 + 2 * i);
            }
            for y in steps(b.min[1], b.max[1]) {
                emit(Vector3::new(b.min[0], y, z), 0, 2 + 2 * i);
                emit(Vector3::new(b.max[0], y, z), 0, 2 + 2 * i);
            }
        }
    }
    out
}
