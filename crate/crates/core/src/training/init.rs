use std::collections::HashMap;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::geocam::{Aabb, WorldFrame};
use crate::splat::{logit, Gaussian};
use crate::{Error, Result};

/// Mean distance from each point to its nearest neighbour, via a hashed
/// cubic grid with cells of side `cell`.
pub fn mean_nearest_neighbor(points: &[Vector3<f64>], cell: f64) -> f64 {
    if points.len() < 2 {
        return f64::NAN;
    }
    let key = |p: &Vector3<f64>| [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64];
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let k = key(p);
        let mut best = f64::INFINITY;
        let mut ring = 1i64;
        loop {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if let Some(list) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            for &j in list {
                                if j != i {
                                    best = best.min((points[j] - p).norm());
                                }
                            }
                        }
                    }
                }
            }
            // Every point outside the searched block is at least `ring` cells away.
            if best <= ring as f64 * cell {
                break;
            }
            ring += 1;
        }
        total += best;
    }
    total / points.len() as f64
}

/// Uniform random unit quaternion.
pub fn random_rotation(rng: &mut impl Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-6 {
            return q.map(|v| v / n);
        }
    }
}

/// `round(density × volume)` primitives with white albedo, opacity
/// `opacity`, centers uniform in `bounds` (world units), random rotations and
/// isotropic scale equal to half the mean nearest-neighbour spacing.
pub fn init_primitives(
    frame: &WorldFrame,
    bounds: &Aabb,
    density: f64,
    opacity: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Gaussian>> {
    if !(density > 0.0) {
        return Err(Error::Config(format!("initial density {density} must be positive")));
    }
    let volume_m3 = bounds.volume() * frame.scale.powi(3);
    let k = (density * volume_m3).round() as usize;
    if k == 0 {
        return Err(Error::Config(format!(
            "density {density}/m³ over {volume_m3:.1} m³ yields no primitives"
        )));
    }
    let ext = bounds.extent();
    let centers: Vec<Vector3<f64>> = (0..k)
        .map(|_| bounds.min + Vector3::new(rng.random::<f64>() * ext.x, rng.random::<f64>() * ext.y, rng.random::<f64>() * ext.z))
        .collect();
    let spacing = if k > 1 {
        mean_nearest_neighbor(&centers, (bounds.volume() / k as f64).cbrt())
    } else {
        ext.min()
    };
    let log_scale = (0.5 * spacing).ln();
    let opacity_logit = logit(opacity);
    Ok(centers
        .into_iter()
        .map(|c| Gaussian {
            mean: [c.x, c.y, c.z],
            log_scale: [log_scale; 3],
            rotation: random_rotation(rng),
            opacity_logit,
            albedo: [1.0; 3],
        })
        .collect())
}
