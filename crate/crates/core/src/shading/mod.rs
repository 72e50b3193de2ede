//! Shadow mapping and image formation.
//!
//! For a satellite camera A and its sun camera S:
//!
//! ```text
//! Δh(u) = E_S(hom(u)) - E_A(u)
//! s(u)  = min(exp(-ρ Δh(u)), 1)
//! l(u)  = s(u) + (1 - s(u)) ψ
//! I(u)  = l(u) ⊙ (M F_A(u) + o T_A(u))
//! ```
//!
//! where `(M, o)` is the per-camera affine color map applied to the
//! composited albedo `F_A` with accumulated opacity `T_A`. Sampling
//! positions `hom(u)` are held fixed under differentiation.

mod warp;

use serde::{Deserialize, Serialize};

pub use warp::Warp;

use crate::geocam::{AffineCamera, WorldFrame};
use crate::raster::Raster;
use crate::splat::{render, sigmoid, Channels, Gaussian, RasterConfig};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadingConfig {
    /// Density of the shadow medium in 1/m.
    pub rho: f64,
}

impl Default for ShadingConfig {
    fn default() -> Self {
        Self { rho: 10.0 }
    }
}

/// Number of trainable scalars in a [`CameraAppearance`].
pub const APPEARANCE_FIELDS: usize = 15;

/// Per-camera color correction `f ↦ M f + o` and ambient light
/// `ψ = sigmoid(ambient_logit)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraAppearance {
    pub color_matrix: [[f64; 3]; 3],
    pub color_offset: [f64; 3],
    pub ambient_logit: [f64; 3],
}

impl CameraAppearance {
    /// Identity color map with a uniform ambient level.
    pub fn identity(ambient: f64) -> Self {
        let l = crate::splat::logit(ambient);
        Self {
            color_matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            color_offset: [0.0; 3],
            ambient_logit: [l; 3],
        }
    }

    pub fn ambient(&self) -> [f64; 3] {
        self.ambient_logit.map(sigmoid)
    }

    pub fn apply(&self, f: &[f64; 3]) -> [f64; 3] {
        let m = &self.color_matrix;
        std::array::from_fn(|c| m[c][0] * f[0] + m[c][1] * f[1] + m[c][2] * f[2] + self.color_offset[c])
    }

    pub fn to_array(&self) -> [f64; APPEARANCE_FIELDS] {
        let mut a = [0.0; APPEARANCE_FIELDS];
        for r in 0..3 {
            a[3 * r..3 * r + 3].copy_from_slice(&self.color_matrix[r]);
        }
        a[9..12].copy_from_slice(&self.color_offset);
        a[12..15].copy_from_slice(&self.ambient_logit);
        a
    }

    pub fn from_array(a: &[f64; APPEARANCE_FIELDS]) -> Self {
        Self {
            color_matrix: [[a[0], a[1], a[2]], [a[3], a[4], a[5]], [a[6], a[7], a[8]]],
            color_offset: [a[9], a[10], a[11]],
            ambient_logit: [a[12], a[13], a[14]],
        }
    }
}

/// Gradient with respect to the fields of a [`CameraAppearance`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AppearanceGrad {
    pub color_matrix: [[f64; 3]; 3],
    pub color_offset: [f64; 3],
    pub ambient_logit: [f64; 3],
}

impl AppearanceGrad {
    pub fn to_array(&self) -> [f64; APPEARANCE_FIELDS] {
        CameraAppearance {
            color_matrix: self.color_matrix,
            color_offset: self.color_offset,
            ambient_logit: self.ambient_logit,
        }
        .to_array()
    }
}

/// Δh, darkening and lighting rasters of one satellite view, plus the warp
/// into the sun camera.
#[derive(Debug, Clone)]
pub struct ShadowBuffers {
    pub delta_h: Raster,
    pub darkening: Raster,
    pub lighting: Raster,
    pub warp: Warp,
}

/// `Δh(u) = E_S(hom^{A,S}(u)) - E_A(u)`, returned with the warp used.
pub fn delta_h(
    cam_a: &AffineCamera,
    cam_sun: &AffineCamera,
    elev_a: &Raster,
    elev_sun: &Raster,
    frame: &WorldFrame,
) -> Result<(Raster, Warp)> {
    let warp = Warp::homologous(cam_a, cam_sun, elev_a, frame)?;
    let mut dh = warp.resample(elev_sun);
    for (d, e) in dh.data_mut().iter_mut().zip(elev_a.data()) {
        *d -= e;
    }
    Ok((dh, warp))
}

/// `s = min(exp(-ρ Δh), 1)`.
pub fn darkening(delta_h: &Raster, rho: f64) -> Raster {
    delta_h.map(|d| (-rho * d).exp().min(1.0))
}

/// `l = s + (1 - s) ψ`, one channel per entry of `psi`.
pub fn lighting(s: &Raster, psi: &[f64; 3]) -> Raster {
    let mut out = Raster::new(s.width(), s.height(), 3);
    for (i, &v) in s.data().iter().enumerate() {
        let o = out.at_mut(i);
        for c in 0..3 {
            o[c] = v + (1.0 - v) * psi[c];
        }
    }
    out
}

pub fn shadow_buffers(
    cam_a: &AffineCamera,
    cam_sun: &AffineCamera,
    elev_a: &Raster,
    elev_sun: &Raster,
    frame: &WorldFrame,
    cfg: &ShadingConfig,
    psi: &[f64; 3],
) -> Result<ShadowBuffers> {
    let (dh, warp) = delta_h(cam_a, cam_sun, elev_a, elev_sun, frame)?;
    let s = darkening(&dh, cfg.rho);
    let l = lighting(&s, psi);
    Ok(ShadowBuffers {
        delta_h: dh,
        darkening: s,
        lighting: l,
        warp,
    })
}

/// `M F + o T`: the color map applied to a composited albedo raster.
pub fn colorize(albedo: &Raster, opacity: &Raster, app: &CameraAppearance) -> Raster {
    let mut out = Raster::new(albedo.width(), albedo.height(), 3);
    let m = &app.color_matrix;
    for i in 0..albedo.pixel_count() {
        let f = albedo.at(i);
        let t = opacity.at(i)[0];
        let o = out.at_mut(i);
        for c in 0..3 {
            o[c] = m[c][0] * f[0] + m[c][1] * f[1] + m[c][2] * f[2] + app.color_offset[c] * t;
        }
    }
    out
}

/// Shaded image `l ⊙ (M F + o T)`; `lighting = None` means `l ≡ 1`.
pub fn form_image(albedo: &Raster, opacity: &Raster, lighting: Option<&Raster>, app: &CameraAppearance) -> Raster {
    let mut out = colorize(albedo, opacity, app);
    if let Some(l) = lighting {
        for (o, v) in out.data_mut().iter_mut().zip(l.data()) {
            *o *= v;
        }
    }
    out
}

/// Albedo render: composited raw features, no color map and no shadows.
pub fn render_albedo(prims: &[Gaussian], cam: &AffineCamera, frame: &WorldFrame, cfg: &RasterConfig) -> Result<Raster> {
    Ok(render(prims, cam, frame, cfg, Channels::Feature)?.targets.feature)
}

/// Gradients of [`form_image`] with respect to its inputs.
#[derive(Debug, Clone)]
pub struct ImageGrads {
    pub albedo: Raster,
    pub opacity: Raster,
    pub lighting: Option<Raster>,
    pub appearance: AppearanceGrad,
}

pub fn form_image_backward(
    albedo: &Raster,
    opacity: &Raster,
    lighting: Option<&Raster>,
    app: &CameraAppearance,
    d_image: &Raster,
) -> ImageGrads {
    let (w, h) = (albedo.width(), albedo.height());
    let colored = lighting.map(|_| colorize(albedo, opacity, app));
    let mut d_albedo = Raster::new(w, h, 3);
    let mut d_opacity = Raster::new(w, h, 1);
    let mut d_light = lighting.map(|_| Raster::new(w, h, 3));
    let mut grad = AppearanceGrad::default();
    let m = &app.color_matrix;
    for i in 0..albedo.pixel_count() {
        let g = d_image.at(i);
        let mut d_c = [g[0], g[1], g[2]];
        if let (Some(l), Some(col), Some(dl)) = (lighting, &colored, &mut d_light) {
            let lv = l.at(i);
            let cv = col.at(i);
            let dlv = dl.at_mut(i);
            for c in 0..3 {
                dlv[c] = g[c] * cv[c];
                d_c[c] = g[c] * lv[c];
            }
        }
        let f = albedo.at(i);
        let t = opacity.at(i)[0];
        let da = d_albedo.at_mut(i);
        for j in 0..3 {
            da[j] = m[0][j] * d_c[0] + m[1][j] * d_c[1] + m[2][j] * d_c[2];
        }
        d_opacity.at_mut(i)[0] =
            app.color_offset[0] * d_c[0] + app.color_offset[1] * d_c[1] + app.color_offset[2] * d_c[2];
        for c in 0..3 {
            for j in 0..3 {
                grad.color_matrix[c][j] += d_c[c] * f[j];
            }
            grad.color_offset[c] += d_c[c] * t;
        }
    }
    ImageGrads {
        albedo: d_albedo,
        opacity: d_opacity,
        lighting: d_light,
        appearance: grad,
    }
}

/// Reverse of [`lighting`]: gradient on `s` and on the ambient logits.
pub fn lighting_backward(s: &Raster, app: &CameraAppearance, d_lighting: &Raster) -> (Raster, [f64; 3]) {
    let psi = app.ambient();
    let mut d_s = Raster::new(s.width(), s.height(), 1);
    let mut d_psi = [0.0; 3];
    for (i, &v) in s.data().iter().enumerate() {
        let g = d_lighting.at(i);
        d_s.at_mut(i)[0] = (0..3).map(|c| g[c] * (1.0 - psi[c])).sum();
        for c in 0..3 {
            d_psi[c] += g[c] * (1.0 - v);
        }
    }
    let d_logit = std::array::from_fn(|c| d_psi[c] * psi[c] * (1.0 - psi[c]));
    (d_s, d_logit)
}

/// Reverse of [`darkening`]; zero where the clamp is active (`Δh ≤ 0`).
pub fn darkening_backward(delta_h: &Raster, s: &Raster, rho: f64, d_s: &Raster) -> Raster {
    let mut out = Raster::new(s.width(), s.height(), 1);
    for i in 0..s.pixel_count() {
        if delta_h.at(i)[0] > 0.0 {
            out.at_mut(i)[0] = -rho * s.at(i)[0] * d_s.at(i)[0];
        }
    }
    out
}

/// Reverse of [`delta_h`] with fixed warp: `(d E_A, d E_S)`.
pub fn delta_h_backward(warp: &Warp, d_delta_h: &Raster) -> (Raster, Raster) {
    (d_delta_h.map(|v| -v), warp.scatter(d_delta_h))
}
