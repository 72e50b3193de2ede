//! Tile-based front-to-back alpha compositing and its exact reverse pass.
//!
//! Per pixel `u`, with splats sorted front to back:
//!
//! ```text
//! a_k(u) = α_k G_k(u)
//! ω_k(u) = a_k(u) Π_{j<k} (1 - a_j(u))
//! feature(u) = Σ f_k ω_k,  elevation(u) = Σ h_k ω_k,  opacity(u) = Σ ω_k
//! ```
//!
//! A contribution is skipped outside the `cull_sigma` ellipse or when
//! `a_k < alpha_cutoff`; a pixel stops compositing once its transmittance
//! drops below `transmittance_stop` (after adding the contribution that
//! crossed the threshold).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Splat2D;
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterConfig {
    pub tile_size: usize,
    /// Isotropic variance added to every splat, in px².
    pub dilation: f64,
    pub alpha_cutoff: f64,
    pub transmittance_stop: f64,
    pub cull_sigma: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            tile_size: 16,
            dilation: 0.3,
            alpha_cutoff: 1.0 / 255.0,
            transmittance_stop: 1e-4,
            cull_sigma: 3.0,
        }
    }
}

impl RasterConfig {
    /// Plain compositing with no culling and no early termination.
    pub fn exact() -> Self {
        Self {
            alpha_cutoff: 0.0,
            transmittance_stop: 0.0,
            cull_sigma: f64::INFINITY,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channels {
    Feature,
    Elevation,
    Both,
}

/// Composited rasters of one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderTargets {
    /// Three-channel composited feature (albedo).
    pub feature: Raster,
    /// Raw composited altitude in meters (not divided by opacity).
    pub elevation: Raster,
    /// Accumulated opacity `Σ ω_k`.
    pub opacity: Raster,
}

impl RenderTargets {
    pub fn width(&self) -> usize {
        self.opacity.width()
    }

    pub fn height(&self) -> usize {
        self.opacity.height()
    }
}

/// Upstream gradients with respect to the rendered rasters. Missing rasters
/// are treated as zero.
#[derive(Debug, Clone, Default)]
pub struct RenderGrads {
    pub feature: Option<Raster>,
    pub elevation: Option<Raster>,
    pub opacity: Option<Raster>,
}

/// Gradient with respect to the 2D splat parameters.
///
/// `conic` holds derivatives with respect to the scalars `(a, b, c)` of
/// `[[a, b], [b, c]]`, so `b` collects both off-diagonal entries.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SplatGrad {
    pub mean: [f64; 2],
    pub conic: [f64; 3],
    pub alpha: f64,
    pub feature: [f64; 3],
    pub elevation: f64,
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        self.mean[0] += o.mean[0];
        self.mean[1] += o.mean[1];
        for i in 0..3 {
            self.conic[i] += o.conic[i];
            self.feature[i] += o.feature[i];
        }
        self.alpha += o.alpha;
        self.elevation += o.elevation;
    }
}

/// Per-tile lists of splat positions, in front-to-back order.
#[derive(Debug, Clone)]
pub struct TileGrid {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub lists: Vec<Vec<u32>>,
    /// Largest Mahalanobis power `dᵀ Σ⁻¹ d` at which each splat (by sorted
    /// position) can still pass both the sigma cull and the alpha cutoff.
    pub max_power: Vec<f64>,
    /// Inclusive pixel range `[x0, x1, y0, y1]` each splat can contribute
    /// to; empty (`x0 > x1`) for splats that never contribute.
    pub reach: Vec<[i32; 4]>,
}

/// Side of the pixel blocks a tile is split into while compositing.
const BLOCK: usize = 4;

const EMPTY_RANGE: [i32; 4] = [0, -1, 0, -1];

/// Pixels whose centers fall inside the axis-aligned box of the `k`-sigma
/// ellipse of `s`, clipped to the image.
fn pixel_range(s: &Splat2D, k: f64, width: usize, height: usize) -> [i32; 4] {
    if !k.is_finite() {
        return [0, width as i32 - 1, 0, height as i32 - 1];
    }
    let rx = k * s.cov[0].sqrt();
    let ry = k * s.cov[2].sqrt();
    // Pixel centers sit at integer + 0.5.
    let x0 = (s.mean[0] - rx - 0.5).ceil();
    let x1 = (s.mean[0] + rx - 0.5).floor();
    let y0 = (s.mean[1] - ry - 0.5).ceil();
    let y1 = (s.mean[1] + ry - 0.5).floor();
    if !(x1 >= 0.0 && y1 >= 0.0 && x0 < width as f64 && y0 < height as f64) || x0 > x1 || y0 > y1 {
        return EMPTY_RANGE;
    }
    [
        x0.max(0.0) as i32,
        x1.min(width as f64 - 1.0) as i32,
        y0.max(0.0) as i32,
        y1.min(height as f64 - 1.0) as i32,
    ]
}

/// `min(cull_sigma², 2 ln(α / alpha_cutoff))`: beyond this power a splat is
/// either culled or below the alpha cutoff.
fn max_power(alpha: f64, cfg: &RasterConfig) -> f64 {
    let cull = cfg.cull_sigma * cfg.cull_sigma;
    if cfg.alpha_cutoff > 0.0 {
        // Slack keeps the pre-test strictly looser than the exact test.
        cull.min(2.0 * (alpha / cfg.alpha_cutoff).ln() + 1e-9)
    } else {
        cull
    }
}

impl TileGrid {
    /// Bins sorted splats into every tile their culling ellipse's bounding
    /// box touches.
    pub fn build(splats: &[Splat2D], width: usize, height: usize, cfg: &RasterConfig) -> Self {
        let ts = cfg.tile_size.max(1);
        let tiles_x = width.div_ceil(ts);
        let tiles_y = height.div_ceil(ts);
        let mut lists = vec![Vec::new(); tiles_x * tiles_y];
        let max_pow: Vec<f64> = splats.iter().map(|s| max_power(s.alpha, cfg)).collect();
        let mut reach = Vec::with_capacity(splats.len());
        for (pos, s) in splats.iter().enumerate() {
            let live = s.alpha >= cfg.alpha_cutoff && s.alpha > 0.0;
            let footprint = |k: f64| pixel_range(s, k, width, height);
            reach.push(if live { footprint(max_pow[pos].sqrt()) } else { EMPTY_RANGE });
            if !live {
                continue;
            }
            let Some([x0, x1, y0, y1]) = (if cfg.cull_sigma.is_finite() {
                let r = footprint(cfg.cull_sigma);
                (r != EMPTY_RANGE).then_some(r)
            } else {
                Some([0, width as i32 - 1, 0, height as i32 - 1])
            }) else {
                continue;
            };
            let (x0, x1, y0, y1) = (x0 as usize, x1 as usize, y0 as usize, y1 as usize);
            for ty in y0 / ts..=y1 / ts {
                for tx in x0 / ts..=x1 / ts {
                    lists[ty * tiles_x + tx].push(pos as u32);
                }
            }
        }
        Self {
            tile_size: ts,
            tiles_x,
            tiles_y,
            lists,
            max_power: max_pow,
            reach,
        }
    }

    /// Positions within the list of `tile` whose reach overlaps each
    /// `BLOCK × BLOCK` block of the tile, in list order.
    fn block_lists(&self, tile: usize, width: usize, height: usize) -> (usize, Vec<Vec<u32>>) {
        let (x0, x1, y0, y1) = self.tile_pixels(tile, width, height);
        let bx = (x1 - x0).div_ceil(BLOCK);
        let by = (y1 - y0).div_ceil(BLOCK);
        let mut out = vec![Vec::new(); bx * by];
        for (lp, &si) in self.lists[tile].iter().enumerate() {
            let [rx0, rx1, ry0, ry1] = self.reach[si as usize];
            if rx0 > rx1 {
                continue;
            }
            let clamp = |v: i32, lo: usize, n: usize| ((v.max(lo as i32) as usize - lo) / BLOCK).min(n - 1);
            if rx1 < x0 as i32 || ry1 < y0 as i32 || rx0 >= x1 as i32 || ry0 >= y1 as i32 {
                continue;
            }
            let (cx0, cx1) = (clamp(rx0, x0, bx), clamp(rx1, x0, bx));
            let (cy0, cy1) = (clamp(ry0, y0, by), clamp(ry1, y0, by));
            for cy in cy0..=cy1 {
                for cx in cx0..=cx1 {
                    out[cy * bx + cx].push(lp as u32);
                }
            }
        }
        (bx, out)
    }

    fn tile_pixels(&self, tile: usize, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let tx = tile % self.tiles_x;
        let ty = tile / self.tiles_x;
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (x0, (x0 + self.tile_size).min(width), y0, (y0 + self.tile_size).min(height))
    }
}

/// Accepted contribution of one splat at one pixel.
#[derive(Debug, Clone, Copy)]
struct Contribution {
    list_pos: u32,
    kernel: f64,
    a: f64,
    transmittance: f64,
    dx: f64,
    dy: f64,
}

/// Walks the splats of `list` at pixel center `(x, y)`, calling `visit` for
/// each accepted contribution. Returns the final transmittance.
#[inline]
fn composite_pixel(
    splats: &[Splat2D],
    max_pow: &[f64],
    list: &[u32],
    positions: &[u32],
    x: f64,
    y: f64,
    cfg: &RasterConfig,
    mut visit: impl FnMut(Contribution),
) -> f64 {
    let cull2 = cfg.cull_sigma * cfg.cull_sigma;
    let mut t = 1.0;
    for &lp in positions {
        let si = list[lp as usize];
        let s = &splats[si as usize];
        let dx = x - s.mean[0];
        let dy = y - s.mean[1];
        let q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
        if q > max_pow[si as usize] || q > cull2 {
            continue;
        }
        let kernel = (-0.5 * q).exp();
        let a = s.alpha * kernel;
        if a < cfg.alpha_cutoff {
            continue;
        }
        visit(Contribution {
            list_pos: lp,
            kernel,
            a,
            transmittance: t,
            dx,
            dy,
        });
        t *= 1.0 - a;
        if t < cfg.transmittance_stop {
            break;
        }
    }
    t
}

const OUT_CHANNELS: usize = 5;

/// Renders sorted splats into feature, elevation and opacity rasters.
pub fn rasterize(
    splats: &[Splat2D],
    width: usize,
    height: usize,
    cfg: &RasterConfig,
    channels: Channels,
) -> RenderTargets {
    let grid = TileGrid::build(splats, width, height, cfg);
    rasterize_with_grid(splats, &grid, width, height, cfg, channels)
}

pub fn rasterize_with_grid(
    splats: &[Splat2D],
    grid: &TileGrid,
    width: usize,
    height: usize,
    cfg: &RasterConfig,
    channels: Channels,
) -> RenderTargets {
    let want_feature = channels != Channels::Elevation;
    let want_elevation = channels != Channels::Feature;
    let mut buf = vec![0.0; width * height * OUT_CHANNELS];
    let band = grid.tile_size * width * OUT_CHANNELS;
    if band > 0 {
        buf.par_chunks_mut(band).enumerate().for_each(|(ty, chunk)| {
            for tx in 0..grid.tiles_x {
                let tile = ty * grid.tiles_x + tx;
                let list = &grid.lists[tile];
                if list.is_empty() {
                    continue;
                }
                let (x0, x1, y0, y1) = grid.tile_pixels(tile, width, height);
                let (bx, blocks) = grid.block_lists(tile, width, height);
                for py in y0..y1 {
                    for px in x0..x1 {
                        let mut acc = [0.0; OUT_CHANNELS];
                        let block = &blocks[(py - y0) / BLOCK * bx + (px - x0) / BLOCK];
                        if block.is_empty() {
                            continue;
                        }
                        let (fx, fy) = (px as f64 + 0.5, py as f64 + 0.5);
                        composite_pixel(splats, &grid.max_power, list, block, fx, fy, cfg, |c| {
                            let s = &splats[list[c.list_pos as usize] as usize];
                            let w = c.a * c.transmittance;
                            if want_feature {
                                acc[0] += s.feature[0] * w;
                                acc[1] += s.feature[1] * w;
                                acc[2] += s.feature[2] * w;
                            }
                            if want_elevation {
                                acc[3] += s.elevation * w;
                            }
                            acc[4] += w;
                        });
                        let o = ((py - ty * grid.tile_size) * width + px) * OUT_CHANNELS;
                        chunk[o..o + OUT_CHANNELS].copy_from_slice(&acc);
                    }
                }
            }
        });
    }
    split_channels(buf, width, height)
}

fn split_channels(buf: Vec<f64>, width: usize, height: usize) -> RenderTargets {
    let n = width * height;
    let mut feature = Vec::with_capacity(n * 3);
    let mut elevation = Vec::with_capacity(n);
    let mut opacity = Vec::with_capacity(n);
    for p in buf.chunks_exact(OUT_CHANNELS) {
        feature.extend_from_slice(&p[0..3]);
        elevation.push(p[3]);
        opacity.push(p[4]);
    }
    RenderTargets {
        feature: Raster::from_vec(width, height, 3, feature),
        elevation: Raster::from_vec(width, height, 1, elevation),
        opacity: Raster::from_vec(width, height, 1, opacity),
    }
}

/// Exact reverse pass of [`rasterize`]. Returns one gradient per splat
/// (same order as `splats`). Accumulation order is fixed: tiles are reduced
/// sequentially in raster order, so results are bit-reproducible.
pub fn rasterize_backward(
    splats: &[Splat2D],
    width: usize,
    height: usize,
    cfg: &RasterConfig,
    upstream: &RenderGrads,
) -> Vec<SplatGrad> {
    let grid = TileGrid::build(splats, width, height, cfg);
    rasterize_backward_with_grid(splats, &grid, width, height, cfg, upstream)
}

pub fn rasterize_backward_with_grid(
    splats: &[Splat2D],
    grid: &TileGrid,
    width: usize,
    height: usize,
    cfg: &RasterConfig,
    upstream: &RenderGrads,
) -> Vec<SplatGrad> {
    for r in [&upstream.feature, &upstream.elevation, &upstream.opacity].into_iter().flatten() {
        assert!(r.width() == width && r.height() == height, "upstream gradient size mismatch");
    }
    let upstream_at = |pixel: usize| -> [f64; OUT_CHANNELS] {
        let mut g = [0.0; OUT_CHANNELS];
        if let Some(f) = &upstream.feature {
            g[0..3].copy_from_slice(f.at(pixel));
        }
        if let Some(e) = &upstream.elevation {
            g[3] = e.at(pixel)[0];
        }
        if let Some(o) = &upstream.opacity {
            g[4] = o.at(pixel)[0];
        }
        g
    };

    let per_tile: Vec<Vec<SplatGrad>> = (0..grid.lists.len())
        .into_par_iter()
        .map(|tile| {
            let list = &grid.lists[tile];
            let mut local = vec![SplatGrad::default(); list.len()];
            if list.is_empty() {
                return local;
            }
            let (x0, x1, y0, y1) = grid.tile_pixels(tile, width, height);
            let (bx, blocks) = grid.block_lists(tile, width, height);
            let mut scratch: Vec<Contribution> = Vec::with_capacity(64);
            for py in y0..y1 {
                for px in x0..x1 {
                    let block = &blocks[(py - y0) / BLOCK * bx + (px - x0) / BLOCK];
                    let g = upstream_at(py * width + px);
                    if block.is_empty() || g.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    scratch.clear();
                    let (fx, fy) = (px as f64 + 0.5, py as f64 + 0.5);
                    composite_pixel(splats, &grid.max_power, list, block, fx, fy, cfg, |c| scratch.push(c));
                    // Back-to-front; `tail` is Σ_{j>k} (g·c_j) ω_j / T_{k+1}.
                    let mut tail = 0.0;
                    for c in scratch.iter().rev() {
                        let s = &splats[list[c.list_pos as usize] as usize];
                        let gc = g[0] * s.feature[0]
                            + g[1] * s.feature[1]
                            + g[2] * s.feature[2]
                            + g[3] * s.elevation
                            + g[4];
                        let w = c.a * c.transmittance;
                        let d_a = c.transmittance * (gc - tail);
                        tail = gc * c.a + (1.0 - c.a) * tail;

                        let out = &mut local[c.list_pos as usize];
                        out.feature[0] += g[0] * w;
                        out.feature[1] += g[1] * w;
                        out.feature[2] += g[2] * w;
                        out.elevation += g[3] * w;
                        out.alpha += d_a * c.kernel;
                        let d_power = d_a * s.alpha * c.kernel;
                        let (cx, cy) = (c.dx, c.dy);
                        out.mean[0] += d_power * (s.conic[0] * cx + s.conic[1] * cy);
                        out.mean[1] += d_power * (s.conic[1] * cx + s.conic[2] * cy);
                        out.conic[0] += -0.5 * d_power * cx * cx;
                        out.conic[1] += -d_power * cx * cy;
                        out.conic[2] += -0.5 * d_power * cy * cy;
                    }
                }
            }
            local
        })
        .collect();

    let mut grads = vec![SplatGrad::default(); splats.len()];
    for (tile, local) in per_tile.iter().enumerate() {
        for (lp, g) in local.iter().enumerate() {
            grads[grid.lists[tile][lp] as usize].add(g);
        }
    }
    grads
}
