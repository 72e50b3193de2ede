use nalgebra::Vector3;
use rayon::prelude::*;

use super::{
    rasterize_backward_with_grid, rasterize_with_grid, sort_front_to_back, splat_backward, splat_primitive,
    Channels, Gaussian, GaussianGrad, RasterConfig, RenderGrads, RenderTargets, Splat2D, TileGrid,
};
use crate::geocam::{AffineCamera, PixelProjection, WorldFrame};
use crate::Result;

/// Forward state of one camera render, kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub targets: RenderTargets,
    /// Splats sorted front to back.
    pub splats: Vec<Splat2D>,
    pub grid: TileGrid,
    pub projection: PixelProjection,
    pub view_direction: Vector3<f64>,
}

/// Splats, sorts and rasterizes `prims` through `cam`.
pub fn render(
    prims: &[Gaussian],
    cam: &AffineCamera,
    frame: &WorldFrame,
    cfg: &RasterConfig,
    channels: Channels,
) -> Result<Rendered> {
    let projection = cam.pixel_projection();
    let view_direction = cam.view_direction()?;
    let unsorted: Vec<Splat2D> = prims
        .par_iter()
        .enumerate()
        .map(|(i, g)| splat_primitive(&projection, &view_direction, frame, g, cfg.dilation, i))
        .collect();
    let splats: Vec<Splat2D> = sort_front_to_back(&unsorted).into_iter().map(|i| unsorted[i]).collect();
    let (w, h) = (cam.width, cam.height);
    let grid = TileGrid::build(&splats, w, h, cfg);
    let targets = rasterize_with_grid(&splats, &grid, w, h, cfg, channels);
    Ok(Rendered {
        targets,
        splats,
        grid,
        projection,
        view_direction,
    })
}

/// Gradients of a render with respect to every primitive, indexed like
/// `prims`.
pub fn render_backward(
    prims: &[Gaussian],
    frame: &WorldFrame,
    cfg: &RasterConfig,
    rendered: &Rendered,
    upstream: &RenderGrads,
) -> Vec<GaussianGrad> {
    let (w, h) = (rendered.targets.width(), rendered.targets.height());
    let splat_grads = rasterize_backward_with_grid(&rendered.splats, &rendered.grid, w, h, cfg, upstream);
    let mut out = vec![GaussianGrad::default(); prims.len()];
    let pulled: Vec<(usize, GaussianGrad)> = rendered
        .splats
        .par_iter()
        .zip(splat_grads.par_iter())
        .map(|(s, sg)| {
            (
                s.index,
                splat_backward(&rendered.projection, frame, &prims[s.index], s, sg),
            )
        })
        .collect();
    for (i, g) in pulled {
        out[i].add_assign(&g);
    }
    out
}
