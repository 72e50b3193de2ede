//! Scene primitives and the differentiable affine splatting rasterizer.

mod backward;
mod gaussian;
mod project;
mod rasterize;
mod render;

pub use backward::splat_backward;
pub use gaussian::{logit, sigmoid, Gaussian, GaussianGrad, GAUSSIAN_FIELDS};
pub use project::{sort_front_to_back, splat_mean, splat_primitive, Splat2D};
pub use rasterize::{
    rasterize, rasterize_backward, rasterize_backward_with_grid, rasterize_with_grid, Channels, RasterConfig,
    RenderGrads, RenderTargets, SplatGrad, TileGrid,
};
pub use render::{render, render_backward, Rendered};
