//! Synthetic scenes, the ray-cast oracle, DSM extraction and evaluation.

mod dataset;
mod dsm;
mod oracle;
mod pushbroom;
mod scene;
mod surfels;

pub use dataset::{ground_truth_dsm, render_dataset, MULTIVIEW_MASK};
pub use dsm::{dsm_camera, extract_dsm, mae, DsmRaster, MaeReport, DSM_MIN_OPACITY};
pub use oracle::{oracle_elevation, oracle_render, visibility_counts, Hit, OracleAppearance, OracleRender};
pub use pushbroom::PushbroomSensor;
pub use scene::{
    generate_scene, rpc_for_camera, surface_albedo, SceneBox, SceneSpec, SyntheticScene, SyntheticSetup,
    SyntheticView,
};
pub use surfels::geometry_primitives;
