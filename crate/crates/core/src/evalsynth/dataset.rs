use super::dsm::{dsm_camera, DsmRaster};
use super::oracle::{oracle_elevation, oracle_render, visibility_counts, OracleAppearance};
use super::scene::{rpc_for_camera, SyntheticSetup};
use crate::geocam::AffineCamera;
use crate::io::{quantize_to_16bit, DatasetFrame, SceneDataset, SceneMeta};
use crate::Result;

/// Name of the evaluation mask holding DSM cells seen by at least two views.
pub const MULTIVIEW_MASK: &str = "multiview";

/// Ground-truth DSM of a synthetic scene on the standard nadir grid.
pub fn ground_truth_dsm(setup: &SyntheticSetup, gsd: f64) -> Result<DsmRaster> {
    let cam = dsm_camera(&setup.frame, &setup.world_bounds(), gsd);
    let values = oracle_elevation(&setup.scene, &setup.frame, &cam)?;
    DsmRaster::from_camera(values, &cam, &setup.frame, gsd)
}

/// Oracle images (16-bit quantized), fitted RPCs and affine cameras, the
/// ground-truth DSM at `dsm_gsd` and a multi-view visibility mask.
pub fn render_dataset(setup: &SyntheticSetup, dsm_gsd: f64) -> Result<SceneDataset> {
    let frame = setup.frame;
    let bounds = setup.world_bounds();
    let frames = setup
        .views
        .iter()
        .map(|v| {
            let appearance = OracleAppearance {
                gain: v.gain,
                ambient: v.ambient,
            };
            let r = oracle_render(&setup.scene, &frame, &v.camera, &v.sun, &appearance, setup.spec.supersample)?;
            let rpc = rpc_for_camera(&v.camera, &frame, &bounds)?;
            DatasetFrame::new(v.name.clone(), quantize_to_16bit(&r.image), rpc, v.sun, &frame, &bounds)
        })
        .collect::<Result<Vec<_>>>()?;
    let gt = ground_truth_dsm(setup, dsm_gsd)?;
    let cameras: Vec<AffineCamera> = setup.views.iter().map(|v| v.camera).collect();
    let grid = dsm_camera(&frame, &bounds, dsm_gsd);
    let counts = visibility_counts(&setup.scene, &frame, &cameras, &grid)?;
    Ok(SceneDataset {
        meta: SceneMeta {
            zone: setup.scene.zone,
            utm_bbox: setup.scene.bbox,
        },
        frame,
        frames,
        gt_dsm: Some(gt),
        masks: vec![(MULTIVIEW_MASK.to_owned(), counts.iter().map(|&c| c >= 2).collect())],
    })
}
