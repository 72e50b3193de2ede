//! Datasets, checkpoints and raster files.

mod checkpoint;
mod dataset;
mod images;
mod pfm;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use dataset::{
    load_dataset, rpc_from_json, rpc_to_json, save_dataset, DatasetFrame, SceneDataset, SceneMeta, FIT_WARN_PX,
};
pub use images::{
    normalize_for_display, quantize_to_16bit, read_image, read_mask, write_mask, write_png16, write_png8,
};
pub use pfm::{read_dsm, read_pfm, sidecar_path, write_dsm, write_pfm};
