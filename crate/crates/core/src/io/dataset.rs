use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::images::{read_image, read_mask, write_mask, write_png16};
use super::pfm::{read_dsm, write_dsm};
use crate::evalsynth::DsmRaster;
use crate::geocam::{
    fit_affine, rpc_ndc_sampler, Aabb, AffineCamera, AffineFitOptions, AffineFitStats, Normalization, RpcModel,
    SunDirection, UtmZone, WorldFrame, RPC_TERMS,
};
use crate::raster::Raster;
use crate::{Error, Result};

/// Affine fits above this mean residual are reported.
pub const FIT_WARN_PX: f64 = 1.0;

/// One posed image.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFrame {
    pub name: String,
    /// RGB in `[0, 1]`.
    pub image: Raster,
    pub rpc: RpcModel,
    pub sun: SunDirection,
    pub camera: AffineCamera,
    pub fit: AffineFitStats,
}

impl DatasetFrame {
    /// Builds a frame and fits its affine camera over `bounds` (world units).
    pub fn new(
        name: impl Into<String>,
        image: Raster,
        rpc: RpcModel,
        sun: SunDirection,
        frame: &WorldFrame,
        bounds: &Aabb,
    ) -> Result<Self> {
        let name = name.into();
        let (w, h) = (image.width(), image.height());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (camera, fit) = fit_affine(
            rpc_ndc_sampler(&rpc, frame, w, h),
            bounds,
            w,
            h,
            &AffineFitOptions::default(),
            &mut rng,
        )?;
        if fit.mean_px > FIT_WARN_PX {
            log::warn!("{name}: affine fit mean residual {:.3} px", fit.mean_px);
        } else {
            log::debug!("{name}: affine fit mean residual {:.4} px", fit.mean_px);
        }
        Ok(Self {
            name,
            image,
            rpc,
            sun,
            camera,
            fit,
        })
    }
}

/// Scene-level metadata stored in `scene.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub zone: UtmZone,
    /// Easting, northing and altitude bounds in meters.
    pub utm_bbox: Aabb,
}

/// A scene directory loaded into memory.
///
/// ```text
/// scene.json               UTM bounding box and zone
/// images/<name>.png|tif    8/16-bit or float RGB
/// meta/<name>.json         RPC00B keys plus sun_azimuth_deg, sun_elevation_deg
/// gt/dsm.pfm, gt/dsm.txt   optional ground-truth DSM and its georeferencing
/// gt/mask_<name>.png       optional evaluation masks on the DSM grid
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDataset {
    pub meta: SceneMeta,
    pub frame: WorldFrame,
    pub frames: Vec<DatasetFrame>,
    pub gt_dsm: Option<DsmRaster>,
    pub masks: Vec<(String, Vec<bool>)>,
}

impl SceneDataset {
    pub fn world_bounds(&self) -> Aabb {
        self.frame.utm_box_to_world(&self.meta.utm_bbox)
    }

    pub fn frame_index(&self, name: &str) -> Option<usize> {
        self.frames.iter().position(|f| f.name == name)
    }
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "tif", "tiff", "PNG"];

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

const COEFF_GROUPS: [&str; 4] = ["LINE_NUM_COEFF", "LINE_DEN_COEFF", "SAMP_NUM_COEFF", "SAMP_DEN_COEFF"];

/// RPC00B metadata as a flat JSON object.
pub fn rpc_to_json(rpc: &RpcModel) -> Map<String, Value> {
    let mut m = Map::new();
    for (key, n) in [
        ("LINE", rpc.row),
        ("SAMP", rpc.col),
        ("LAT", rpc.lat),
        ("LONG", rpc.lon),
        ("HEIGHT", rpc.alt),
    ] {
        m.insert(format!("{key}_OFF"), json!(n.offset));
        m.insert(format!("{key}_SCALE"), json!(n.scale));
    }
    for (group, coeffs) in COEFF_GROUPS
        .iter()
        .zip([&rpc.line_num, &rpc.line_den, &rpc.samp_num, &rpc.samp_den])
    {
        for (i, c) in coeffs.iter().enumerate() {
            m.insert(format!("{group}_{}", i + 1), json!(c));
        }
    }
    m
}

/// Parses RPC00B keys from a JSON object. Numbers may be JSON numbers or
/// strings.
pub fn rpc_from_json(m: &Map<String, Value>, context: &str) -> Result<RpcModel> {
    let num = |key: &str| -> Result<f64> {
        let v = m
            .get(key)
            .ok_or_else(|| Error::Data(format!("{context}: missing RPC key {key}")))?;
        match v {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        }
        .ok_or_else(|| Error::Data(format!("{context}: RPC key {key} is not a number")))
    };
    let norm = |key: &str| -> Result<Normalization> {
        Ok(Normalization {
            offset: num(&format!("{key}_OFF"))?,
            scale: num(&format!("{key}_SCALE"))?,
        })
    };
    let coeffs = |group: &str| -> Result<[f64; RPC_TERMS]> {
        let mut out = [0.0; RPC_TERMS];
        for (i, c) in out.iter_mut().enumerate() {
            *c = num(&format!("{group}_{}", i + 1))?;
        }
        Ok(out)
    };
    Ok(RpcModel {
        line_num: coeffs(COEFF_GROUPS[0])?,
        line_den: coeffs(COEFF_GROUPS[1])?,
        samp_num: coeffs(COEFF_GROUPS[2])?,
        samp_den: coeffs(COEFF_GROUPS[3])?,
        lon: norm("LONG")?,
        lat: norm("LAT")?,
        alt: norm("HEIGHT")?,
        row: norm("LINE")?,
        col: norm("SAMP")?,
    })
}

fn sun_from_json(m: &Map<String, Value>, name: &str) -> Result<SunDirection> {
    let get = |key: &str| {
        m.get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Config(format!("frame {name}: missing sun metadata ({key})")))
    };
    Ok(SunDirection::new(get("sun_azimuth_deg")?, get("sun_elevation_deg")?))
}

/// Loads a scene directory and fits one affine camera per image.
pub fn load_dataset(root: &Path) -> Result<SceneDataset> {
    let meta_value = read_json(&root.join("scene.json"))?;
    let meta: SceneMeta = serde_json::from_value(meta_value)
        .map_err(|e| Error::Data(format!("{}: {e}", root.join("scene.json").display())))?;
    let frame = WorldFrame::from_utm_bbox(&meta.utm_bbox, meta.zone)?;
    let bounds = frame.utm_box_to_world(&meta.utm_bbox);

    let image_dir = root.join("images");
    let mut paths: Vec<_> = fs::read_dir(&image_dir)
        .map_err(|e| Error::io(format!("listing {}", image_dir.display()), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!("no images in {}", image_dir.display())));
    }
    let mut frames = Vec::with_capacity(paths.len());
    for path in paths {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Data(format!("bad image name {}", path.display())))?
            .to_owned();
        let image = read_image(&path)?;
        let meta_path = root.join("meta").join(format!("{name}.json"));
        let Value::Object(m) = read_json(&meta_path)? else {
            return Err(Error::Data(format!("{}: expected a JSON object", meta_path.display())));
        };
        let rpc = rpc_from_json(&m, &meta_path.display().to_string())?;
        let sun = sun_from_json(&m, &name)?;
        frames.push(DatasetFrame::new(name, image, rpc, sun, &frame, &bounds)?);
    }

    let gt_path = root.join("gt").join("dsm.pfm");
    let gt_dsm = if gt_path.exists() { Some(read_dsm(&gt_path)?) } else { None };
    let mut masks = Vec::new();
    if let Ok(entries) = fs::read_dir(root.join("gt")) {
        let mut mask_paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("mask_") && n.ends_with(".png"))
            })
            .collect();
        mask_paths.sort();
        for p in mask_paths {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let (w, h, m) = read_mask(&p)?;
            if let Some(gt) = &gt_dsm {
                if (w, h) != (gt.width(), gt.height()) {
                    return Err(Error::Data(format!("{}: mask size differs from the DSM", p.display())));
                }
            }
            masks.push((stem.trim_start_matches("mask_").to_owned(), m));
        }
    }
    Ok(SceneDataset {
        meta,
        frame,
        frames,
        gt_dsm,
        masks,
    })
}

/// Writes a dataset in the layout read by [`load_dataset`]. Images are
/// stored as 16-bit PNG.
pub fn save_dataset(root: &Path, data: &SceneDataset) -> Result<()> {
    for sub in ["images", "meta"] {
        create_dir(&root.join(sub))?;
    }
    write_json(&root.join("scene.json"), &data.meta)?;
    for f in &data.frames {
        write_png16(&root.join("images").join(format!("{}.png", f.name)), &f.image)?;
        let mut m = rpc_to_json(&f.rpc);
        m.insert("sun_azimuth_deg".into(), json!(f.sun.azimuth_deg));
        m.insert("sun_elevation_deg".into(), json!(f.sun.elevation_deg));
        write_json(&root.join("meta").join(format!("{}.json", f.name)), &Value::Object(m))?;
    }
    if data.gt_dsm.is_some() || !data.masks.is_empty() {
        create_dir(&root.join("gt"))?;
    }
    if let Some(gt) = &data.gt_dsm {
        write_dsm(&root.join("gt").join("dsm.pfm"), gt)?;
        for (name, m) in &data.masks {
            write_mask(&root.join("gt").join(format!("mask_{name}.png")), gt.width(), gt.height(), m)?;
        }
    }
    Ok(())
}
