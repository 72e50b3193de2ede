use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geocam::WorldFrame;
use crate::shading::CameraAppearance;
use crate::splat::{Gaussian, GAUSSIAN_FIELDS};
use crate::training::Model;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"SATSPLAT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Sidecar {
    frame: WorldFrame,
    cameras: Vec<NamedAppearance>,
    iteration: usize,
}

#[derive(Serialize, Deserialize)]
struct NamedAppearance {
    name: String,
    appearance: CameraAppearance,
}

/// Writes `dir/primitives.bin` (magic, version, `u64` count, then
/// `GAUSSIAN_FIELDS` little-endian `f64` per primitive) and `dir/model.json`
/// (world frame and per-camera appearance).
pub fn save_checkpoint(dir: &Path, model: &Model) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut buf = Vec::with_capacity(24 + model.primitives.len() * GAUSSIAN_FIELDS * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&[0; 4]);
    buf.extend_from_slice(&(model.primitives.len() as u64).to_le_bytes());
    for g in &model.primitives {
        for v in g.to_array() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let bin = dir.join("primitives.bin");
    fs::write(&bin, buf).map_err(|e| Error::io(format!("writing {}", bin.display()), e))?;
    let side = Sidecar {
        frame: model.frame,
        cameras: model
            .camera_names
            .iter()
            .zip(&model.appearances)
            .map(|(n, a)| NamedAppearance {
                name: n.clone(),
                appearance: *a,
            })
            .collect(),
        iteration: model.iteration,
    };
    let json = dir.join("model.json");
    let text = serde_json::to_string_pretty(&side).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(&json, text).map_err(|e| Error::io(format!("writing {}", json.display()), e))
}

pub fn load_checkpoint(dir: &Path) -> Result<Model> {
    let bin = dir.join("primitives.bin");
    let raw = fs::read(&bin).map_err(|e| Error::io(format!("reading {}", bin.display()), e))?;
    let bad = |m: &str| Error::Data(format!("{}: {m}", bin.display()));
    if raw.len() < 24 || &raw[..8] != MAGIC {
        return Err(bad("not a checkpoint"));
    }
    let version = u32::from_le_bytes(raw[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(raw[16..24].try_into().expect("8 bytes")) as usize;
    let body = &raw[24..];
    if body.len() != count * GAUSSIAN_FIELDS * 8 {
        return Err(bad("truncated primitive table"));
    }
    let primitives = body
        .chunks_exact(GAUSSIAN_FIELDS * 8)
        .map(|rec| {
            let mut a = [0.0; GAUSSIAN_FIELDS];
            for (v, b) in a.iter_mut().zip(rec.chunks_exact(8)) {
                *v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
            }
            Gaussian::from_array(&a)
        })
        .collect();
    let json = dir.join("model.json");
    let text = fs::read_to_string(&json).map_err(|e| Error::io(format!("reading {}", json.display()), e))?;
    let side: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", json.display())))?;
    Ok(Model {
        primitives,
        frame: side.frame,
        camera_names: side.cameras.iter().map(|c| c.name.clone()).collect(),
        appearances: side.cameras.iter().map(|c| c.appearance).collect(),
        iteration: side.iteration,
    })
}
