use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::losses::{ConsistencyConfig, LossWeights};
use crate::shading::ShadingConfig;
use crate::splat::RasterConfig;
use crate::{Error, Result};

/// Adam learning rates per parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    /// Initial position rate, multiplied by the scene radius in world units.
    pub position_init: f64,
    /// Final position rate after exponential decay over the whole run.
    pub position_final: f64,
    pub albedo: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
    /// Color correction and ambient light of each camera.
    pub camera: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position_init: 1.6e-4,
            position_final: 1.6e-6,
            albedo: 2.5e-3,
            opacity: 5e-2,
            scale: 5e-3,
            rotation: 1e-3,
            camera: 1e-2,
        }
    }
}

/// Component toggles for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub shadows: bool,
    pub sparsity: bool,
    pub consistency: bool,
    /// Only active together with `shadows`, since it acts on the shadow map.
    pub opaqueness: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            shadows: true,
            sparsity: true,
            consistency: true,
            opaqueness: true,
        }
    }
}

impl Ablation {
    /// Everything off: plain splatting with affine cameras and color correction.
    pub fn none() -> Self {
        Self {
            shadows: false,
            sparsity: false,
            consistency: false,
            opaqueness: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    /// First iteration with shading and regularizers.
    pub enable_iteration: usize,
    /// Primitives below this opacity are pruned.
    pub alpha_min: f64,
    pub prune_every: usize,
    pub init_opacity: f64,
    /// Initial primitives per cubic meter.
    pub init_density: f64,
    /// Initial ambient level of every camera.
    pub init_ambient: f64,
    pub seed: u64,
    /// Meters per pixel of the sun cameras; `None` uses the mean GSD of the
    /// satellite cameras.
    pub sun_gsd: Option<f64>,
    /// Write a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: usize,
    pub lr: LearningRates,
    pub weights: LossWeights,
    pub consistency: ConsistencyConfig,
    pub shading: ShadingConfig,
    pub raster: RasterConfig,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            enable_iteration: 1000,
            alpha_min: 0.0025,
            prune_every: 100,
            init_opacity: 0.01,
            init_density: 0.13,
            init_ambient: 0.5,
            seed: 0,
            sun_gsd: None,
            checkpoint_every: 0,
            lr: LearningRates::default(),
            weights: LossWeights::default(),
            consistency: ConsistencyConfig::default(),
            shading: ShadingConfig::default(),
            raster: RasterConfig::default(),
            ablation: Ablation::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.iterations == 0 {
            return fail("iterations must be positive".into());
        }
        if self.enable_iteration >= self.iterations {
            return fail(format!(
                "enable_iteration ({}) must be below iterations ({})",
                self.enable_iteration, self.iterations
            ));
        }
        if !(self.alpha_min > 0.0 && self.alpha_min < 1.0) {
            return fail(format!("alpha_min {} must lie in (0, 1)", self.alpha_min));
        }
        if !(self.init_opacity > 0.0 && self.init_opacity < 1.0) {
            return fail(format!("init_opacity {} must lie in (0, 1)", self.init_opacity));
        }
        if !(self.init_ambient > 0.0 && self.init_ambient < 1.0) {
            return fail(format!("init_ambient {} must lie in (0, 1)", self.init_ambient));
        }
        if !(self.init_density > 0.0) {
            return fail(format!("init_density {} must be positive", self.init_density));
        }
        if self.prune_every == 0 {
            return fail("prune_every must be positive".into());
        }
        if self.sun_gsd.is_some_and(|g| !(g > 0.0)) {
            return fail("sun_gsd must be positive".into());
        }
        if !(self.shading.rho > 0.0) {
            return fail("shading.rho must be positive".into());
        }
        if self.raster.tile_size == 0 {
            return fail("raster.tile_size must be positive".into());
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Applies `key=value` overrides in order, then validates the result.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, assignments: &[S]) -> Result<()> {
        let mut next = self.clone();
        for a in assignments {
            next.set(a.as_ref())?;
        }
        next.validate()?;
        *self = next;
        Ok(())
    }

    /// Applies `key=value` with a dotted key such as `ablation.shadows` or
    /// `lr.opacity`. The value is parsed as a TOML literal. Cross-field
    /// constraints are checked by [`TrainConfig::validate`], not here.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
        let mut doc = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let mut node = &mut doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("{key}: {part} is not a section")))?;
            if i + 1 == parts.len() {
                table.insert((*part).to_owned(), value.clone());
                break;
            }
            node = table
                .get_mut(*part)
                .ok_or_else(|| Error::Config(format!("unknown config section {part:?} in {key}")))?;
        }
        *self = doc.try_into().map_err(|e: toml::de::Error| Error::Config(format!("{key}: {e}")))?;
        Ok(())
    }
}
