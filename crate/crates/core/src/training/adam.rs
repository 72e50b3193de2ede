use crate::shading::APPEARANCE_FIELDS;
use crate::splat::GAUSSIAN_FIELDS;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS_POSITION: f64 = 1e-15;
pub const EPS_DEFAULT: f64 = 1e-8;

/// One bias-corrected Adam update of a scalar parameter.
#[inline]
pub fn adam_update(param: &mut f64, grad: f64, m: &mut f64, v: &mut f64, step: u64, lr: f64, eps: f64) {
    *m = BETA1 * *m + (1.0 - BETA1) * grad;
    *v = BETA2 * *v + (1.0 - BETA2) * grad * grad;
    let mh = *m / (1.0 - BETA1.powi(step as i32));
    let vh = *v / (1.0 - BETA2.powi(step as i32));
    *param -= lr * mh / (vh.sqrt() + eps);
}

/// Adam moments for a table of `N`-field records, one row per record.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamTable<const N: usize> {
    pub m: Vec<[f64; N]>,
    pub v: Vec<[f64; N]>,
    pub step: u64,
}

impl<const N: usize> AdamTable<N> {
    pub fn new(rows: usize) -> Self {
        Self {
            m: vec![[0.0; N]; rows],
            v: vec![[0.0; N]; rows],
            step: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.m.len()
    }

    /// Keeps the rows whose flag is set.
    pub fn retain(&mut self, keep: &[bool]) {
        let mut k = keep.iter();
        self.m.retain(|_| *k.next().expect("keep mask length"));
        let mut k = keep.iter();
        self.v.retain(|_| *k.next().expect("keep mask length"));
    }

    /// Updates every row of `params` in place. `lr[j]` and `eps[j]` apply to
    /// field `j`.
    pub fn step_all(&mut self, params: &mut [[f64; N]], grads: &[[f64; N]], lr: &[f64; N], eps: &[f64; N]) {
        self.step += 1;
        let t = self.step;
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for j in 0..N {
                adam_update(&mut p[j], g[j], &mut m[j], &mut v[j], t, lr[j], eps[j]);
            }
        }
    }
}

/// Optimizer state of a training run: one table for the primitives and an
/// independent table row per camera, each with its own step counter since a
/// camera is only updated when its image is drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub primitives: AdamTable<GAUSSIAN_FIELDS>,
    pub cameras: Vec<AdamTable<APPEARANCE_FIELDS>>,
}

impl OptimState {
    pub fn new(primitives: usize, cameras: usize) -> Self {
        Self {
            primitives: AdamTable::new(primitives),
            cameras: (0..cameras).map(|_| AdamTable::new(1)).collect(),
        }
    }
}
