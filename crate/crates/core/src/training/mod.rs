//! Cache self-training and material recovery.

mod adam;
mod loss;
mod material;
mod prior;

use serde::{Deserialize, Serialize};

use crate::cache::CacheArch;
use crate::error::{Error, Result};

pub use adam::AdamState;
pub use loss::{light_angle, loss_recons, loss_recons_weighted, loss_rough, loss_sfm, saw_weight, PixelLoss};
pub use material::{
    grad_material, grad_material_unbiased, optimize_materials, pixel_targets, GradEstimator, GradSettings, MaterialGrad,
    MaterialParams, MaterialRun, MaterialStepLog, PixelTarget,
};
pub use prior::{
    loss_prior, prior_targets, sample_prior_points, train_cache, training_normalizer, windowed_medians, CacheStepLog,
    CacheTrainer, PriorLoss, PriorSample,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Cache learning rate.
    pub lr: f64,
    pub material_lr: f64,
    /// Material learning rate at the last step as a fraction of `material_lr`
    /// (exponential decay).
    pub material_lr_decay: f64,
    pub batch_size: usize,
    pub steps: u64,
    /// Cache-only steps before material updates start.
    pub warmup_steps: u64,
    pub snapshot_every: u64,
    pub eps: f64,
    pub saw_a: f64,
    pub saw_b: f64,
    pub lambda_prior: f64,
    pub lambda_extra: f64,
    pub lambda_rough: f64,
    pub lambda_sfm: f64,
    pub seed: u64,
    /// Window for the moving-median loss summaries.
    pub window: usize,
    pub divergence_factor: f64,
    pub max_depth: u32,
    pub m: u32,
    /// Renders averaged into each pixel's loss-value estimate.
    pub value_spp: u32,
    pub analytic_direct: bool,
    pub init_albedo: f64,
    pub init_roughness: f64,
    pub cache: CacheArch,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            lr: 5e-4,
            material_lr: 5e-4,
            material_lr_decay: 1.0,
            batch_size: 512,
            steps: 20_000,
            warmup_steps: 2_000,
            snapshot_every: 512,
            eps: 1e-3,
            saw_a: 2.0,
            saw_b: 0.0,
            lambda_prior: 1.0,
            lambda_extra: 1.0,
            lambda_rough: 1e-2,
            lambda_sfm: 0.0,
            seed: 0,
            window: 50,
            divergence_factor: 1e3,
            max_depth: 6,
            m: 1,
            value_spp: 32,
            analytic_direct: false,
            init_albedo: 0.5,
            init_roughness: 0.5,
            cache: CacheArch::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        let pos = |x: f64| x.is_finite() && x > 0.0;
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !pos(self.lr) || !pos(self.material_lr) {
            return bad("learning rates must be positive");
        }
        if !(pos(self.material_lr_decay) && self.material_lr_decay <= 1.0) {
            return bad("material_lr_decay must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be positive");
        }
        if !pos(self.eps) {
            return bad("eps must be positive");
        }
        if !nonneg(self.saw_a) || !nonneg(self.saw_b) {
            return bad("saw slopes must be finite and non-negative");
        }
        for (name, v) in [
            ("lambda_prior", self.lambda_prior),
            ("lambda_extra", self.lambda_extra),
            ("lambda_rough", self.lambda_rough),
            ("lambda_sfm", self.lambda_sfm),
        ] {
            if !nonneg(v) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and non-negative")));
            }
        }
        if self.window == 0 {
            return bad("window must be positive");
        }
        if !(self.divergence_factor.is_finite() && self.divergence_factor > 1.0) {
            return bad("divergence_factor must exceed 1");
        }
        if self.max_depth == 0 || self.m == 0 || self.value_spp == 0 {
            return bad("max_depth, m and value_spp must be positive");
        }
        for v in [self.init_albedo, self.init_roughness] {
            if !(v > 0.0 && v < 1.0) {
                return bad("initial albedo and roughness must lie in (0, 1)");
            }
        }
        self.cache.validate()
    }
}
