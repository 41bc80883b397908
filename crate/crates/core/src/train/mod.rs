//! Theory-guided training: data misfit plus flow-residual, boundary and
//! initial-condition penalties, minimized with Adam.

mod adam;
mod collocation;
mod data;
mod loss;
mod optimize;

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};
pub use collocation::{sample_collocation, CollocationCounts, CollocationSet, PointBlock, Sampler};
pub use data::{build_training_set, LabeledSet, Realization};
pub use loss::{mse_components, pde_residual, total_loss, Components, HeadMap, Physics};
pub use optimize::{train, train_with, transfer_finetune, LossRecord, TrainingOutcome};

use crate::error::{invalid, Error, Result};
use crate::grid::BoundarySpec;
use crate::mlp::Affine;

/// Weights of the five loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub data: f64,
    pub pde: f64,
    pub dirichlet: f64,
    pub neumann: f64,
    pub initial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            data: 1.0,
            pde: 1.0,
            dirichlet: 1.0,
            neumann: 1.0,
            initial: 1.0,
        }
    }
}

impl LossWeights {
    /// Physics-only weighting: no data term and a stronger residual.
    pub fn label_free() -> Self {
        LossWeights {
            data: 0.0,
            pde: 10.0,
            ..Self::default()
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.data, self.pde, self.dirichlet, self.neumann, self.initial]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.to_array();
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

/// How the constant-head ends are imposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcMode {
    /// Built into the output transform; the Dirichlet loss is dropped.
    #[default]
    Hard,
    /// Penalized through the Dirichlet loss term.
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSizes {
    pub labeled: usize,
    pub collocation: usize,
}

impl Default for BatchSizes {
    fn default() -> Self {
        BatchSizes {
            labeled: 4096,
            collocation: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub batch: BatchSizes,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub bc_mode: BcMode,
    /// Points per term in the fixed subsample behind the loss history.
    #[serde(default = "default_history_sample")]
    pub history_sample: usize,
    /// Multiplier on the flow residual; `t_end / S_s` when unset.
    #[serde(default)]
    pub pde_scale: Option<f64>,
    /// Multiplier on the no-flow residual; the domain height when unset.
    #[serde(default)]
    pub neumann_scale: Option<f64>,
}

fn default_history_sample() -> usize {
    100_000
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 2000,
            learning_rate: 1e-3,
            batch: BatchSizes::default(),
            adam: AdamConfig::default(),
            seed: 0,
            bc_mode: BcMode::Hard,
            history_sample: default_history_sample(),
            pde_scale: None,
            neumann_scale: None,
        }
    }
}

impl TrainingConfig {
    /// Checks the invariants of a configuration document. [`train`] itself
    /// also accepts zero epochs and a zero learning rate.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        self.validate_run()
    }

    pub(crate) fn validate_run(&self) -> Result<()> {
        if self.batch.labeled == 0 || self.batch.collocation == 0 {
            return Err(Error::Config("batch sizes must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and nonnegative".into()));
        }
        if self.history_sample == 0 {
            return Err(Error::Config("history_sample must be at least 1".into()));
        }
        for s in [self.pde_scale, self.neumann_scale].into_iter().flatten() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config("residual scales must be positive".into()));
            }
        }
        self.adam.validate()
    }
}

/// Distribution of one scalar composite input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputDistribution {
    Normal { mean: f64, variance: f64 },
    Uniform { lo: f64, hi: f64 },
    Fixed { value: f64 },
}

impl InputDistribution {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            InputDistribution::Normal { mean, variance } => mean.is_finite() && variance > 0.0 && variance.is_finite(),
            InputDistribution::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            InputDistribution::Fixed { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config("invalid composite input distribution".into()))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InputDistribution::Normal { mean, variance } => {
                // validated: the standard deviation is positive
                Normal::new(mean, variance.sqrt()).map_or(mean, |d| d.sample(rng))
            }
            InputDistribution::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            InputDistribution::Fixed { value } => value,
        }
    }

    /// Network input map: two standard deviations or the full interval to
    /// unit scale.
    pub fn normalizer(&self) -> Affine {
        match *self {
            InputDistribution::Normal { mean, variance } => {
                let scale = 1.0 / (2.0 * variance.sqrt());
                Affine {
                    scale,
                    shift: -mean * scale,
                }
            }
            InputDistribution::Uniform { lo, hi } => Affine::unit(lo, hi),
            InputDistribution::Fixed { value } => Affine {
                scale: 1.0,
                shift: -value,
            },
        }
    }
}

/// Extra network inputs `[B1, B2, variance]` of the composite surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeInputSpec {
    pub enabled: bool,
    pub left_head: InputDistribution,
    pub right_head: InputDistribution,
    pub variance: InputDistribution,
}

impl Default for CompositeInputSpec {
    fn default() -> Self {
        CompositeInputSpec {
            enabled: false,
            left_head: InputDistribution::Normal {
                mean: 202.0,
                variance: 0.25,
            },
            right_head: InputDistribution::Normal {
                mean: 200.0,
                variance: 0.25,
            },
            variance: InputDistribution::Uniform { lo: 1.0, hi: 2.0 },
        }
    }
}

impl CompositeInputSpec {
    pub const WIDTH: usize = 3;

    pub fn validate(&self) -> Result<()> {
        self.left_head.validate()?;
        self.right_head.validate()?;
        self.variance.validate()?;
        let positive = match self.variance {
            InputDistribution::Uniform { lo, .. } => lo > 0.0,
            InputDistribution::Fixed { value } => value > 0.0,
            InputDistribution::Normal { .. } => false,
        };
        if !positive {
            return Err(Error::Config(
                "field variance must be a positive interval or a positive fixed value".into(),
            ));
        }
        Ok(())
    }

    /// Draws `[B1, B2, variance]` in that order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        let b1 = self.left_head.sample(rng);
        let b2 = self.right_head.sample(rng);
        let v = self.variance.sample(rng);
        [b1, b2, v]
    }

    pub fn normalizers(&self) -> Vec<Affine> {
        vec![
            self.left_head.normalizer(),
            self.right_head.normalizer(),
            self.variance.normalizer(),
        ]
    }

    /// Same boundary distributions with the variance pinned at `value`.
    pub fn with_fixed_variance(&self, value: f64) -> Self {
        CompositeInputSpec {
            variance: InputDistribution::Fixed { value },
            ..*self
        }
    }
}

/// Boundary conditions for one composite draw: the ends take `B1`, `B2`
/// and the initial head moves with the right end.
pub fn composite_boundary(base: &BoundarySpec, extras: &[f64; 3]) -> BoundarySpec {
    BoundarySpec {
        h_left: extras[0],
        h_right: extras[1],
        h_init: base.h_init + (extras[1] - base.h_right),
        ..*base
    }
}

pub(crate) fn check_width(width: usize, expected: usize, what: &str) -> Result<()> {
    if width != expected {
        return Err(invalid(alloc::format!("{what} rows have width {width}, the network expects {expected}")));
    }
    Ok(())
}
