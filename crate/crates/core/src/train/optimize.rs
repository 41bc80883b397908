//! Minibatch Adam over fixed point sets.

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::collocation::{CollocationSet, PointBlock};
use super::data::LabeledSet;
use super::loss::{active_terms, term_gradient, term_mean, total_loss, Components, Physics, Term};
use super::{check_width, LossWeights, TrainingConfig};
use crate::error::{Error, Result};
use crate::mlp::{NetworkSpec, Parameters};

/// Loss after one epoch, measured on the fixed evaluation subsample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub total: f64,
    pub components: Components,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub params: Parameters,
    pub history: Vec<LossRecord>,
    pub steps_per_epoch: usize,
}

/// Trains from `init`. See [`train_with`].
pub fn train(
    spec: &NetworkSpec,
    init: &Parameters,
    labeled: &LabeledSet,
    colloc: &CollocationSet,
    weights: &LossWeights,
    config: &TrainingConfig,
    physics: &Physics,
) -> Result<TrainingOutcome> {
    train_with(spec, init, labeled, colloc, weights, config, physics, |_| {})
}

/// Each epoch shuffles every active point set and cuts it into the same
/// number of contiguous minibatches, so every point is visited once per
/// epoch. That number is the largest `ceil(len / batch)` over the active
/// sets, using the labeled batch size for the data term and the collocation
/// batch size for the others. `on_epoch` sees each history record.
#[allow(clippy::too_many_arguments)]
pub fn train_with<F: FnMut(&LossRecord)>(
    spec: &NetworkSpec,
    init: &Parameters,
    labeled: &LabeledSet,
    colloc: &CollocationSet,
    weights: &LossWeights,
    config: &TrainingConfig,
    physics: &Physics,
    mut on_epoch: F,
) -> Result<TrainingOutcome> {
    config.validate_run()?;
    spec.validate()?;
    init.check(spec)?;
    let terms = active_terms(weights, physics, labeled, colloc)?;
    let blocks: Vec<&PointBlock> = terms.iter().map(|t| t.block(labeled, colloc)).collect();
    for (t, b) in terms.iter().zip(&blocks) {
        check_width(b.width, spec.input_width, t.name())?;
    }
    let sizes: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
    let steps = terms
        .iter()
        .zip(&sizes)
        .map(|(t, n)| {
            let b = if *t == Term::Data {
                config.batch.labeled
            } else {
                config.batch.collocation
            };
            n.div_ceil(b)
        })
        .max()
        .unwrap_or(1)
        .max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut eval_rng = rng.clone();
    eval_rng.set_stream(1);
    let eval: Vec<PointBlock> = blocks
        .iter()
        .map(|b| {
            let k = b.len().min(config.history_sample);
            let mut idx = rand::seq::index::sample(&mut eval_rng, b.len(), k).into_vec();
            idx.sort_unstable();
            b.gather(&idx)
        })
        .collect();

    let mut perms: Vec<Vec<usize>> = sizes.iter().map(|&n| (0..n).collect()).collect();
    let mut params = init.clone();
    let mut adam = Adam::new(params.len(), config.learning_rate, config.adam);
    let mut grad = vec![0.0; params.len()];
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        for p in perms.iter_mut() {
            p.shuffle(&mut rng);
        }
        for step in 0..steps {
            let non_finite = |e: Error| match e {
                Error::NonFinitePoint { .. } => Error::NonFiniteLoss { epoch, batch: step },
                other => other,
            };
            grad.fill(0.0);
            for (k, term) in terms.iter().enumerate() {
                let n = sizes[k];
                let (lo, hi) = (step * n / steps, (step + 1) * n / steps);
                if lo == hi {
                    continue;
                }
                let batch = blocks[k].gather(&perms[k][lo..hi]);
                let (_, g) = term_gradient(*term, spec, &params, physics, &batch, term.weight(weights))
                    .map_err(non_finite)?;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: step });
            }
            adam.step(&mut params.values, &grad);
        }
        let mut c = Components::default();
        for (term, block) in terms.iter().zip(&eval) {
            c.set(*term, term_mean(*term, spec, &params, physics, block)?);
        }
        let total = total_loss(&c, &weights_for(&terms, weights));
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: steps });
        }
        let record = LossRecord {
            epoch,
            total,
            components: c,
        };
        on_epoch(&record);
        history.push(record);
    }
    Ok(TrainingOutcome {
        params,
        history,
        steps_per_epoch: steps,
    })
}

/// Weights with inactive terms zeroed.
fn weights_for(terms: &[Term], w: &LossWeights) -> LossWeights {
    let mut a = [0.0; 5];
    for t in terms {
        a[*t as usize] = t.weight(w);
    }
    LossWeights {
        data: a[0],
        pde: a[1],
        dirichlet: a[2],
        neumann: a[3],
        initial: a[4],
    }
}

/// Label-free fine-tuning of a pretrained network on a new collocation set.
/// The pretrained parameters are left untouched.
pub fn transfer_finetune(
    spec: &NetworkSpec,
    pretrained: &Parameters,
    target: &CollocationSet,
    weights: &LossWeights,
    config: &TrainingConfig,
    physics: &Physics,
) -> Result<TrainingOutcome> {
    let w = LossWeights { data: 0.0, ..*weights };
    let none = LabeledSet::empty(spec.input_width);
    train(spec, pretrained, &none, target, &w, config, physics)
}
