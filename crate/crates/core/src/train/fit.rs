//! Training loops for the three objectives.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::train::adam::{adam_step, Adam, AdamConfig, BoxMode};
use crate::train::filter::GraphFilter;
use crate::train::loss::{loss_frq, loss_iso_encoded, FrqOutput};
use crate::train::model::{GomkcnModel, Samples};
use crate::tse::{encode, SubgraphEmbedding};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Iso,
    Frq,
    #[default]
    CrossEntropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// How filter parameters are held in `[0, 1]`.
    pub box_mode: BoxMode,
    pub seed: u64,
    pub loss: LossKind,
    /// Keep the parameters of the epoch with the best validation accuracy.
    pub select_on_validation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 200,
            learning_rate: 0.1,
            batch_size: 512,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            box_mode: adam.box_mode,
            seed: 0,
            loss: LossKind::CrossEntropy,
            select_on_validation: true,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            box_mode: self.box_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        self.adam().validate()
    }

    fn expect_loss(&self, kind: LossKind) -> Result<()> {
        if self.loss != kind {
            return Err(Error::config(format!("loss kind {:?} does not fit this trainer ({kind:?})", self.loss)));
        }
        Ok(())
    }
}

/// Per-epoch record for the metrics stream.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub kappa_mean: Option<f64>,
    pub kappa_max: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct IsoRun {
    /// κ before each epoch's update, then once more after the last one.
    pub kappa: Vec<f64>,
}

impl IsoRun {
    pub fn final_kappa(&self) -> f64 {
        *self.kappa.last().expect("at least one entry")
    }
}

/// Maximizes `κ(target, filter)` by projected Adam, one step per epoch.
pub fn train_iso(
    target: &Graph,
    filter: &mut GraphFilter,
    t: usize,
    tau: f64,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&EpochMetrics),
) -> Result<IsoRun> {
    cfg.validate()?;
    cfg.expect_loss(LossKind::Iso)?;
    let emb = encode(target, t);
    let mut adam = Adam::new(cfg.adam());
    let mut kappa = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let out = loss_iso_encoded(&emb, filter, t, tau)?;
        kappa.push(out.kappa);
        observe(&EpochMetrics {
            epoch,
            loss: out.loss,
            kappa_mean: Some(out.kappa),
            kappa_max: Some(out.kappa),
            ..EpochMetrics::default()
        });
        adam_step(std::slice::from_mut(filter), std::slice::from_ref(&out.gradient), &mut adam, 0, epoch, 0)?;
    }
    kappa.push(loss_iso_encoded(&emb, filter, t, tau)?.kappa);
    Ok(IsoRun { kappa })
}

#[derive(Clone, Debug)]
pub struct FrqRun {
    pub losses: Vec<f64>,
    /// Evaluation after the last update.
    pub last: FrqOutput,
}

/// Minimizes the frequency loss over all subgraphs, full batch, one step
/// per epoch.
pub fn train_frq(
    subgraphs: &[SubgraphEmbedding],
    filters: &mut [GraphFilter],
    t: usize,
    tau: f64,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&EpochMetrics),
) -> Result<FrqRun> {
    cfg.validate()?;
    cfg.expect_loss(LossKind::Frq)?;
    let mut adam = Adam::new(cfg.adam());
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let out = loss_frq(subgraphs, filters, t, tau)?;
        losses.push(out.loss);
        let n = out.best_kappa.len().max(1) as f64;
        observe(&EpochMetrics {
            epoch,
            loss: out.loss,
            kappa_mean: Some(out.best_kappa.iter().sum::<f64>() / n),
            kappa_max: out.best_kappa.iter().copied().reduce(f64::max),
            ..EpochMetrics::default()
        });
        adam_step(filters, &out.gradients, &mut adam, 0, epoch, 0)?;
    }
    let last = loss_frq(subgraphs, filters, t, tau)?;
    Ok(FrqRun { losses, last })
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassifierRun {
    pub best_epoch: usize,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub history: Vec<EpochMetrics>,
}

/// Mini-batch training of a classification model. With validation
/// selection on, the returned model holds the best-validation parameters
/// (earliest epoch on ties).
pub fn train_classifier(
    model: &mut GomkcnModel,
    samples: &Samples<'_>,
    split: &Split,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&EpochMetrics),
) -> Result<ClassifierRun> {
    cfg.validate()?;
    cfg.expect_loss(LossKind::CrossEntropy)?;
    split.validate(samples.len())?;
    if split.train.is_empty() {
        return Err(Error::data("empty training split"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam());
    let mut order = split.train.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    let use_val = cfg.select_on_validation && !split.val.is_empty();
    let mut best: Option<(f64, usize, GomkcnModel)> = None;
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let out = model.loss_classification(samples, batch, Some(&mut rng))?;
            if !out.loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    step,
                    message: format!("loss became {}", out.loss),
                });
            }
            loss_sum += out.loss * batch.len() as f64;
            model.apply_gradients(&out.tape, &mut adam, epoch, step)?;
            step += 1;
        }
        let val_accuracy = if split.val.is_empty() {
            None
        } else {
            Some(model.accuracy(samples, &split.val)?)
        };
        let metrics = EpochMetrics {
            epoch,
            loss: loss_sum / order.len() as f64,
            val_accuracy,
            ..EpochMetrics::default()
        };
        log::debug!("epoch {epoch}: loss {:.5} val {:?}", metrics.loss, metrics.val_accuracy);
        observe(&metrics);
        history.push(metrics);
        if use_val {
            let acc = val_accuracy.expect("validation split present");
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, model.clone()));
            }
        }
    }
    let best_epoch = match best {
        Some((_, epoch, params)) => {
            *model = params;
            epoch
        }
        None => cfg.epochs - 1,
    };
    Ok(ClassifierRun {
        best_epoch,
        train_accuracy: model.accuracy(samples, &split.train)?,
        val_accuracy: if split.val.is_empty() { None } else { Some(model.accuracy(samples, &split.val)?) },
        test_accuracy: if split.test.is_empty() { None } else { Some(model.accuracy(samples, &split.test)?) },
        history,
    })
}
