use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::FilterGradient;
use crate::train::filter::GraphFilter;

/// How box-constrained filter parameters are kept inside `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxMode {
    /// Plain Adam step, then clamp.
    #[default]
    Clamp,
    /// Adam runs on logits; the parameter is their sigmoid. Stays strictly
    /// inside the box and tolerates large learning rates.
    Logistic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub box_mode: BoxMode,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            box_mode: BoxMode::Clamp,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("Adam epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    /// Logits for [`BoxMode::Logistic`] slots.
    logits: Vec<f64>,
}

/// Logit clamp, keeping re-derived logits finite for saturated parameters.
const LOGIT_EDGE: f64 = 1e-9;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(LOGIT_EDGE, 1.0 - LOGIT_EDGE);
    (p / (1.0 - p)).ln()
}

/// Adam over any number of parameter slots. Call [`tick`](Adam::tick) once
/// per optimizer step, then [`update`](Adam::update) for every slot.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    slots: Vec<Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            slots: Vec::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn tick(&mut self) {
        self.step += 1;
    }

    fn slot(&mut self, slot: usize, len: usize) -> &mut Moments {
        if self.slots.len() <= slot {
            self.slots.resize_with(slot + 1, Moments::default);
        }
        let state = &mut self.slots[slot];
        if state.m.len() != len {
            state.m = vec![0.0; len];
            state.v = vec![0.0; len];
        }
        state
    }

    /// Descends along `grads` for the parameters stored in `slot`.
    pub fn update(&mut self, slot: usize, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        let (config, step) = (self.config, self.step);
        let state = self.slot(slot, params.len());
        descend(&config, step, &mut state.m, &mut state.v, params, grads);
    }

    /// Descends in logit space for parameters confined to `(0, 1)`; `grads`
    /// are taken with respect to the parameters themselves. Logits are kept
    /// between calls and re-derived if the parameters were changed outside.
    pub fn update_logistic(&mut self, slot: usize, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        let (config, step) = (self.config, self.step);
        let state = self.slot(slot, params.len());
        if state.logits.len() != params.len() {
            state.logits = params.iter().map(|&p| logit(p)).collect();
        }
        for (z, &p) in state.logits.iter_mut().zip(params.iter()) {
            if sigmoid(*z) != p {
                *z = logit(p);
            }
        }
        let dz: Vec<f64> = grads
            .iter()
            .zip(&state.logits)
            .map(|(&g, &z)| {
                let s = sigmoid(z);
                g * s * (1.0 - s)
            })
            .collect();
        descend(&config, step, &mut state.m, &mut state.v, &mut state.logits, &dz);
        for (p, &z) in params.iter_mut().zip(&state.logits) {
            *p = sigmoid(z);
        }
    }

    pub fn update_matrix(&mut self, slot: usize, params: &mut DMatrix<f64>, grads: &DMatrix<f64>) {
        self.update(slot, params.as_mut_slice(), grads.as_slice());
    }
}

fn descend(config: &AdamConfig, step: u64, m: &mut [f64], v: &mut [f64], params: &mut [f64], grads: &[f64]) {
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        eps,
        ..
    } = *config;
    let step = step.max(1) as i32;
    let c1 = 1.0 - beta1.powi(step);
    let c2 = 1.0 - beta2.powi(step);
    for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(m.iter_mut().zip(v.iter_mut())) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + eps);
    }
}

/// One projected Adam step over a set of filters, descending on `grads`.
/// Slots `2i` and `2i + 1` hold filter `i`'s adjacency and features, offset
/// by `first_slot`.
pub fn adam_step(
    filters: &mut [GraphFilter],
    grads: &[FilterGradient],
    adam: &mut Adam,
    first_slot: usize,
    epoch: usize,
    step: usize,
) -> Result<()> {
    if filters.len() != grads.len() {
        return Err(Error::shape(format!("{} gradients for {} filters", grads.len(), filters.len())));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Training {
            epoch,
            step,
            message: format!("non-finite gradient for filter {i}"),
        });
    }
    adam.tick();
    update_filters(filters, grads, adam, first_slot);
    Ok(())
}

/// Applies Adam updates and projection without advancing the step counter.
pub(crate) fn update_filters(filters: &mut [GraphFilter], grads: &[FilterGradient], adam: &mut Adam, first_slot: usize) {
    for (i, (filter, grad)) in filters.iter_mut().zip(grads).enumerate() {
        let flat = filter.gradient_to_params(grad);
        let (upper_grad, feat_grad) = flat.split_at(filter.nodes() * filter.nodes().saturating_sub(1) / 2);
        let bounded = filter.bounded_features();
        let (upper, features) = filter.param_slices_mut();
        match adam.config.box_mode {
            BoxMode::Clamp => {
                adam.update(first_slot + 2 * i, upper, upper_grad);
                adam.update(first_slot + 2 * i + 1, features, feat_grad);
            }
            BoxMode::Logistic => {
                adam.update_logistic(first_slot + 2 * i, upper, upper_grad);
                if bounded {
                    adam.update_logistic(first_slot + 2 * i + 1, features, feat_grad);
                } else {
                    adam.update(first_slot + 2 * i + 1, features, feat_grad);
                }
            }
        }
        filter.project();
    }
}
