//! Named persistent parameters, the Adam update, and the central-difference
//! gradient oracle used to audit the tape.

use std::collections::BTreeMap;

use super::tape::Tape;
use super::{NodeId, Tensor};

/// Adam hyperparameters. Betas and epsilon are the optimizer's conventional
/// defaults; only the learning rate is problem-specific.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// A named tensor with persistent identity across steps plus its Adam moment
/// buffers.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    moment1: Tensor,
    moment2: Tensor,
    steps: u64,
}

/// The full parameter vector of a model, indexed densely in registration
/// order. Registration order is what save files and gradient maps key on.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn register(&mut self, name: &str, value: Tensor) -> usize {
        assert!(
            self.index_of(name).is_none(),
            "parameter {name} registered twice"
        );
        let (rows, cols) = value.shape();
        self.params.push(Parameter {
            name: name.to_string(),
            moment1: Tensor::zeros(rows, cols),
            moment2: Tensor::zeros(rows, cols),
            steps: 0,
            value,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, index: usize) -> &Parameter {
        &self.params[index]
    }

    pub fn value_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.params[index].value
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }
}

/// Gradients keyed by parameter index; parameters absent from the map have
/// zero gradient.
#[derive(Clone, Debug, Default)]
pub struct GradientMap {
    grads: BTreeMap<usize, Tensor>,
}

impl GradientMap {
    pub fn new() -> Self {
        GradientMap::default()
    }

    pub fn accumulate(&mut self, index: usize, grad: &Tensor) {
        match self.grads.get_mut(&index) {
            Some(existing) => {
                assert_eq!(existing.shape(), grad.shape(), "gradient shape changed");
                for (slot, &g) in existing.data_mut().iter_mut().zip(grad.data()) {
                    *slot += g;
                }
            }
            None => {
                self.grads.insert(index, grad.clone());
            }
        }
    }

    pub fn get(&self, index: usize) -> Option<&Tensor> {
        self.grads.get(&index)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Tensor)> {
        self.grads.iter().map(|(&i, t)| (i, t))
    }

    pub fn norm(&self) -> f64 {
        self.grads
            .values()
            .map(Tensor::squared_norm)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.values().all(Tensor::is_finite)
    }
}

/// One bias-corrected Adam update over every parameter carrying a gradient.
pub fn adam_step(set: &mut ParamSet, grads: &GradientMap, cfg: &AdamConfig) {
    for (index, grad) in grads.iter() {
        let param = &mut set.params[index];
        assert_eq!(
            param.value.shape(),
            grad.shape(),
            "gradient shape mismatch for {}",
            param.name
        );
        param.steps += 1;
        let t = param.steps as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..grad.len() {
            let g = grad.data()[i];
            let m = &mut param.moment1.data_mut()[i];
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            let v = &mut param.moment2.data_mut()[i];
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            param.value.data_mut()[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

/// Compares the tape's gradients of `build`'s scalar output against central
/// finite differences, returning the maximum relative error
/// `|g_ad - g_fd| / max(1, |g_fd|)` over every parameter coordinate.
/// `build` must be deterministic; the parameter set is restored afterwards.
pub fn finite_diff_check<F>(build: F, set: &mut ParamSet, eps: f64) -> f64
where
    F: Fn(&mut Tape, &ParamSet) -> NodeId,
{
    let evaluate = |set: &ParamSet| -> f64 {
        let mut tape = Tape::new();
        let out = build(&mut tape, set);
        tape.value(out).data()[0]
    };

    let mut tape = Tape::new();
    let loss = build(&mut tape, set);
    let grads = tape.backward(loss).expect("scalar loss");

    let mut max_err = 0.0f64;
    for index in 0..set.len() {
        for coord in 0..set.get(index).value.len() {
            let original = set.get(index).value.data()[coord];
            set.value_mut(index).data_mut()[coord] = original + eps;
            let plus = evaluate(set);
            set.value_mut(index).data_mut()[coord] = original - eps;
            let minus = evaluate(set);
            set.value_mut(index).data_mut()[coord] = original;

            let g_fd = (plus - minus) / (2.0 * eps);
            let g_ad = grads.get(index).map(|t| t.data()[coord]).unwrap_or(0.0);
            let err = (g_ad - g_fd).abs() / 1.0f64.max(g_fd.abs());
            max_err = max_err.max(err);
        }
    }
    max_err
}
