//! First-order update rules for the posterior parameters.

use crate::registry::Registry;

pub trait StepRule: Send {
    fn name(&self) -> &'static str;
    /// In-place update `params ← params − lr · direction(grad)`.
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64);
}

/// Plain gradient descent.
#[derive(Debug, Default)]
pub struct Sgd;

impl StepRule for Sgd {
    fn name(&self) -> &'static str {
        "sgd"
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        for (p, g) in params.iter_mut().zip(grad) {
            *p -= lr * g;
        }
    }
}

/// RMSprop with decay 0.9 and `ε = 1e-8`.
#[derive(Debug)]
pub struct RmsProp {
    pub decay: f64,
    pub eps: f64,
    avg: Vec<f64>,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self {
            decay: 0.9,
            eps: 1e-8,
            avg: Vec::new(),
        }
    }
}

impl StepRule for RmsProp {
    fn name(&self) -> &'static str {
        "rmsprop"
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        if self.avg.len() != grad.len() {
            self.avg = vec![0.0; grad.len()];
        }
        for ((p, g), a) in params.iter_mut().zip(grad).zip(&mut self.avg) {
            *a = self.decay * *a + (1.0 - self.decay) * g * g;
            *p -= lr * g / (a.sqrt() + self.eps);
        }
    }
}

pub fn step_rules() -> Registry<dyn StepRule> {
    let mut reg: Registry<dyn StepRule> = Registry::new("step rule");
    reg.register("sgd", || Box::new(Sgd))
        .register("rmsprop", || Box::<RmsProp>::default());
    reg
}

pub fn step_rule(name: &str) -> crate::Result<Box<dyn StepRule>> {
    step_rules().create(name)
}
