//! First-order optimisers over a [`ParamStore`].

use serde::{Deserialize, Serialize};

use crate::tensor::{GradStore, ParamStore};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    steps: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &ParamStore) -> Self {
        let moments = || -> Vec<Vec<f64>> {
            match kind {
                OptimizerKind::Adam => params
                    .iter()
                    .map(|(_, _, t)| vec![0.0; t.numel()])
                    .collect(),
                OptimizerKind::Sgd => Vec::new(),
            }
        };
        Self {
            kind,
            learning_rate,
            steps: 0,
            m: moments(),
            v: moments(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &GradStore) {
        self.steps += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (id, g) in grads.iter() {
                    for (p, g) in params.get_mut(id).data_mut().iter_mut().zip(g.data()) {
                        *p -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                for (id, g) in grads.iter() {
                    let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
                    let p = params.get_mut(id).data_mut();
                    for i in 0..p.len() {
                        let gi = g.data()[i];
                        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * gi;
                        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * gi * gi;
                        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPSILON);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Graph, Tensor};

    fn quadratic_step(kind: OptimizerKind, lr: f64, steps: usize) -> f64 {
        let mut params = ParamStore::new();
        let id = params.add("x", Tensor::vector(vec![3.0])).unwrap();
        let mut opt = Optimizer::new(kind, lr, &params);
        for _ in 0..steps {
            let mut grads = GradStore::zeros_like(&params);
            {
                let mut g = Graph::new(&params);
                let x = g.param(id);
                let loss = g.squared_error(x, 1.0).unwrap();
                g.backward(loss, &mut grads).unwrap();
            }
            opt.step(&mut params, &grads);
        }
        params.get(id).data()[0]
    }

    #[test]
    fn sgd_single_step() {
        // d/dx (x-1)^2 = 4 at x = 3
        assert!((quadratic_step(OptimizerKind::Sgd, 0.1, 1) - 2.6).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let x = quadratic_step(OptimizerKind::Adam, 0.01, 1);
        assert!((x - 2.99).abs() < 1e-9, "{x}");
    }

    #[test]
    fn both_converge() {
        assert!((quadratic_step(OptimizerKind::Sgd, 0.1, 100) - 1.0).abs() < 1e-6);
        assert!((quadratic_step(OptimizerKind::Adam, 0.05, 2000) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        assert_eq!(quadratic_step(OptimizerKind::Adam, 0.0, 5), 3.0);
        assert_eq!(quadratic_step(OptimizerKind::Sgd, 0.0, 5), 3.0);
    }
}
