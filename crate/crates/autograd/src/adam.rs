use std::collections::BTreeMap;

use crate::tensor::Tensor;
use crate::var::{Gradients, Var};

/// Adam with bias correction and no weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: u64,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self { lr, beta1, beta2, eps: 1e-8, steps: 0, first: BTreeMap::new(), second: BTreeMap::new() }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update to every listed parameter. Parameters missing from
    /// `grads` are treated as having zero gradient.
    pub fn step(&mut self, params: Vec<(String, &mut Var)>, grads: &Gradients) {
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, var) in params {
            let g = grads.get_or_zeros(var);
            let shape = var.shape().to_vec();
            let m = self.first.entry(name.clone()).or_insert_with(|| Tensor::zeros(shape.clone()));
            let v = self.second.entry(name).or_insert_with(|| Tensor::zeros(shape.clone()));
            let mut value = var.value().clone();
            let (b1, b2) = (self.beta1, self.beta2);
            for (((p, &gi), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                *p -= self.lr * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
            }
            *var = Var::param(value);
        }
    }

    /// Moment estimates as named tensors (`m.<param>`, `v.<param>`).
    pub fn state(&self) -> Vec<(String, Tensor)> {
        let m = self.first.iter().map(|(k, t)| (format!("m.{k}"), t.clone()));
        let v = self.second.iter().map(|(k, t)| (format!("v.{k}"), t.clone()));
        m.chain(v).collect()
    }

    /// Restores moments written by [`Adam::state`] together with the step count.
    pub fn load_state(&mut self, steps: u64, state: impl IntoIterator<Item = (String, Tensor)>) {
        self.steps = steps;
        self.first.clear();
        self.second.clear();
        for (k, t) in state {
            if let Some(name) = k.strip_prefix("m.") {
                self.first.insert(name.to_string(), t);
            } else if let Some(name) = k.strip_prefix("v.") {
                self.second.insert(name.to_string(), t);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = Var::param(Tensor::new([2], vec![1.0, -1.0]));
        let loss = p.mul(&Var::constant(Tensor::new([2], vec![3.0, -0.5]))).sum_all();
        let g = loss.backward();
        let mut adam = Adam::new(0.1, 0.9, 0.999);
        adam.step(vec![("p".into(), &mut p)], &g);
        let d = p.value().data();
        assert!((d[0] - 0.9).abs() < 1e-6);
        assert!((d[1] + 0.9).abs() < 1e-6);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Var::param(Tensor::new([3], vec![4.0, -2.0, 0.5]));
        let mut adam = Adam::new(0.05, 0.9, 0.999);
        for _ in 0..2000 {
            let g = p.sqr().sum_all().backward();
            adam.step(vec![("p".into(), &mut p)], &g);
        }
        assert!(p.value().max_abs() < 1e-2, "{:?}", p.value());
    }
}
