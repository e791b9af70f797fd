// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use super::matrix::Matrix;
use super::model::Params;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with bias correction; one moment pair per named tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    step: i32,
    m: BTreeMap<String, Matrix>,
    v: BTreeMap<String, Matrix>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam { lr, step: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// Applies one update to every tensor that has a gradient.
    pub fn step(&mut self, params: &mut Params, grads: &BTreeMap<String, Matrix>) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        for (name, g) in grads {
            let w = params.tensors.get_mut(name).expect("gradient for a known tensor");
            let m = self.m.entry(name.clone()).or_insert_with(|| Matrix::zeros(g.rows(), g.cols()));
            let v = self.v.entry(name.clone()).or_insert_with(|| Matrix::zeros(g.rows(), g.cols()));
            for (((wi, gi), mi), vi) in w.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *wi -= self.lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> Params {
        Params { tensors: BTreeMap::from([("w".to_string(), Matrix::from_vec(1, 1, vec![x]))]) }
    }

    fn grad(g: f64) -> BTreeMap<String, Matrix> {
        BTreeMap::from([("w".to_string(), Matrix::from_vec(1, 1, vec![g]))])
    }

    #[test]
    fn zero_gradient_keeps_weights() {
        let mut p = scalar(1.5);
        let mut adam = Adam::new(0.1);
        adam.step(&mut p, &grad(0.0));
        assert_eq!(p.get("w").get(0, 0), 1.5);
    }

    #[test]
    fn first_step_is_sign_like() {
        let mut p = scalar(0.0);
        let mut adam = Adam::new(0.1);
        adam.step(&mut p, &grad(0.3));
        let expect = -0.1 * 0.3 / (0.3 + EPSILON);
        assert!((p.get("w").get(0, 0) - expect).abs() < 1e-15);
    }

    #[test]
    fn two_steps_match_scalar_reference() {
        let (lr, gs) = (0.05, [0.4, -0.2]);
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for (t, g) in gs.iter().enumerate() {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            w -= lr * mh / (vh.sqrt() + 1e-8);
        }
        let mut p = scalar(1.0);
        let mut adam = Adam::new(lr);
        for g in gs {
            adam.step(&mut p, &grad(g));
        }
        assert_eq!(p.get("w").get(0, 0), w);
    }
}
