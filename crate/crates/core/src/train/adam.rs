use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter length changed");
        assert_eq!(grads.len(), self.m.len(), "gradient length mismatch");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Free-function form of [`Adam::step`].
pub fn adam_step(state: &mut Adam, params: &mut [f64], grads: &[f64], lr: f64) {
    state.step(params, grads, lr);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_bounded_by_lr() {
        let mut adam = Adam::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        let before = p.clone();
        adam.step(&mut p, &[10.0, -0.001, 3.0], 0.01);
        for (a, b) in p.iter().zip(&before) {
            assert!((a - b).abs() <= 0.01 * (1.0 + 1e-9));
        }
        // sign structure: each coordinate moves against its gradient
        assert!(p[0] < before[0] && p[1] > before[1] && p[2] < before[2]);
    }

    #[test]
    fn zero_gradients_do_nothing() {
        let mut adam = Adam::new(2);
        let mut p = vec![0.3, -0.7];
        for _ in 0..100 {
            adam_step(&mut adam, &mut p, &[0.0, 0.0], 0.1);
        }
        assert_eq!(p, vec![0.3, -0.7]);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let target = [1.5, -0.25, 3.0];
        let mut adam = Adam::new(3);
        let mut p = vec![0.0; 3];
        let mut converged_at = None;
        for step in 0..5000 {
            let g: Vec<f64> = p.iter().zip(&target).map(|(x, t)| 2.0 * (x - t)).collect();
            adam.step(&mut p, &g, 1e-2);
            if p.iter().zip(&target).all(|(x, t)| (x - t).abs() < 1e-6) {
                converged_at = Some(step);
                break;
            }
        }
        assert!(converged_at.is_some(), "{p:?}");
    }
}
