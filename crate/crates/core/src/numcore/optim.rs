use serde::{Deserialize, Serialize};

use super::graph::ParamStore;
use super::tensor::Tensor;

/// Bias-corrected Adam.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamStore, learning_rate: f64) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let g = grads[i].data();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *w -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Outcome of feeding one validation loss to [`EarlyStopping`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopSignal {
    Improved,
    NoImprovement,
    Stop,
}

/// Patience-based early stopping that keeps a snapshot of the best state.
#[derive(Debug, Clone)]
pub struct EarlyStopping<T> {
    patience: usize,
    min_delta: f64,
    best_loss: f64,
    best_epoch: Option<usize>,
    best: Option<T>,
    wait: usize,
    epoch: usize,
}

impl<T: Clone> EarlyStopping<T> {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience: patience.max(1),
            min_delta,
            best_loss: f64::INFINITY,
            best_epoch: None,
            best: None,
            wait: 0,
            epoch: 0,
        }
    }

    /// Records the loss of the next epoch. Improvement requires the loss to
    /// drop strictly below `best - min_delta`.
    pub fn observe(&mut self, loss: f64, snapshot: impl FnOnce() -> T) -> StopSignal {
        self.epoch += 1;
        if loss < self.best_loss - self.min_delta {
            self.best_loss = loss;
            self.best_epoch = Some(self.epoch);
            self.best = Some(snapshot());
            self.wait = 0;
            return StopSignal::Improved;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            StopSignal::Stop
        } else {
            StopSignal::NoImprovement
        }
    }

    /// 1-based epoch of the best loss.
    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn into_best(self) -> Option<T> {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::from_vec(values.to_vec()));
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = store(&[1.0, -2.0]);
        let mut adam = AdamState::new(&p, 1e-3);
        adam.step(&mut p, &[Tensor::zeros(&[2])]);
        assert_eq!(p.get(0).data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate_times_sign() {
        // m̂ = g and v̂ = g² after bias correction, so Δ = lr·g/(|g|+ε).
        let mut p = store(&[0.0, 0.0, 0.0]);
        let lr = 1e-3;
        let mut adam = AdamState::new(&p, lr);
        let g = [3.0, -0.25, 1e-2];
        adam.step(&mut p, &[Tensor::from_vec(g.to_vec())]);
        for (w, gi) in p.get(0).data().iter().zip(g) {
            let expected = -lr * gi / (gi.abs() + 1e-8);
            assert!((w - expected).abs() < 1e-15, "{w} vs {expected}");
            assert!((w.abs() - lr).abs() < 1e-8);
        }
    }

    #[test]
    fn equal_gradients_update_equally() {
        let mut p = store(&[0.5, 0.5]);
        let mut adam = AdamState::new(&p, 1e-2);
        for _ in 0..5 {
            adam.step(&mut p, &[Tensor::from_vec(vec![0.3, 0.3])]);
        }
        assert_eq!(p.get(0).data()[0], p.get(0).data()[1]);
        assert_eq!(adam.step_count(), 5);
    }

    #[test]
    fn strictly_decreasing_never_stops() {
        let mut es = EarlyStopping::new(2, 1e-5);
        for e in 0..50 {
            assert_eq!(es.observe(1.0 / (e + 1) as f64, || e), StopSignal::Improved);
        }
    }

    #[test]
    fn plateau_stops_after_patience_and_restores_first_epoch() {
        let mut es = EarlyStopping::new(3, 1e-5);
        let losses = [1.0, 1.1, 1.1, 1.1];
        let mut stopped_at = None;
        for (i, &l) in losses.iter().enumerate() {
            if es.observe(l, || format!("params@{}", i + 1)) == StopSignal::Stop {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(4));
        assert_eq!(es.best_epoch(), Some(1));
        assert_eq!(es.into_best().as_deref(), Some("params@1"));
    }

    #[test]
    fn improvement_of_exactly_min_delta_does_not_count() {
        let min_delta = 1e-5;
        let mut es = EarlyStopping::new(5, min_delta);
        es.observe(1.0, || 0);
        assert_eq!(es.observe(1.0 - min_delta, || 1), StopSignal::NoImprovement);
        assert_eq!(es.best_epoch(), Some(1));
    }
}
