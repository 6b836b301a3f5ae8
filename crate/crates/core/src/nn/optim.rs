use super::{Matrix, Param, ParamGroup, ParamStore};

/// Adam with decoupled weight decay, with one learning rate per
/// [`ParamGroup`].
#[derive(Clone, Debug)]
pub struct AdamW {
    pub lr_encoder: f64,
    pub lr_other: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamW {
    pub fn new(store: &ParamStore, lr_encoder: f64, lr_other: f64, weight_decay: f64) -> Self {
        let zeros = || -> Vec<Matrix> {
            store
                .iter()
                .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect()
        };
        AdamW {
            lr_encoder,
            lr_other,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter accepted by `trainable`.
    /// Rejected parameters (and their moment estimates) are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, trainable: impl Fn(&Param) -> bool) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let param = store.param_mut(id);
            if !trainable(param) {
                continue;
            }
            let lr = match param.group {
                ParamGroup::Encoder => self.lr_encoder,
                ParamGroup::Other => self.lr_other,
            };
            let m = &mut self.first[id.0];
            let v = &mut self.second[id.0];
            let grad = param.grad.data();
            let value = param.value.data_mut();
            for i in 0..value.len() {
                let g = grad[i];
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * g;
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let update = (mi / bc1) / ((vi / bc2).sqrt() + self.eps);
                value[i] -= lr * (update + self.weight_decay * value[i]);
            }
        }
    }
}
