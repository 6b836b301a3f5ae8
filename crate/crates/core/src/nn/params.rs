use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

/// Optimizer group; the two groups get separate learning rates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    /// Token-level embedding layer (the pretrained part when one is plugged in).
    Encoder,
    /// Everything else: recurrent stack, span attention, classifier heads.
    Other,
}

/// Which part of the network a parameter belongs to. Heads that a model
/// variant disables are never updated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Head {
    Encoder,
    NodeType,
    Frame,
    PredicateEdge,
    RoleEdge,
    SemiCrf,
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
    pub group: ParamGroup,
    pub head: Head,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        value: Matrix,
        group: ParamGroup,
        head: Head,
    ) -> ParamId {
        let name = name.into();
        debug_assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.params.push(Param {
            name,
            value,
            grad,
            group,
            head,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// L2 norm of the gradients of every parameter accepted by `filter`.
    pub fn grad_norm(&self, filter: impl Fn(&Param) -> bool) -> f64 {
        self.params
            .iter()
            .filter(|p| filter(p))
            .map(|p| p.grad.squared_norm())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales the selected gradients so their joint L2 norm is at most
    /// `max_norm`. Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64, filter: impl Fn(&Param) -> bool) -> f64 {
        let norm = self.grad_norm(&filter);
        if norm > max_norm && norm.is_finite() {
            let factor = max_norm / norm;
            for p in self.params.iter_mut().filter(|p| filter(p)) {
                p.grad.scale_assign(factor);
            }
        }
        norm
    }

    pub fn snapshot(&self) -> BTreeMap<String, Matrix> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect()
    }

    /// Overwrites every parameter from a named snapshot. All names and shapes
    /// must match.
    pub fn restore(&mut self, snapshot: &BTreeMap<String, Matrix>) -> Result<(), String> {
        if snapshot.len() != self.params.len() {
            return Err(format!(
                "parameter archive holds {} tensors, model expects {}",
                snapshot.len(),
                self.params.len()
            ));
        }
        for p in &mut self.params {
            let stored = snapshot
                .get(&p.name)
                .ok_or_else(|| format!("parameter {} missing from archive", p.name))?;
            if stored.shape() != p.value.shape() {
                return Err(format!(
                    "parameter {} has shape {:?} in archive, model expects {:?}",
                    p.name,
                    stored.shape(),
                    p.value.shape()
                ));
            }
            p.value = stored.clone();
        }
        Ok(())
    }
}

/// Glorot-uniform initialisation.
pub fn xavier_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rows, cols, bound, rng)
}

pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Matrix::from_vec(rows, cols, data)
}
