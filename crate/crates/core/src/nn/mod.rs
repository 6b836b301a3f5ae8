//! Minimal dense neural-network toolkit: matrices, a recording tape for
//! reverse-mode differentiation, parameter storage, layers, and AdamW.

mod layers;
mod matrix;
mod optim;
mod params;
mod tape;

pub use layers::{ForwardCtx, Linear, Mlp, ParamSpec};
pub use matrix::Matrix;
pub use optim::AdamW;
pub use params::{uniform, xavier_uniform, Head, Param, ParamGroup, ParamId, ParamStore};
pub use tape::{log_softmax, logsumexp, masked_softmax, softmax, Tape, Var};
