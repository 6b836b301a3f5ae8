use std::cell::{RefCell, RefMut};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{xavier_uniform, Head, Matrix, ParamGroup, ParamId, ParamStore, Tape, Var};

/// Everything one forward pass needs: the tape being recorded, the parameter
/// values, and (in training mode only) the dropout RNG.
pub struct ForwardCtx<'a> {
    pub tape: &'a Tape,
    pub store: &'a ParamStore,
    rng: Option<RefCell<ChaCha8Rng>>,
}

impl<'a> ForwardCtx<'a> {
    pub fn eval(tape: &'a Tape, store: &'a ParamStore) -> Self {
        ForwardCtx {
            tape,
            store,
            rng: None,
        }
    }

    pub fn train(tape: &'a Tape, store: &'a ParamStore, rng: ChaCha8Rng) -> Self {
        ForwardCtx {
            tape,
            store,
            rng: Some(RefCell::new(rng)),
        }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    /// The training RNG; `None` in evaluation mode.
    pub fn rng(&self) -> Option<RefMut<'_, ChaCha8Rng>> {
        self.rng.as_ref().map(|r| r.borrow_mut())
    }

    pub fn param(&self, id: ParamId) -> Var {
        self.tape.param(self.store, id)
    }

    /// Dropout in training mode; identity otherwise.
    pub fn dropout(&self, v: Var, rate: f64) -> Var {
        match &self.rng {
            Some(rng) if rate > 0.0 => self.tape.dropout(v, rate, &mut *rng.borrow_mut()),
            _ => v,
        }
    }
}

/// Affine map `x·W + b` applied row-wise.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

pub struct ParamSpec<'s> {
    pub store: &'s mut ParamStore,
    pub group: ParamGroup,
    pub head: Head,
}

impl Linear {
    pub fn new(
        spec: &mut ParamSpec<'_>,
        name: &str,
        inputs: usize,
        outputs: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = spec.store.add(
            format!("{name}.weight"),
            xavier_uniform(inputs, outputs, rng),
            spec.group,
            spec.head,
        );
        let bias = bias.then(|| {
            spec.store.add(
                format!("{name}.bias"),
                Matrix::zeros(1, outputs),
                spec.group,
                spec.head,
            )
        });
        Linear { weight, bias }
    }

    pub fn forward(&self, ctx: &ForwardCtx<'_>, x: Var) -> Var {
        let y = ctx.tape.matmul(x, ctx.param(self.weight));
        match self.bias {
            Some(b) => ctx.tape.add_row(y, ctx.param(b)),
            None => y,
        }
    }

    pub fn output_dim(&self, store: &ParamStore) -> usize {
        store.value(self.weight).cols()
    }
}

/// One hidden ReLU layer followed by a linear output layer.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
    pub dropout: f64,
}

impl Mlp {
    pub fn new(
        spec: &mut ParamSpec<'_>,
        name: &str,
        inputs: usize,
        hidden: usize,
        outputs: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Self {
        Mlp {
            hidden: Linear::new(spec, &format!("{name}.hidden"), inputs, hidden, true, rng),
            output: Linear::new(spec, &format!("{name}.output"), hidden, outputs, true, rng),
            dropout,
        }
    }

    pub fn forward(&self, ctx: &ForwardCtx<'_>, x: Var) -> Var {
        let h = ctx.tape.relu(self.hidden.forward(ctx, x));
        let h = ctx.dropout(h, self.dropout);
        self.output.forward(ctx, h)
    }
}
