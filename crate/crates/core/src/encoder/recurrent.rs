use rand::Rng;

use crate::nn::{xavier_uniform, ForwardCtx, Linear, Matrix, ParamId, ParamSpec, Var};

/// Single-direction LSTM over the rows of an `n × d` input.
#[derive(Clone, Debug)]
pub struct LstmDirection {
    input: ParamId,
    recurrent: ParamId,
    bias: ParamId,
    hidden: usize,
}

impl LstmDirection {
    pub fn new(
        spec: &mut ParamSpec<'_>,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let input = spec.store.add(
            format!("{name}.input"),
            xavier_uniform(inputs, 4 * hidden, rng),
            spec.group,
            spec.head,
        );
        let recurrent = spec.store.add(
            format!("{name}.recurrent"),
            xavier_uniform(hidden, 4 * hidden, rng),
            spec.group,
            spec.head,
        );
        // Gate order is input, forget, candidate, output; forget bias starts at 1.
        let mut b = Matrix::zeros(1, 4 * hidden);
        for c in hidden..2 * hidden {
            b.set(0, c, 1.0);
        }
        let bias = spec
            .store
            .add(format!("{name}.bias"), b, spec.group, spec.head);
        LstmDirection {
            input,
            recurrent,
            bias,
            hidden,
        }
    }

    pub fn forward(&self, ctx: &ForwardCtx<'_>, x: Var, reverse: bool) -> Var {
        let tape = ctx.tape;
        let n = tape.shape(x).0;
        let h = self.hidden;
        let projected = tape.add_row(tape.matmul(x, ctx.param(self.input)), ctx.param(self.bias));
        let recurrent = ctx.param(self.recurrent);
        let mut outputs: Vec<Option<Var>> = vec![None; n];
        let mut state: Option<(Var, Var)> = None;
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..n).rev())
        } else {
            Box::new(0..n)
        };
        for t in order {
            let mut gates = tape.gather_rows(projected, &[t]);
            if let Some((h_prev, _)) = state {
                gates = tape.add(gates, tape.matmul(h_prev, recurrent));
            }
            let i = tape.sigmoid(tape.slice_cols(gates, 0, h));
            let f = tape.sigmoid(tape.slice_cols(gates, h, h));
            let g = tape.tanh(tape.slice_cols(gates, 2 * h, h));
            let o = tape.sigmoid(tape.slice_cols(gates, 3 * h, h));
            let c = match state {
                Some((_, c_prev)) => tape.add(tape.mul(f, c_prev), tape.mul(i, g)),
                None => tape.mul(i, g),
            };
            let h_t = tape.mul(o, tape.tanh(c));
            outputs[t] = Some(h_t);
            state = Some((h_t, c));
        }
        let rows: Vec<Var> = outputs
            .into_iter()
            .map(|v| v.expect("every step ran"))
            .collect();
        tape.concat_rows(&rows)
    }
}

/// Bidirectional LSTM layer with a highway connection:
/// `out = g ⊙ [fwd; bwd] + (1 − g) ⊙ (x·P)`, where the gate
/// `g = σ([x; fwd; bwd]·W + b)`.
#[derive(Clone, Debug)]
pub struct HighwayBiLstmLayer {
    forward: LstmDirection,
    backward: LstmDirection,
    projection: Linear,
    gate: Linear,
}

impl HighwayBiLstmLayer {
    pub fn new(
        spec: &mut ParamSpec<'_>,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        HighwayBiLstmLayer {
            forward: LstmDirection::new(spec, &format!("{name}.fwd"), inputs, hidden, rng),
            backward: LstmDirection::new(spec, &format!("{name}.bwd"), inputs, hidden, rng),
            projection: Linear::new(
                spec,
                &format!("{name}.proj"),
                inputs,
                2 * hidden,
                false,
                rng,
            ),
            gate: Linear::new(
                spec,
                &format!("{name}.gate"),
                inputs + 2 * hidden,
                2 * hidden,
                true,
                rng,
            ),
        }
    }

    pub fn forward(&self, ctx: &ForwardCtx<'_>, x: Var) -> Var {
        let tape = ctx.tape;
        let fwd = self.forward.forward(ctx, x, false);
        let bwd = self.backward.forward(ctx, x, true);
        let recurrent = tape.concat_cols(&[fwd, bwd]);
        let projected = self.projection.forward(ctx, x);
        let gate = tape.sigmoid(self.gate.forward(ctx, tape.concat_cols(&[x, recurrent])));
        // p + g ⊙ (r − p)
        tape.add(projected, tape.mul(gate, tape.sub(recurrent, projected)))
    }
}
