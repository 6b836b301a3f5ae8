//! Token embedding, highway-gated bidirectional LSTM contextualisation, and
//! span representations `[h_start; h_end; h_attn; width]`.

mod external;
mod recurrent;
mod vocab;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Span;
use crate::error::{Error, Result};
use crate::nn::{
    uniform, ForwardCtx, Head, Linear, ParamGroup, ParamId, ParamSpec, ParamStore, Var,
};

pub use external::{average_pieces, HashingPieceEncoder, PieceEncoder};
pub use recurrent::{HighwayBiLstmLayer, LstmDirection};
pub use vocab::{Vocabulary, UNKNOWN_TOKEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// Trainable lookup table over lowercased tokens.
    TinyEmbedding,
    /// Mean of word-piece vectors from a [`PieceEncoder`] backend.
    ExternalContextual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub encoder_kind: EncoderKind,
    pub word_dim: usize,
    /// Per direction.
    pub hidden_size: usize,
    pub num_layers: usize,
    pub max_span_length: usize,
    pub width_embedding_dim: usize,
    pub dropout_lstm: f64,
    pub dropout_mlp: f64,
    /// Hidden width of every classifier MLP.
    pub mlp_hidden: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            encoder_kind: EncoderKind::TinyEmbedding,
            word_dim: 100,
            hidden_size: 200,
            num_layers: 6,
            max_span_length: 15,
            width_embedding_dim: 20,
            dropout_lstm: 0.4,
            dropout_mlp: 0.2,
            mlp_hidden: 150,
        }
    }
}

impl EncoderConfig {
    /// Small CPU-friendly configuration for fixtures and tests.
    pub fn tiny() -> Self {
        EncoderConfig {
            word_dim: 32,
            hidden_size: 32,
            num_layers: 1,
            max_span_length: 8,
            width_embedding_dim: 16,
            dropout_lstm: 0.0,
            dropout_mlp: 0.0,
            mlp_hidden: 64,
            ..EncoderConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.max_span_length == 0 {
            return fail("max_span_length must be at least 1");
        }
        if self.hidden_size == 0 || self.word_dim == 0 || self.mlp_hidden == 0 {
            return fail("hidden_size, word_dim and mlp_hidden must be positive");
        }
        if self.num_layers == 0 {
            return fail("num_layers must be at least 1");
        }
        for (name, p) in [
            ("dropout_lstm", self.dropout_lstm),
            ("dropout_mlp", self.dropout_mlp),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        Ok(())
    }

    /// Dimension of a span representation: `3 · 2h + width`.
    pub fn span_dim(&self) -> usize {
        6 * self.hidden_size + self.width_embedding_dim
    }
}

/// All spans of 1..=min(L, n) tokens, ordered by (start, end).
pub fn enumerate_spans(n: usize, max_len: usize) -> Vec<Span> {
    let mut spans = Vec::new();
    for start in 0..n {
        for end in start..n.min(start + max_len) {
            spans.push(Span::new(start, end));
        }
    }
    spans
}

/// Closed form for `enumerate_spans(n, max_len).len()`.
pub fn span_count(n: usize, max_len: usize) -> usize {
    (1..=max_len.min(n)).map(|l| n - l + 1).sum()
}

#[derive(Clone, Debug)]
enum TokenSource {
    Table(ParamId),
    External(Arc<dyn PieceEncoder>),
}

/// Tape handles for the intermediate encodings of one sentence.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    /// `n × word_dim`
    pub tokens: Var,
    /// `n × 2h`
    pub states: Var,
    /// `n × 1` attention scores
    pub scores: Var,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
    vocab: Vocabulary,
    source: TokenSource,
    layers: Vec<HighwayBiLstmLayer>,
    attention: Linear,
    width: ParamId,
}

impl Encoder {
    pub fn new(
        config: &EncoderConfig,
        vocab: Vocabulary,
        external: Option<Arc<dyn PieceEncoder>>,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let (source, input_dim) = match (config.encoder_kind, external) {
            (EncoderKind::TinyEmbedding, _) => {
                let table = store.add(
                    "encoder.embedding",
                    uniform(vocab.len(), config.word_dim, 0.5, rng),
                    ParamGroup::Encoder,
                    Head::Encoder,
                );
                (TokenSource::Table(table), config.word_dim)
            }
            (EncoderKind::ExternalContextual, Some(backend)) => {
                let dim = backend.dim();
                (TokenSource::External(backend), dim)
            }
            (EncoderKind::ExternalContextual, None) => {
                return Err(Error::Config(
                    "external-contextual encoder needs a piece-encoder backend".into(),
                ))
            }
        };
        let mut spec = ParamSpec {
            store,
            group: ParamGroup::Other,
            head: Head::Encoder,
        };
        let h = config.hidden_size;
        let layers = (0..config.num_layers)
            .map(|l| {
                let inputs = if l == 0 { input_dim } else { 2 * h };
                HighwayBiLstmLayer::new(&mut spec, &format!("encoder.layer{l}"), inputs, h, rng)
            })
            .collect();
        let attention = Linear::new(&mut spec, "encoder.attention", 2 * h, 1, true, rng);
        let width = spec.store.add(
            "encoder.width",
            uniform(config.max_span_length, config.width_embedding_dim, 0.5, rng),
            ParamGroup::Other,
            Head::Encoder,
        );
        Ok(Encoder {
            config: config.clone(),
            vocab,
            source,
            layers,
            attention,
            width,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn span_dim(&self) -> usize {
        self.config.span_dim()
    }

    /// Word-level vectors `e_1..e_n`.
    pub fn embed_tokens(&self, ctx: &ForwardCtx<'_>, tokens: &[String]) -> Var {
        match &self.source {
            TokenSource::Table(table) => {
                let ids = self.vocab.indices(tokens);
                ctx.tape.param_rows(ctx.store, *table, &ids)
            }
            TokenSource::External(backend) => {
                let pieces = backend.encode(tokens);
                ctx.tape.constant(average_pieces(&pieces, backend.dim()))
            }
        }
    }

    /// Highway BiLSTM stack over the token vectors.
    pub fn contextualize(&self, ctx: &ForwardCtx<'_>, tokens: Var) -> Var {
        let mut x = tokens;
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                x = ctx.dropout(x, self.config.dropout_lstm);
            }
            x = layer.forward(ctx, x);
        }
        x
    }

    pub fn encode(&self, ctx: &ForwardCtx<'_>, tokens: &[String]) -> Encoded {
        let e = self.embed_tokens(ctx, tokens);
        let states = self.contextualize(ctx, e);
        let scores = self.attention.forward(ctx, states);
        Encoded {
            tokens: e,
            states,
            scores,
        }
    }

    /// Width bucket of a span: exact lengths, clamped at `L`.
    pub fn width_bucket(&self, span: &Span) -> usize {
        span.len().min(self.config.max_span_length) - 1
    }

    /// `len(spans) × span_dim` matrix of span representations.
    pub fn represent_spans(&self, ctx: &ForwardCtx<'_>, encoded: &Encoded, spans: &[Span]) -> Var {
        let tape = ctx.tape;
        let starts: Vec<usize> = spans.iter().map(|s| s.start).collect();
        let ends: Vec<usize> = spans.iter().map(|s| s.end).collect();
        let bounds: Vec<(usize, usize)> = spans.iter().map(|s| (s.start, s.end)).collect();
        let buckets: Vec<usize> = spans.iter().map(|s| self.width_bucket(s)).collect();
        let h_start = tape.gather_rows(encoded.states, &starts);
        let h_end = tape.gather_rows(encoded.states, &ends);
        let h_attn = tape.span_attention(encoded.states, encoded.scores, &bounds);
        let width = tape.param_rows(ctx.store, self.width, &buckets);
        tape.concat_cols(&[h_start, h_end, h_attn, width])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AnnotatedSentence;
    use crate::nn::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tokens(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn tiny_encoder(store: &mut ParamStore) -> Encoder {
        let sentence = AnnotatedSentence::new(tokens(&["a", "b", "c", "d", "e"]));
        let vocab = Vocabulary::from_corpus([&sentence]);
        let config = EncoderConfig {
            word_dim: 4,
            hidden_size: 3,
            num_layers: 2,
            max_span_length: 3,
            width_embedding_dim: 2,
            ..EncoderConfig::tiny()
        };
        Encoder::new(
            &config,
            vocab,
            None,
            store,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap()
    }

    #[test]
    fn span_enumeration_counts() {
        assert_eq!(enumerate_spans(5, 3).len(), 12);
        assert_eq!(enumerate_spans(1, 15), vec![Span::new(0, 0)]);
        assert_eq!(span_count(20, 15), 195);
        let spans = enumerate_spans(6, 2);
        assert!(spans
            .windows(2)
            .all(|w| (w[0].start, w[0].end) < (w[1].start, w[1].end)));
    }

    #[test]
    fn identical_tokens_share_embeddings_and_unknowns_fall_back() {
        let mut store = ParamStore::new();
        let enc = tiny_encoder(&mut store);
        let tape = Tape::new();
        let ctx = ForwardCtx::eval(&tape, &store);
        let e = enc.embed_tokens(&ctx, &tokens(&["b", "zzz", "B", "qqq"]));
        let e = tape.value(e);
        assert_eq!(e.row(0), e.row(2));
        assert_eq!(e.row(1), e.row(3));
    }

    #[test]
    fn single_token_sentence_has_one_state() {
        let mut store = ParamStore::new();
        let enc = tiny_encoder(&mut store);
        let tape = Tape::new();
        let ctx = ForwardCtx::eval(&tape, &store);
        let encoded = enc.encode(&ctx, &tokens(&["a"]));
        assert_eq!(tape.shape(encoded.states), (1, 6));
    }

    #[test]
    fn later_states_see_earlier_tokens() {
        let mut store = ParamStore::new();
        let enc = tiny_encoder(&mut store);
        let run = |words: &[&str]| {
            let tape = Tape::new();
            let ctx = ForwardCtx::eval(&tape, &store);
            let encoded = enc.encode(&ctx, &tokens(words));
            let states = tape.value(encoded.states).clone();
            states
        };
        let base = run(&["a", "b", "c", "d", "e"]);
        let perturbed = run(&["a", "e", "c", "d", "e"]);
        let diff: f64 = base
            .row(3)
            .iter()
            .zip(perturbed.row(3))
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 0.0);
        assert_eq!(run(&["a", "b", "c", "d", "e"]), base);
    }

    #[test]
    fn span_representation_shape_and_attention_normalisation() {
        let mut store = ParamStore::new();
        let enc = tiny_encoder(&mut store);
        let tape = Tape::new();
        let ctx = ForwardCtx::eval(&tape, &store);
        let encoded = enc.encode(&ctx, &tokens(&["a", "b", "c", "d"]));
        let spans = enumerate_spans(4, 3);
        let g = enc.represent_spans(&ctx, &encoded, &spans);
        assert_eq!(tape.shape(g), (spans.len(), enc.span_dim()));
        assert!(tape.value(g).is_finite());
        assert_eq!(EncoderConfig::default().span_dim(), 6 * 200 + 20);
    }

    #[test]
    fn external_kind_averages_pieces() {
        let backend = Arc::new(HashingPieceEncoder::new(5, 2));
        let config = EncoderConfig {
            encoder_kind: EncoderKind::ExternalContextual,
            ..EncoderConfig::tiny()
        };
        let mut store = ParamStore::new();
        let vocab = Vocabulary::from_corpus(std::iter::empty());
        let enc = Encoder::new(
            &config,
            vocab,
            Some(backend.clone()),
            &mut store,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let tape = Tape::new();
        let ctx = ForwardCtx::eval(&tape, &store);
        let e = enc.embed_tokens(&ctx, &tokens(&["wxyz"]));
        let e = tape.value(e);
        let pieces = backend.encode(&tokens(&["wxyz"]));
        assert_eq!(pieces[0].len(), 2);
        for (d, (a, b)) in pieces[0][0].iter().zip(&pieces[0][1]).enumerate().take(5) {
            let mean = (a + b) / 2.0;
            assert!((e.get(0, d) - mean).abs() < 1e-6);
        }
    }
}
