use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::Matrix;

/// A contextual sub-word encoder living outside this crate. For each word
/// of the input it returns the vectors of that word's pieces.
///
/// Its parameters are not trained here: vectors enter the model as
/// constants.
pub trait PieceEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, words: &[String]) -> Vec<Vec<Vec<f64>>>;
}

impl fmt::Debug for dyn PieceEncoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PieceEncoder(dim={})", self.dim())
    }
}

/// Word vectors as the mean of their piece vectors.
pub fn average_pieces(pieces: &[Vec<Vec<f64>>], dim: usize) -> Matrix {
    let mut out = Matrix::zeros(pieces.len(), dim);
    for (w, word_pieces) in pieces.iter().enumerate() {
        assert!(!word_pieces.is_empty(), "word {w} has no pieces");
        let scale = 1.0 / word_pieces.len() as f64;
        let row = out.row_mut(w);
        for piece in word_pieces {
            assert_eq!(piece.len(), dim, "piece vector dimension");
            for (d, x) in row.iter_mut().zip(piece) {
                *d += x * scale;
            }
        }
    }
    out
}

/// Stand-in backend: splits words into fixed-width character chunks and
/// maps each chunk to a pseudo-random vector seeded by its hash. Useful for
/// exercising the adapter without a real pretrained model.
#[derive(Clone, Debug)]
pub struct HashingPieceEncoder {
    pub dim: usize,
    pub piece_chars: usize,
}

impl HashingPieceEncoder {
    pub fn new(dim: usize, piece_chars: usize) -> Self {
        HashingPieceEncoder {
            dim,
            piece_chars: piece_chars.max(1),
        }
    }

    pub fn pieces(&self, word: &str) -> Vec<String> {
        let chars: Vec<char> = word.chars().collect();
        chars
            .chunks(self.piece_chars)
            .map(|c| c.iter().collect())
            .collect()
    }

    fn piece_vector(&self, piece: &str) -> Vec<f64> {
        let mut hasher = DefaultHasher::new();
        piece.hash(&mut hasher);
        let mut rng = ChaCha8Rng::seed_from_u64(hasher.finish());
        (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

impl PieceEncoder for HashingPieceEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, words: &[String]) -> Vec<Vec<Vec<f64>>> {
        words
            .iter()
            .map(|w| {
                let pieces = self.pieces(w);
                let pieces = if pieces.is_empty() {
                    vec![String::new()]
                } else {
                    pieces
                };
                pieces.iter().map(|p| self.piece_vector(p)).collect()
            })
            .collect()
    }
}
