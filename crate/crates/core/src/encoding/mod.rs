//! Embedding layer and commonsense layer.
//!
//! Encoders are pluggable behind [`EncoderBackend`]. The crate ships a
//! deterministic hash-seeded [`StubEncoder`] that the whole pipeline can run
//! on offline, and a [`TableEncoder`] for pinning exact vectors in tests.

mod commonsense;
mod stub;

use std::ops::Range;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use commonsense::{
    concat_with_aspects, extract_aspects, split_concatenated, AspectSet, CommonsenseBackend,
    FixtureCommonsense, Relation, StubCommonsense, ASPECT_SEPARATOR, NO_INFERENCE,
    render_with_aspects,
};
pub use stub::{StubEncoder, TableEncoder};

use crate::backend::{BackendError, Gated};
use crate::error::{Error, Result};

/// A single finite embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("embedding must have dim > 0".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric { block: "embedding" });
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        cosine(&self.0, &other.0)
    }
}

/// Cosine similarity clamped to [-1, 1]; zero when either side has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// One contextual vector per input unit, with the byte range of the unit in
/// the encoded string. Never padded.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    vectors: Array2<f64>,
    spans: Vec<Range<usize>>,
}

impl EmbeddingSequence {
    pub fn new(vectors: Array2<f64>, spans: Vec<Range<usize>>) -> Result<Self> {
        if vectors.nrows() != spans.len() {
            return Err(Error::Input(format!(
                "{} vectors but {} spans",
                vectors.nrows(),
                spans.len()
            )));
        }
        if vectors.ncols() == 0 {
            return Err(Error::Input("embedding must have dim > 0".into()));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric { block: "embedding" });
        }
        Ok(EmbeddingSequence { vectors, spans })
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    pub fn spans(&self) -> &[Range<usize>] {
        &self.spans
    }

    pub fn into_vectors(self) -> Array2<f64> {
        self.vectors
    }
}

/// A contextual vector for one unit of encoded text.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedUnit {
    pub range: Range<usize>,
    pub vector: Vec<f64>,
}

/// Port for the embedding layer.
///
/// Implementations must be deterministic for a fixed instance and input.
pub trait EncoderBackend: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// How many calls may run concurrently.
    fn max_parallelism(&self) -> usize {
        usize::MAX
    }
    /// Fixed vector for a standalone phrase.
    fn phrase_vector(&self, phrase: &str) -> std::result::Result<Vec<f64>, BackendError>;
    /// Tokenize and encode `text`, one vector per unit, in text order.
    fn encode(&self, text: &str) -> std::result::Result<Vec<EncodedUnit>, BackendError>;
}

impl<E: EncoderBackend + ?Sized> EncoderBackend for &E {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn max_parallelism(&self) -> usize {
        (**self).max_parallelism()
    }
    fn phrase_vector(&self, phrase: &str) -> std::result::Result<Vec<f64>, BackendError> {
        (**self).phrase_vector(phrase)
    }
    fn encode(&self, text: &str) -> std::result::Result<Vec<EncodedUnit>, BackendError> {
        (**self).encode(text)
    }
}

impl<B: EncoderBackend> EncoderBackend for Gated<B> {
    fn name(&self) -> &str {
        self.inner().name()
    }
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn max_parallelism(&self) -> usize {
        self.gate().limit()
    }
    fn phrase_vector(&self, phrase: &str) -> std::result::Result<Vec<f64>, BackendError> {
        self.gate().run(|| self.inner().phrase_vector(phrase))
    }
    fn encode(&self, text: &str) -> std::result::Result<Vec<EncodedUnit>, BackendError> {
        self.gate().run(|| self.inner().encode(text))
    }
}

/// Embed a standalone phrase into one fixed vector.
pub fn embed_phrase(backend: &dyn EncoderBackend, phrase: &str) -> Result<EmbeddingVector> {
    if phrase.trim().is_empty() {
        return Err(Error::Input("cannot embed an empty phrase".into()));
    }
    let v = backend.phrase_vector(phrase)?;
    if v.len() != backend.dim() {
        return Err(Error::Input(format!(
            "{} returned dim {} (declared {})",
            backend.name(),
            v.len(),
            backend.dim()
        )));
    }
    EmbeddingVector::new(v)
}

/// Encode `text` and keep at most `max_len` units from the head.
pub fn embed_sequence(
    backend: &dyn EncoderBackend,
    text: &str,
    max_len: usize,
) -> Result<EmbeddingSequence> {
    if max_len == 0 {
        return Err(Error::Input("max_len must be positive".into()));
    }
    let mut units = backend.encode(text)?;
    units.truncate(max_len);
    let dim = backend.dim();
    let mut vectors = Array2::zeros((units.len(), dim));
    let mut spans = Vec::with_capacity(units.len());
    for (row, unit) in units.into_iter().enumerate() {
        if unit.vector.len() != dim {
            return Err(Error::Input(format!(
                "{} returned dim {} (declared {dim})",
                backend.name(),
                unit.vector.len()
            )));
        }
        vectors
            .row_mut(row)
            .iter_mut()
            .zip(&unit.vector)
            .for_each(|(d, s)| *d = *s);
        spans.push(unit.range);
    }
    EmbeddingSequence::new(vectors, spans)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_handles_zero_and_self() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((cosine(&[3.0, 4.0], &[3.0, 4.0]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[4.0, 3.0], &[5.0, 0.0]), 0.8);
    }

    #[test]
    fn embedding_vector_rejects_nan() {
        assert!(EmbeddingVector::new(vec![f64::NAN]).is_err());
        assert!(EmbeddingVector::new(vec![]).is_err());
    }

    #[test]
    fn sequence_truncates_head() {
        let enc = StubEncoder::new(8);
        let text: Vec<String> = (0..60).map(|i| format!("w{i}")).collect();
        let text = text.join(" ");
        let seq = embed_sequence(&enc, &text, 50).unwrap();
        assert_eq!(seq.len(), 50);
        assert_eq!(&text[seq.spans()[0].clone()], "w0");
        assert_eq!(&text[seq.spans()[49].clone()], "w49");
        let short = embed_sequence(&enc, "one two three", 10).unwrap();
        assert_eq!(short.len(), 3);
        assert!(embed_sequence(&enc, "x", 0).is_err());
    }

    #[test]
    fn empty_phrase_is_input_error() {
        let enc = StubEncoder::new(8);
        assert!(matches!(embed_phrase(&enc, ""), Err(Error::Input(_))));
        assert!(matches!(embed_phrase(&enc, "   "), Err(Error::Input(_))));
    }
}
