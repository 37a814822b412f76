use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{EncodedUnit, EncoderBackend};
use crate::backend::BackendError;
use crate::encoding::ASPECT_SEPARATOR;
use crate::text::{normalize_phrase, scan};

/// Deterministic, context-free encoder.
///
/// Every distinct normalized phrase maps to a unit vector seeded from the
/// SHA-256 of its text. Phrase-tag markers `[[phrase|id]]` in encoded text
/// become a single unit whose vector mixes the phrase vector with a vector
/// for the concept id, so every surface form of one concept shares a
/// direction. A marker vector shared by all tags stands in for the marker
/// tokens a subword encoder would see.
#[derive(Debug, Clone)]
pub struct StubEncoder {
    dim: usize,
}

/// Weight of the concept-id vector relative to the phrase and marker vectors.
const CONCEPT_WEIGHT: f64 = 1.5;
const MARKER_WEIGHT: f64 = 1.5;

impl StubEncoder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "stub encoder needs dim > 0");
        StubEncoder { dim }
    }

    fn key_vector(&self, key: &str) -> Vec<f64> {
        hash_unit_vector(key, self.dim)
    }

    fn phrase(&self, phrase: &str) -> Vec<f64> {
        let norm = normalize_phrase(phrase);
        if norm.is_empty() {
            self.key_vector(phrase)
        } else {
            self.key_vector(&norm)
        }
    }

    fn tag_vector(&self, phrase_vec: Vec<f64>, concept_id: &str) -> Vec<f64> {
        let concept = self.key_vector(&format!("concept:{concept_id}"));
        let marker = self.key_vector("[[|]]");
        let mut v: Vec<f64> = phrase_vec
            .iter()
            .zip(&concept)
            .zip(&marker)
            .map(|((p, c), m)| p + CONCEPT_WEIGHT * c + MARKER_WEIGHT * m)
            .collect();
        normalize(&mut v);
        v
    }
}

/// Unit vector in `dim` dimensions seeded by the SHA-256 of `key`.
pub(crate) fn hash_unit_vector(key: &str, dim: usize) -> Vec<f64> {
    let digest = Sha256::digest(key.as_bytes());
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&mut v);
    v
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Unit boundaries recognised by the stub tokenizer.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum StubUnit<'a> {
    Plain(&'a str),
    Tag { phrase: &'a str, concept_id: &'a str },
    Separator,
    Escaped(&'a str),
}

pub(crate) fn stub_units(text: &str) -> Vec<(std::ops::Range<usize>, StubUnit<'_>)> {
    let sep = ASPECT_SEPARATOR.trim();
    let mut units = Vec::new();
    let mut plain_start = 0;
    let mut i = 0;
    let bytes = text.as_bytes();
    let flush = |from: usize, to: usize, units: &mut Vec<_>| {
        for p in scan(&text[from..to]) {
            let r = from + p.range.start..from + p.range.end;
            units.push((r.clone(), StubUnit::Plain(&text[r])));
        }
    };
    while i < bytes.len() {
        if bytes[i] == b'\\' && i + 1 < bytes.len() {
            let c = text[i + 1..].chars().next().unwrap();
            flush(plain_start, i, &mut units);
            let end = i + 1 + c.len_utf8();
            units.push((i..end, StubUnit::Escaped(&text[i + 1..end])));
            i = end;
            plain_start = i;
            continue;
        }
        if text[i..].starts_with("[[") {
            if let Some(close) = text[i + 2..].find("]]") {
                let inner = &text[i + 2..i + 2 + close];
                if let Some(bar) = inner.rfind('|') {
                    flush(plain_start, i, &mut units);
                    let end = i + 2 + close + 2;
                    units.push((
                        i..end,
                        StubUnit::Tag {
                            phrase: &inner[..bar],
                            concept_id: &inner[bar + 1..],
                        },
                    ));
                    i = end;
                    plain_start = i;
                    continue;
                }
            }
        }
        if text[i..].starts_with(sep) {
            flush(plain_start, i, &mut units);
            units.push((i..i + sep.len(), StubUnit::Separator));
            i += sep.len();
            plain_start = i;
            continue;
        }
        i += text[i..].chars().next().map_or(1, char::len_utf8);
    }
    flush(plain_start, bytes.len(), &mut units);
    units
}

fn encode_units(
    text: &str,
    phrase: &dyn Fn(&str) -> Vec<f64>,
    stub: &StubEncoder,
) -> Vec<EncodedUnit> {
    stub_units(text)
        .into_iter()
        .map(|(range, unit)| {
            let vector = match unit {
                StubUnit::Plain(s) | StubUnit::Escaped(s) => phrase(s),
                StubUnit::Tag { phrase: p, concept_id } => stub.tag_vector(phrase(p), concept_id),
                StubUnit::Separator => stub.key_vector(ASPECT_SEPARATOR.trim()),
            };
            EncodedUnit { range, vector }
        })
        .collect()
}

impl EncoderBackend for StubEncoder {
    fn name(&self) -> &str {
        "stub"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn phrase_vector(&self, phrase: &str) -> Result<Vec<f64>, BackendError> {
        Ok(self.phrase(phrase))
    }

    fn encode(&self, text: &str) -> Result<Vec<EncodedUnit>, BackendError> {
        Ok(encode_units(text, &|p| self.phrase(p), self))
    }
}

/// Encoder with explicitly pinned phrase vectors; everything else falls
/// back to the stub.
#[derive(Debug, Clone)]
pub struct TableEncoder {
    stub: StubEncoder,
    table: HashMap<String, Vec<f64>>,
}

impl TableEncoder {
    pub fn new(dim: usize) -> Self {
        TableEncoder {
            stub: StubEncoder::new(dim),
            table: HashMap::new(),
        }
    }

    /// Pin the vector returned for `phrase` (matched after normalization).
    pub fn with(mut self, phrase: &str, vector: Vec<f64>) -> Self {
        assert_eq!(vector.len(), self.stub.dim, "pinned vector has wrong dim");
        self.table.insert(normalize_phrase(phrase), vector);
        self
    }

    fn phrase(&self, phrase: &str) -> Vec<f64> {
        self.table
            .get(&normalize_phrase(phrase))
            .cloned()
            .unwrap_or_else(|| self.stub.phrase(phrase))
    }
}

impl EncoderBackend for TableEncoder {
    fn name(&self) -> &str {
        "table"
    }

    fn dim(&self) -> usize {
        self.stub.dim
    }

    fn phrase_vector(&self, phrase: &str) -> Result<Vec<f64>, BackendError> {
        Ok(self.phrase(phrase))
    }

    fn encode(&self, text: &str) -> Result<Vec<EncodedUnit>, BackendError> {
        Ok(encode_units(text, &|p| self.phrase(p), &self.stub))
    }
}
