//! Concept ontology with a normalized phrase index, embedding-similarity
//! expansion and the UMLS port.

mod umls;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use umls::{umls_top_concepts, FixtureUmls, NoUmls, UmlsBackend, UmlsEntry};

use crate::encoding::{cosine, embed_phrase, EncoderBackend, EmbeddingVector};
use crate::error::{Error, Result};
use crate::text::normalize_phrase;

/// Default cosine threshold for synonym/similar phrase matching.
pub const SIMILARITY_THRESHOLD: f64 = 0.80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConceptSource {
    #[serde(rename = "DFO")]
    Dfo,
    #[serde(rename = "UMLS")]
    Umls,
    #[serde(rename = "EXPANDED")]
    Expanded,
}

/// One ontology concept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: String,
    #[serde(rename = "label")]
    pub preferred_label: String,
    pub synonyms: Vec<String>,
    #[serde(rename = "phq9")]
    pub phq9_category: Option<u8>,
    pub definition: Option<String>,
    pub source: ConceptSource,
}

impl Concept {
    pub fn new(id: &str, label: &str) -> Self {
        Concept {
            id: id.to_string(),
            preferred_label: label.to_string(),
            synonyms: Vec::new(),
            phq9_category: None,
            definition: None,
            source: ConceptSource::Dfo,
        }
    }

    pub fn with_synonyms<S: AsRef<str>>(mut self, synonyms: &[S]) -> Self {
        self.synonyms = synonyms.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }

    pub fn with_phq9(mut self, category: u8) -> Self {
        self.phq9_category = Some(category);
        self
    }

    pub fn with_definition(mut self, definition: &str) -> Self {
        self.definition = Some(definition.to_string());
        self
    }

    /// Normalize label and synonyms and check the concept invariants.
    fn validated(mut self) -> std::result::Result<Self, String> {
        if self.id.is_empty() {
            return Err("concept id is empty".into());
        }
        if self
            .id
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '[' | ']' | '|' | '\\'))
        {
            return Err(format!(
                "concept id {:?} contains whitespace or a reserved character",
                self.id
            ));
        }
        self.preferred_label = normalize_phrase(&self.preferred_label);
        if self.preferred_label.is_empty() {
            return Err(format!("concept {} has an empty label", self.id));
        }
        let mut seen = BTreeSet::new();
        let mut synonyms = Vec::with_capacity(self.synonyms.len());
        for raw in &self.synonyms {
            let s = normalize_phrase(raw);
            if s.is_empty() {
                return Err(format!("concept {} has an empty synonym", self.id));
            }
            if s == self.preferred_label {
                return Err(format!("concept {}: synonym duplicates label", self.id));
            }
            if !seen.insert(s.clone()) {
                return Err(format!("concept {}: duplicate synonym {s:?}", self.id));
            }
            synonyms.push(s);
        }
        self.synonyms = synonyms;
        if let Some(c) = self.phq9_category {
            if !(1..=9).contains(&c) {
                return Err(format!(
                    "concept {}: phq9 category {c} outside 1..=9",
                    self.id
                ));
            }
        }
        Ok(self)
    }

    /// Label followed by synonyms.
    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.preferred_label.as_str()).chain(self.synonyms.iter().map(String::as_str))
    }
}

/// Immutable concept collection with a phrase index over every label and
/// synonym.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    concepts: BTreeMap<String, Concept>,
    phrase_index: BTreeMap<String, BTreeSet<String>>,
}

impl Lexicon {
    pub fn from_concepts(concepts: impl IntoIterator<Item = Concept>) -> Result<Self> {
        let mut lex = Lexicon::default();
        for c in concepts {
            lex.insert(c).map_err(Error::Data)?;
        }
        Ok(lex)
    }

    fn insert(&mut self, concept: Concept) -> std::result::Result<(), String> {
        let concept = concept.validated()?;
        if self.concepts.contains_key(&concept.id) {
            return Err(format!("duplicate concept id {}", concept.id));
        }
        for phrase in concept.phrases() {
            self.phrase_index
                .entry(phrase.to_string())
                .or_default()
                .insert(concept.id.clone());
        }
        self.concepts.insert(concept.id.clone(), concept);
        Ok(())
    }

    /// Read a line-delimited concept file.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lex = Lexicon::default();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let concept: Concept =
                serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            lex.insert(concept).map_err(|m| Error::parse(path, i + 1, m))?;
        }
        Ok(lex)
    }

    /// Write one record per concept, ordered by id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for c in self.concepts.values() {
            serde_json::to_writer(&mut out, c).expect("concept serializes");
            out.push(b'\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concept(&self, id: &str) -> Option<&Concept> {
        self.concepts.get(id)
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    /// Every indexed phrase with the concepts it names.
    pub fn phrases(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.phrase_index.iter().map(|(p, ids)| (p.as_str(), ids))
    }

    /// Concept ids whose label or synonym equals `phrase` after
    /// normalization, ascending.
    pub fn lookup_phrase(&self, phrase: &str) -> Vec<&str> {
        self.phrase_index
            .get(&normalize_phrase(phrase))
            .map(|ids| ids.iter().map(String::as_str).collect())
            .unwrap_or_default()
    }

    /// Concepts with a phrase at cosine >= `threshold` from `phrase`.
    ///
    /// Builds a fresh [`SimilarityIndex`]; callers issuing many queries
    /// should build the index once.
    pub fn expand_similar(
        &self,
        phrase: &str,
        embedder: &dyn EncoderBackend,
        threshold: f64,
    ) -> Result<Vec<(String, f64)>> {
        SimilarityIndex::build(self, embedder)?.query(phrase, embedder, threshold)
    }
}

/// Precomputed phrase embeddings of a lexicon under one encoder.
#[derive(Debug, Clone)]
pub struct SimilarityIndex {
    encoder: String,
    entries: Vec<(EmbeddingVector, Vec<String>)>,
}

impl SimilarityIndex {
    pub fn build(lex: &Lexicon, embedder: &dyn EncoderBackend) -> Result<Self> {
        let mut entries = Vec::with_capacity(lex.phrase_index.len());
        for (phrase, ids) in &lex.phrase_index {
            let v = embed_phrase(embedder, phrase)?;
            entries.push((v, ids.iter().cloned().collect()));
        }
        Ok(SimilarityIndex {
            encoder: embedder.name().to_string(),
            entries,
        })
    }

    /// Concepts reachable from `phrase` at cosine >= `threshold` (inclusive),
    /// one entry per concept carrying its best similarity, sorted by
    /// similarity descending then concept id ascending.
    pub fn query(
        &self,
        phrase: &str,
        embedder: &dyn EncoderBackend,
        threshold: f64,
    ) -> Result<Vec<(String, f64)>> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::Input(format!(
                "similarity threshold {threshold} outside (0, 1]"
            )));
        }
        if embedder.name() != self.encoder {
            return Err(Error::Input(format!(
                "index built with encoder {} queried with {}",
                self.encoder,
                embedder.name()
            )));
        }
        let q = embed_phrase(embedder, phrase)?;
        self.query_vector(&q, threshold)
    }

    pub fn query_vector(&self, q: &EmbeddingVector, threshold: f64) -> Result<Vec<(String, f64)>> {
        let mut best: BTreeMap<&str, f64> = BTreeMap::new();
        for (v, ids) in &self.entries {
            let sim = cosine(q.as_slice(), v.as_slice());
            if sim >= threshold {
                for id in ids {
                    let e = best.entry(id.as_str()).or_insert(sim);
                    if sim > *e {
                        *e = sim;
                    }
                }
            }
        }
        let mut out: Vec<(String, f64)> = best.into_iter().map(|(id, s)| (id.to_string(), s)).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{StubEncoder, TableEncoder};
    use proptest::prelude::*;

    fn write(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    fn toy() -> Lexicon {
        Lexicon::from_concepts([Concept::new("c1", "suicidal thoughts")]).unwrap()
    }

    #[test]
    fn load_single_concept() {
        let f = write(&[
            r#"{"id":"c1","label":"suicidal thoughts","synonyms":[],"phq9":9,"definition":null,"source":"DFO"}"#,
        ]);
        let lex = Lexicon::load(f.path()).unwrap();
        assert_eq!(lex.lookup_phrase("suicidal thoughts"), vec!["c1"]);
    }

    #[test]
    fn empty_file_is_empty_lexicon() {
        let f = write(&[]);
        let lex = Lexicon::load(f.path()).unwrap();
        assert!(lex.is_empty());
        assert!(lex.lookup_phrase("anything").is_empty());
    }

    #[test]
    fn synonym_equal_to_label_is_rejected() {
        let f = write(&[
            r#"{"id":"c1","label":"crying","synonyms":["Crying"],"phq9":null,"definition":null,"source":"DFO"}"#,
        ]);
        let err = Lexicon::load(f.path()).unwrap_err().to_string();
        assert!(err.contains("synonym duplicates label"), "{err}");
        assert!(err.contains(":1:"), "{err}");
    }

    #[test]
    fn malformed_and_duplicate_records_report_line() {
        let ok = r#"{"id":"c1","label":"a","synonyms":[],"phq9":null,"definition":null,"source":"DFO"}"#;
        let f = write(&[ok, "{not json"]);
        assert!(Lexicon::load(f.path()).unwrap_err().to_string().contains(":2:"));
        let f = write(&[ok, "", ok]);
        let err = Lexicon::load(f.path()).unwrap_err().to_string();
        assert!(err.contains(":3:") && err.contains("duplicate concept id"), "{err}");
        let f = write(&[r#"{"id":"c1","label":"a","synonyms":[],"phq9":12,"definition":null,"source":"DFO"}"#]);
        assert!(Lexicon::load(f.path()).is_err());
        assert!(Lexicon::load(Path::new("/nonexistent/lexicon.jsonl")).is_err());
    }

    #[test]
    fn lookup_normalizes() {
        let lex = toy();
        assert_eq!(lex.lookup_phrase("Suicidal  THOUGHTS "), vec!["c1"]);
        assert!(lex.lookup_phrase("haircut").is_empty());
        assert_eq!(lex.lookup_phrase("suicidal thoughts"), lex.lookup_phrase("suicidal thoughts"));
    }

    #[test]
    fn exact_phrase_heads_similarity_list() {
        let lex = Lexicon::from_concepts([
            Concept::new("c1", "wrist"),
            Concept::new("c2", "hair cut").with_synonyms(&["haircut"]),
        ])
        .unwrap();
        let enc = StubEncoder::new(32);
        let hits = lex.expand_similar("wrist", &enc, SIMILARITY_THRESHOLD).unwrap();
        assert_eq!(hits[0].0, "c1");
        assert!((hits[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        // (4,3)·(5,0) / (5·5) = 20/25 = 0.8 exactly
        let lex = Lexicon::from_concepts([Concept::new("c1", "abc")]).unwrap();
        let enc = TableEncoder::new(2)
            .with("abc", vec![4.0, 3.0])
            .with("xyz", vec![5.0, 0.0])
            .with("pqr", vec![0.0, 5.0]);
        let at = lex.expand_similar("xyz", &enc, 0.8).unwrap();
        assert_eq!(at, vec![("c1".to_string(), 0.8)]);
        // cos((4,3),(0,5)) = 0.6
        assert!(lex.expand_similar("pqr", &enc, 0.8).unwrap().is_empty());
        assert!(lex.expand_similar("xyz", &enc, 0.0).is_err());
        assert!(lex.expand_similar("xyz", &enc, 1.5).is_err());
    }

    #[test]
    fn ties_break_by_concept_id() {
        let lex = Lexicon::from_concepts([
            Concept::new("b", "second"),
            Concept::new("a", "first"),
        ])
        .unwrap();
        let enc = TableEncoder::new(2)
            .with("first", vec![1.0, 0.0])
            .with("second", vec![1.0, 0.0])
            .with("query", vec![1.0, 0.0]);
        let hits = lex.expand_similar("query", &enc, 0.9).unwrap();
        assert_eq!(hits.iter().map(|h| h.0.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
    }

    #[test]
    fn save_load_round_trip() {
        let lex = Lexicon::from_concepts([
            Concept::new("c1", "Suicidal Thoughts")
                .with_synonyms(&["wanting to die", "suicidal ideation"])
                .with_phq9(9)
                .with_definition("thoughts about ending one's life"),
            Concept::new("c2", "crying"),
        ])
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        lex.save(f.path()).unwrap();
        let back = Lexicon::load(f.path()).unwrap();
        assert_eq!(lex, back);
    }

    fn arb_lexicon() -> impl Strategy<Value = Lexicon> {
        proptest::collection::btree_map(
            "[a-z]{1,3}",
            proptest::collection::btree_set("[a-z]{2,5}( [a-z]{2,5}){0,2}", 1..4),
            0..6,
        )
        .prop_map(|m| {
            let concepts = m.into_iter().map(|(id, phrases)| {
                let phrases: Vec<String> = phrases.into_iter().collect();
                Concept::new(&id, &phrases[0]).with_synonyms(&phrases[1..])
            });
            Lexicon::from_concepts(concepts).unwrap()
        })
    }

    proptest! {
        #[test]
        fn index_is_complete(lex in arb_lexicon()) {
            for c in lex.concepts() {
                for p in c.phrases() {
                    prop_assert!(lex.lookup_phrase(p).contains(&c.id.as_str()));
                }
            }
            for (_, ids) in lex.phrases() {
                for id in ids {
                    prop_assert!(lex.concept(id).is_some());
                }
            }
        }

        #[test]
        fn similarity_is_monotone_in_threshold(lex in arb_lexicon(), q in "[a-z]{2,5}", t1 in 0.05f64..1.0, dt in 0.0f64..0.5) {
            let enc = StubEncoder::new(4);
            let t2 = (t1 + dt).min(1.0);
            let lo = lex.expand_similar(&q, &enc, t1).unwrap();
            let hi = lex.expand_similar(&q, &enc, t2).unwrap();
            for hit in &hi {
                prop_assert!(lo.iter().any(|l| l.0 == hit.0));
            }
        }
    }
}
