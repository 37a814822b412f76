//! Lexicon mapping: POS-filtered noun n-grams resolved against the
//! ontology, then similar phrases, then UMLS, and rendered as phrase-tagged
//! text.
//!
//! Only all-noun candidates are considered, so verb-centred phrases in the
//! ontology ("cut my wrist") are never tagged here even if present.

mod pos;

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use pos::PosTag;

use crate::encoding::EncoderBackend;
use crate::error::{Error, Result};
use crate::lexicon::{umls_top_concepts, Lexicon, SimilarityIndex, UmlsBackend, SIMILARITY_THRESHOLD};
use crate::text::{OffsetMap, Renderer};

/// Longest n-gram considered for a phrase.
pub const MAX_GRAM: usize = 4;
/// Number of UMLS concepts imported per match.
pub const UMLS_TOP_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub pos: PosTag,
    /// Byte offsets into the source text.
    pub char_start: usize,
    pub char_end: usize,
}

/// Split `text` into POS-tagged tokens, left to right.
pub fn tokenize_and_pos(text: &str) -> Vec<Token> {
    pos::tag_pieces(text)
        .into_iter()
        .map(|(r, pos)| Token {
            text: text[r.clone()].to_string(),
            pos,
            char_start: r.start,
            char_end: r.end,
        })
        .collect()
}

/// A contiguous run of noun tokens `[first, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub first: usize,
    pub end: usize,
    pub char_start: usize,
    pub char_end: usize,
}

impl Candidate {
    pub fn len(&self) -> usize {
        self.end - self.first
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.first
    }
}

/// Every all-noun n-gram with 1 <= n <= `max_gram`, grouped by start
/// position and longest first within a start.
pub fn noun_candidates(tokens: &[Token], max_gram: usize) -> Vec<Candidate> {
    let mut out = Vec::new();
    for first in 0..tokens.len() {
        let run = tokens[first..]
            .iter()
            .take(max_gram)
            .take_while(|t| t.pos.is_noun())
            .count();
        for n in (1..=run).rev() {
            out.push(Candidate {
                first,
                end: first + n,
                char_start: tokens[first].char_start,
                char_end: tokens[first + n - 1].char_end,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MatchKind {
    Direct,
    SynonymSimilar,
    Umls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSpan {
    pub char_start: usize,
    pub char_end: usize,
    pub concept_id: String,
    pub match_kind: MatchKind,
    pub similarity: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub umls_cuis: Vec<String>,
    /// Definitions of `umls_cuis`, index-aligned.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub umls_definitions: Vec<String>,
}

impl ConceptSpan {
    pub fn range(&self) -> Range<usize> {
        self.char_start..self.char_end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedDocument {
    pub doc_id: String,
    pub text: String,
    pub tokens: Vec<Token>,
    pub spans: Vec<ConceptSpan>,
    pub tagged_text: String,
}

impl TaggedDocument {
    /// Map from byte ranges of `tagged_text` back to `text`.
    pub fn offset_map(&self) -> OffsetMap {
        render_tagged(&self.text, &self.spans).1
    }
}

/// Render `text` with each span replaced by `[[surface|concept_id]]`;
/// reserved characters outside spans are backslash-escaped.
pub fn render_tagged(text: &str, spans: &[ConceptSpan]) -> (String, OffsetMap) {
    let mut r = Renderer::new();
    let mut at = 0;
    for span in spans {
        r.literal(&text[at..span.char_start], at);
        let marker = format!("[[{}|{}]]", &text[span.range()], span.concept_id);
        r.atomic(&marker, span.range());
        at = span.char_end;
    }
    r.literal(&text[at..], at);
    r.finish()
}

/// Remove every tag marker (keeping its surface phrase) and undo escaping.
pub fn strip_tags(tagged: &str) -> String {
    let mut out = String::with_capacity(tagged.len());
    let mut rest = tagged;
    while let Some(c) = rest.chars().next() {
        if c == '\\' {
            let mut it = rest[1..].chars();
            if let Some(next) = it.next() {
                out.push(next);
                rest = &rest[1 + next.len_utf8()..];
                continue;
            }
        }
        if let Some(inner) = rest.strip_prefix("[[") {
            if let Some(close) = inner.find("]]") {
                if let Some(bar) = inner[..close].rfind('|') {
                    out.push_str(&inner[..bar]);
                    rest = &inner[close + 2..];
                    continue;
                }
            }
        }
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

/// Resolves noun candidates against a lexicon, a similarity index and UMLS.
pub struct Tagger<'a> {
    lexicon: &'a Lexicon,
    encoder: &'a dyn EncoderBackend,
    umls: &'a dyn UmlsBackend,
    similarity: SimilarityIndex,
    threshold: f64,
    max_gram: usize,
}

impl<'a> Tagger<'a> {
    pub fn new(
        lexicon: &'a Lexicon,
        encoder: &'a dyn EncoderBackend,
        umls: &'a dyn UmlsBackend,
    ) -> Result<Self> {
        Ok(Tagger {
            lexicon,
            encoder,
            umls,
            similarity: SimilarityIndex::build(lexicon, encoder)?,
            threshold: SIMILARITY_THRESHOLD,
            max_gram: MAX_GRAM,
        })
    }

    fn resolve(&self, phrase: &str, range: Range<usize>) -> Result<Option<ConceptSpan>> {
        let span = |concept_id: String, match_kind, similarity| ConceptSpan {
            char_start: range.start,
            char_end: range.end,
            concept_id,
            match_kind,
            similarity,
            umls_cuis: Vec::new(),
            umls_definitions: Vec::new(),
        };
        if let Some(id) = self.lexicon.lookup_phrase(phrase).first() {
            return Ok(Some(span(id.to_string(), MatchKind::Direct, 1.0)));
        }
        let similar = self.similarity.query(phrase, self.encoder, self.threshold)?;
        if let Some((id, sim)) = similar.into_iter().next() {
            return Ok(Some(span(id, MatchKind::SynonymSimilar, sim)));
        }
        let hits = umls_top_concepts(self.umls, phrase, UMLS_TOP_K)?;
        if let Some(top) = hits.first() {
            let mut s = span(top.cui.clone(), MatchKind::Umls, 1.0);
            s.umls_cuis = hits.iter().map(|h| h.cui.clone()).collect();
            s.umls_definitions = hits.iter().map(|h| h.definition.clone()).collect();
            return Ok(Some(s));
        }
        Ok(None)
    }

    /// Tag one document. Longer candidates are resolved first, leftmost
    /// first among equal lengths; a candidate overlapping an accepted span
    /// is skipped.
    pub fn tag_document(&self, doc_id: &str, text: &str) -> Result<TaggedDocument> {
        let tokens = tokenize_and_pos(text);
        let mut candidates = noun_candidates(&tokens, self.max_gram);
        candidates.sort_by(|a, b| b.len().cmp(&a.len()).then(a.first.cmp(&b.first)));
        let mut taken = vec![false; tokens.len()];
        let mut spans = Vec::new();
        for cand in candidates {
            if taken[cand.first..cand.end].iter().any(|&t| t) {
                continue;
            }
            let range = cand.char_start..cand.char_end;
            if let Some(span) = self.resolve(&text[range.clone()], range)? {
                taken[cand.first..cand.end].iter_mut().for_each(|t| *t = true);
                spans.push(span);
            }
        }
        spans.sort_by_key(|s| s.char_start);
        let (tagged_text, _) = render_tagged(text, &spans);
        Ok(TaggedDocument {
            doc_id: doc_id.to_string(),
            text: text.to_string(),
            tokens,
            spans,
            tagged_text,
        })
    }

    /// Tag many documents in parallel; output order matches input order.
    pub fn tag_all<S: AsRef<str> + Sync>(&self, docs: &[(S, S)]) -> Result<Vec<TaggedDocument>> {
        docs.par_iter()
            .map(|(id, text)| self.tag_document(id.as_ref(), text.as_ref()))
            .collect()
    }
}

/// One-shot convenience around [`Tagger`].
pub fn tag_document(
    doc_id: &str,
    text: &str,
    lexicon: &Lexicon,
    embedder: &dyn EncoderBackend,
    umls: &dyn UmlsBackend,
) -> Result<TaggedDocument> {
    Tagger::new(lexicon, embedder, umls)?.tag_document(doc_id, text)
}

/// Check the structural invariants of a tagged document.
pub fn validate(doc: &TaggedDocument) -> Result<()> {
    let mut prev_end = 0;
    for s in &doc.spans {
        if s.char_start >= s.char_end || s.char_end > doc.text.len() || s.char_start < prev_end {
            return Err(Error::Data(format!(
                "{}: spans out of bounds, unsorted or overlapping",
                doc.doc_id
            )));
        }
        if !(0.0..=1.0).contains(&s.similarity) {
            return Err(Error::Data(format!("{}: similarity out of range", doc.doc_id)));
        }
        if s.match_kind == MatchKind::Umls && s.umls_cuis.is_empty() {
            return Err(Error::Data(format!("{}: UMLS span without CUIs", doc.doc_id)));
        }
        prev_end = s.char_end;
    }
    if strip_tags(&doc.tagged_text) != doc.text {
        return Err(Error::Data(format!(
            "{}: tagged text does not strip back to the source",
            doc.doc_id
        )));
    }
    Ok(())
}
