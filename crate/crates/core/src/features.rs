//! Turn tagged documents into the two embedded input branches of the network.

use ndarray::Array2;
use rayon::prelude::*;

use crate::encoding::{embed_sequence, extract_aspects, render_with_aspects, AspectSet, CommonsenseBackend, EncoderBackend};
use crate::error::{Error, Result};
use crate::explain::SourcePositions;
use crate::tagging::TaggedDocument;
use crate::text::Renderer;

#[derive(Debug, Clone)]
pub struct DocumentFeatures {
    pub x_domain: Array2<f64>,
    pub x_cs: Array2<f64>,
    pub positions: SourcePositions,
    /// Absent when knowledge infusion is disabled.
    pub aspects: Option<AspectSet>,
}

/// Builds network inputs. With knowledge enabled the domain branch encodes
/// the tagged text and the commonsense branch encodes the post followed by
/// its five aspects; with knowledge disabled both branches encode the plain
/// post.
pub struct FeatureBuilder<'a> {
    pub encoder: &'a dyn EncoderBackend,
    pub commonsense: &'a dyn CommonsenseBackend,
    pub max_len: usize,
    pub knowledge: bool,
}

impl FeatureBuilder<'_> {
    pub fn build(&self, doc: &TaggedDocument) -> Result<DocumentFeatures> {
        let plain = || {
            let mut r = Renderer::new();
            r.literal(&doc.text, 0);
            r.finish()
        };
        let (domain_text, domain_map) = if self.knowledge {
            (doc.tagged_text.clone(), doc.offset_map())
        } else {
            plain()
        };
        let (cs_text, cs_map, aspects) = if self.knowledge {
            let aspects = extract_aspects(self.commonsense, &doc.text)?;
            let (text, map) = render_with_aspects(&doc.text, &aspects);
            (text, map, Some(aspects))
        } else {
            let (text, map) = plain();
            (text, map, None)
        };
        let domain = embed_sequence(self.encoder, &domain_text, self.max_len)?;
        let cs = embed_sequence(self.encoder, &cs_text, self.max_len)?;
        if domain.is_empty() || cs.is_empty() {
            return Err(Error::Input(format!("{}: document encodes to no units", doc.doc_id)));
        }
        let positions = SourcePositions {
            domain: SourcePositions::map_units(domain.spans(), &domain_map),
            commonsense: SourcePositions::map_units(cs.spans(), &cs_map),
        };
        Ok(DocumentFeatures {
            x_domain: domain.into_vectors(),
            x_cs: cs.into_vectors(),
            positions,
            aspects,
        })
    }

    /// Features for many documents, in input order.
    pub fn build_all(&self, docs: &[TaggedDocument]) -> Result<Vec<DocumentFeatures>> {
        let limit = self.encoder.max_parallelism().min(self.commonsense.max_parallelism());
        if limit <= 1 {
            docs.iter().map(|d| self.build(d)).collect()
        } else {
            docs.par_iter().map(|d| self.build(d)).collect()
        }
    }
}
