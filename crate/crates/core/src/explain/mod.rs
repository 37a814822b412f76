//! Attention-based explanations: salient spans of the source text, their
//! lexicon concepts, a prompt for a text-generation model, and JSON/HTML
//! highlight reports.

mod llm;
mod report;
mod saliency;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use llm::{generate_explanation, prompt_digest, HttpLlm, LlmBackend, RecordedLlm, StubLlm, API_KEY_ENV, STUB_PREFIX};
pub use report::{emit_report, render_html, ExplanationReport, ReportFormat, REPORT_SCHEMA};
pub use saliency::{merge_positions, percentile, position_saliency, salient_spans, Block, SalientSpan, SourcePositions};

use crate::encoding::EncoderBackend;
use crate::error::{Error, Result};
use crate::label::{Label, Task};
use crate::lexicon::{Lexicon, SimilarityIndex, SIMILARITY_THRESHOLD};
use crate::network::{decide, ForwardTrace};
use crate::tagging::TaggedDocument;
use crate::text::{normalize_phrase, unescape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptAttribution {
    pub span: SalientSpan,
    pub concept_id: String,
    pub preferred_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phq9: Option<u8>,
    pub similarity: f64,
}

/// Attribute lexicon concepts to spans. Each span is tried as a whole and
/// through every tagged phrase it contains; concepts at cosine ≥ `threshold`
/// are kept, best first. Spans matching nothing are left out.
pub fn map_to_concepts(
    spans: &[SalientSpan],
    tagged: &TaggedDocument,
    lexicon: &Lexicon,
    index: &SimilarityIndex,
    embedder: &dyn EncoderBackend,
    threshold: f64,
) -> Result<Vec<ConceptAttribution>> {
    let mut out = Vec::new();
    for span in spans {
        let mut phrases = vec![&tagged.text[span.range()]];
        for c in &tagged.spans {
            if c.char_start >= span.char_start && c.char_end <= span.char_end {
                phrases.push(&tagged.text[c.range()]);
            }
        }
        let mut best: Vec<(String, f64)> = Vec::new();
        let mut tried = BTreeSet::new();
        for phrase in phrases {
            let normalized = normalize_phrase(&unescape(phrase));
            if normalized.is_empty() || !tried.insert(normalized.clone()) {
                continue;
            }
            for (id, sim) in index.query(&normalized, embedder, threshold)? {
                match best.iter_mut().find(|(b, _)| *b == id) {
                    Some(entry) => entry.1 = entry.1.max(sim),
                    None => best.push((id, sim)),
                }
            }
        }
        best.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (id, similarity) in best {
            let concept = lexicon
                .concept(&id)
                .ok_or_else(|| Error::Data(format!("similarity index names unknown concept {id}")))?;
            out.push(ConceptAttribution {
                span: span.clone(),
                concept_id: id,
                preferred_label: concept.preferred_label.clone(),
                phq9: concept.phq9_category,
                similarity,
            });
        }
    }
    Ok(out)
}

/// Human-readable model decision, e.g. `class 1 (p=0.912)`.
pub fn describe_decision(task: Task, label: &Label, probs: &[f64]) -> String {
    let shown: Vec<String> = match (task, label) {
        (Task::MultiLabel, _) => label.active().iter().map(|&i| format!("{i}:{:.3}", probs[i])).collect(),
        (_, Label::Class(c)) => vec![format!("p={:.3}", probs[*c])],
        _ => Vec::new(),
    };
    if shown.is_empty() {
        label.to_string()
    } else {
        format!("{label} ({})", shown.join(", "))
    }
}

const INSTRUCTION: &str = "Explain to a mental health professional why the model reached its decision \
about the post below, citing the listed concepts and the words in the post that express them.";

/// Deterministic prompt: instruction, the post verbatim, the distinct
/// attributed concepts (with PHQ-9 category when known) and the decision.
pub fn build_prompt(text: &str, attributions: &[ConceptAttribution], decision: &str) -> String {
    let mut seen = BTreeSet::new();
    let mut concepts = Vec::new();
    for a in attributions {
        if seen.insert(a.concept_id.as_str()) {
            concepts.push(match a.phq9 {
                Some(c) => format!("{} (PHQ-9 item {c})", a.preferred_label),
                None => a.preferred_label.clone(),
            });
        }
    }
    let concept_line = if concepts.is_empty() {
        "(none)".to_string()
    } else {
        concepts.join("; ")
    };
    format!("{INSTRUCTION}\npost:\n{text}\nconcepts: {concept_line}\ndecision: {decision}\n")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplainSettings {
    pub top_k: usize,
    pub block: Block,
    pub threshold: f64,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        ExplainSettings {
            top_k: 5,
            block: Block::Fused,
            threshold: SIMILARITY_THRESHOLD,
        }
    }
}

/// Bundles the lexicon, encoder and text generator used to explain documents.
pub struct Explainer<'a> {
    pub lexicon: &'a Lexicon,
    pub index: &'a SimilarityIndex,
    pub encoder: &'a dyn EncoderBackend,
    pub llm: &'a dyn LlmBackend,
    pub settings: ExplainSettings,
}

impl Explainer<'_> {
    /// Build a report for one document. A failing text generator leaves
    /// `llm_explanation` empty instead of failing the report.
    pub fn explain(
        &self,
        tagged: &TaggedDocument,
        trace: &ForwardTrace,
        positions: &SourcePositions,
        task: Task,
    ) -> Result<ExplanationReport> {
        let s = &self.settings;
        let spans = salient_spans(trace, positions, tagged.text.len(), s.top_k, s.block)?;
        let attributions = map_to_concepts(&spans, tagged, self.lexicon, self.index, self.encoder, s.threshold)?;
        let decision = decide(task, &trace.probs);
        let probs = trace.probs.to_vec();
        let prompt = build_prompt(&tagged.text, &attributions, &describe_decision(task, &decision, &probs));
        let llm_explanation = match generate_explanation(self.llm, &prompt) {
            Ok(text) => Some(text),
            Err(e) => {
                log::warn!("{}: explanation backend failed: {e}", tagged.doc_id);
                None
            }
        };
        Ok(ExplanationReport {
            schema: REPORT_SCHEMA,
            doc_id: tagged.doc_id.clone(),
            text: tagged.text.clone(),
            block: s.block,
            spans,
            attributions,
            prompt,
            llm_explanation,
            model_decision: decision,
            probs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attribution(id: &str, label: &str, phq9: Option<u8>) -> ConceptAttribution {
        ConceptAttribution {
            span: SalientSpan { char_start: 0, char_end: 1, score: 1.0, block: Block::Fused },
            concept_id: id.into(),
            preferred_label: label.into(),
            phq9,
            similarity: 1.0,
        }
    }

    #[test]
    fn empty_prompt_marker() {
        let p = build_prompt("I feel fine.", &[], "class 0");
        assert!(p.contains("I feel fine."));
        assert!(p.contains("concepts: (none)"));
        assert_eq!(p, build_prompt("I feel fine.", &[], "class 0"));
    }

    #[test]
    fn prompt_lists_each_concept_once() {
        let a = vec![
            attribution("dfo:1", "crying", Some(2)),
            attribution("dfo:1", "crying", Some(2)),
            attribution("dfo:2", "need therapy", None),
        ];
        let p = build_prompt("post", &a, "class 1");
        assert!(p.contains("concepts: crying (PHQ-9 item 2); need therapy\n"));
        let echoed = StubLlm.complete(&p).unwrap();
        assert!(echoed.contains("crying") && echoed.contains("need therapy"));
    }

    #[test]
    fn decisions_render() {
        assert_eq!(describe_decision(Task::Binary, &Label::Class(1), &[0.2, 0.9]), "class 1 (p=0.900)");
        assert_eq!(
            describe_decision(Task::MultiLabel, &Label::Multi(vec![true, false]), &[0.7, 0.1]),
            "labels {0} (0:0.700)"
        );
    }
}
