use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::saliency::{Block, SalientSpan};
use super::ConceptAttribution;
use crate::error::{Error, Result};
use crate::label::Label;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub schema: u32,
    pub doc_id: String,
    pub text: String,
    pub block: Block,
    pub spans: Vec<SalientSpan>,
    pub attributions: Vec<ConceptAttribution>,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_explanation: Option<String>,
    pub model_decision: Label,
    pub probs: Vec<f64>,
}

impl ExplanationReport {
    /// Pretty JSON with a trailing newline; floats round-trip exactly.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Data(format!("cannot serialize report: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: ExplanationReport =
            serde_json::from_str(text).map_err(|e| Error::Data(format!("malformed report: {e}")))?;
        if report.schema != REPORT_SCHEMA {
            return Err(Error::Data(format!("unsupported report schema {}", report.schema)));
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Html,
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            '\n' => out.push_str("<br>\n"),
            c => out.push(c),
        }
    }
    out
}

/// Single-file HTML page: the post with highlighted spans (opacity scaled by
/// score relative to the top span) and a concept sidebar.
pub fn render_html(report: &ExplanationReport) -> String {
    let mut spans: Vec<&SalientSpan> = report.spans.iter().collect();
    spans.sort_by_key(|s| s.char_start);
    let top = report.spans.iter().map(|s| s.score).fold(0.0, f64::max);

    let mut body = String::new();
    let mut at = 0;
    for span in spans {
        if span.char_start < at {
            continue;
        }
        body.push_str(&escape_html(&report.text[at..span.char_start]));
        let alpha = if top > 0.0 { span.score / top } else { 0.0 };
        let _ = write!(
            body,
            "<mark style=\"background: rgba(255, 170, 0, {alpha:.3})\" title=\"score {:.4}\">{}</mark>",
            span.score,
            escape_html(&report.text[span.range()])
        );
        at = span.char_end;
    }
    body.push_str(&escape_html(&report.text[at..]));

    let mut sidebar = String::new();
    if report.attributions.is_empty() {
        sidebar.push_str("<li>(none)</li>\n");
    }
    for a in &report.attributions {
        let phq9 = a.phq9.map(|c| format!(", PHQ-9 item {c}")).unwrap_or_default();
        let _ = writeln!(
            sidebar,
            "<li><b>{}</b> <code>{}</code> (similarity {:.3}{phq9}) &larr; &ldquo;{}&rdquo;</li>",
            escape_html(&a.preferred_label),
            escape_html(&a.concept_id),
            a.similarity,
            escape_html(&report.text[a.span.range()])
        );
    }
    let explanation = report
        .llm_explanation
        .as_deref()
        .map(|e| format!("<h2>Explanation</h2>\n<p>{}</p>\n", escape_html(e)))
        .unwrap_or_default();

    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{id}</title>\n\
<style>body{{font-family:sans-serif;display:flex;gap:2em;margin:2em}}main{{flex:3;line-height:1.6}}\
aside{{flex:1;border-left:1px solid #ccc;padding-left:1em}}mark{{border-radius:3px}}</style>\n\
</head>\n<body>\n<main>\n<h1>{id}</h1>\n<p>Decision: {decision}</p>\n<p>{body}</p>\n{explanation}</main>\n\
<aside>\n<h2>Concepts</h2>\n<ul>\n{sidebar}</ul>\n</aside>\n</body>\n</html>\n",
        id = escape_html(&report.doc_id),
        decision = escape_html(&report.model_decision.to_string()),
    )
}

pub fn emit_report(report: &ExplanationReport, format: ReportFormat, path: &Path) -> Result<()> {
    let content = match format {
        ReportFormat::Json => report.to_json()?,
        ReportFormat::Html => render_html(report),
    };
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> ExplanationReport {
        ExplanationReport {
            schema: REPORT_SCHEMA,
            doc_id: "u1".into(),
            text: "I <cry> & 'sleep'".into(),
            block: Block::Fused,
            spans: vec![SalientSpan { char_start: 2, char_end: 7, score: 0.1 + 0.2, block: Block::Fused }],
            attributions: vec![],
            prompt: "p".into(),
            llm_explanation: None,
            model_decision: Label::Class(1),
            probs: vec![0.1, 1.0 / 3.0],
        }
    }

    #[test]
    fn json_round_trip() {
        let r = report();
        let json = r.to_json().unwrap();
        assert!(json.contains("\"schema\": 1"));
        assert!(!json.contains("llm_explanation"));
        let back = ExplanationReport::from_json(&json).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn html_escapes_text() {
        let html = render_html(&report());
        assert!(html.contains("&lt;cry&gt;</mark>"));
        assert!(html.contains("&amp; &#39;sleep&#39;"));
        assert!(!html.contains("<cry>"));
    }

    #[test]
    fn html_without_spans() {
        let mut r = report();
        r.spans.clear();
        let html = render_html(&r);
        assert!(!html.contains("<mark"));
        assert!(html.ends_with("</html>\n"));
    }
}
