use std::ops::Range;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ForwardTrace;
use crate::text::OffsetMap;

/// Attention block whose weights drive the highlights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Block {
    Domain,
    Commonsense,
    #[default]
    Fused,
}

impl std::str::FromStr for Block {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "domain" => Ok(Block::Domain),
            "commonsense" => Ok(Block::Commonsense),
            "fused" => Ok(Block::Fused),
            other => Err(Error::Config(format!(
                "unknown attention block {other:?} (expected domain, commonsense or fused)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalientSpan {
    pub char_start: usize,
    pub char_end: usize,
    pub score: f64,
    pub block: Block,
}

impl SalientSpan {
    pub fn range(&self) -> Range<usize> {
        self.char_start..self.char_end
    }
}

/// Source-text byte range of every input position of both branches;
/// `None` for positions with no source (separators, generated aspects).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourcePositions {
    pub domain: Vec<Option<Range<usize>>>,
    pub commonsense: Vec<Option<Range<usize>>>,
}

impl SourcePositions {
    /// Map encoder unit ranges (into a rendered string) back through `map`.
    pub fn map_units(units: &[Range<usize>], map: &OffsetMap) -> Vec<Option<Range<usize>>> {
        units.iter().map(|u| map.to_source(u.clone())).collect()
    }
}

/// Mean of each column over all rows.
fn column_mean(a: &Array2<f64>) -> Vec<f64> {
    let rows = a.nrows().max(1) as f64;
    a.columns().into_iter().map(|c| c.sum() / rows).collect()
}

/// Received attention per input position of `block`: the column-mean of the
/// head-averaged attention matrix. For the fused block only the domain-branch
/// columns are returned.
pub fn position_saliency(trace: &ForwardTrace, block: Block) -> Vec<f64> {
    match block {
        Block::Domain => column_mean(&trace.a_domain.mean()),
        Block::Commonsense => column_mean(&trace.a_commonsense.mean()),
        Block::Fused => {
            let mut s = column_mean(&trace.a_fused.mean());
            s.truncate(trace.domain_len);
            s
        }
    }
}

/// Linear-interpolation percentile (`q` in [0, 1]) of `values`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

/// Merge scored positions (in input order) into spans. Runs of adjacent
/// positions scoring strictly above the 75th percentile become one span whose
/// score is the maximum of its members; every other position stays a span of
/// its own. Spans that would overlap in the source are unioned.
pub fn merge_positions(positions: &[(Range<usize>, f64)]) -> Vec<(Range<usize>, f64)> {
    let scores: Vec<f64> = positions.iter().map(|(_, s)| *s).collect();
    let cut = percentile(&scores, 0.75);
    // (span, score, whether the span's last position is high)
    let mut out: Vec<(Range<usize>, f64, bool)> = Vec::new();
    for (range, score) in positions {
        let high = *score > cut;
        match out.last_mut() {
            Some((r, s, was_high)) if (high && *was_high) || range.start < r.end => {
                r.start = r.start.min(range.start);
                r.end = r.end.max(range.end);
                *s = s.max(*score);
                *was_high = high;
            }
            _ => out.push((range.clone(), *score, high)),
        }
    }
    out.into_iter().map(|(r, s, _)| (r, s)).collect()
}

/// Top `top_k` highlighted spans of the source text, highest score first,
/// ties in document order.
pub fn salient_spans(
    trace: &ForwardTrace,
    positions: &SourcePositions,
    text_len: usize,
    top_k: usize,
    block: Block,
) -> Result<Vec<SalientSpan>> {
    let saliency = position_saliency(trace, block);
    let sources = match block {
        Block::Domain | Block::Fused => &positions.domain,
        Block::Commonsense => &positions.commonsense,
    };
    if sources.len() != saliency.len() {
        return Err(Error::Input(format!(
            "trace has {} positions in the {block:?} block but the document maps {}",
            saliency.len(),
            sources.len()
        )));
    }
    let mut mapped = Vec::with_capacity(sources.len());
    for (src, &score) in sources.iter().zip(&saliency) {
        if let Some(r) = src {
            if r.end > text_len || r.start >= r.end {
                return Err(Error::Input(format!("position {r:?} lies outside the document")));
            }
            mapped.push((r.clone(), score.max(0.0)));
        }
    }
    let mut spans: Vec<SalientSpan> = merge_positions(&mapped)
        .into_iter()
        .map(|(r, score)| SalientSpan {
            char_start: r.start,
            char_end: r.end,
            score,
            block,
        })
        .collect();
    spans.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.char_start.cmp(&b.char_start)));
    spans.truncate(top_k);
    Ok(spans)
}
