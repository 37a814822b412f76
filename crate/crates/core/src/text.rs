//! Phrase normalization and the word scanner shared by the POS tagger and
//! the stub encoder.

use std::ops::Range;

/// Lowercase, strip non-alphanumeric characters at both edges and collapse
/// internal whitespace to single spaces.
pub fn normalize_phrase(phrase: &str) -> String {
    let lowered = phrase.to_lowercase();
    let trimmed = lowered.trim_matches(|c: char| !c.is_alphanumeric());
    let mut out = String::with_capacity(trimmed.len());
    for (i, word) in trimmed.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceKind {
    Word,
    Punct,
}

/// A word or punctuation character located by byte range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub range: Range<usize>,
    pub kind: PieceKind,
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-')
}

/// Split `text` into words and single punctuation characters.
///
/// Words are runs of alphanumerics, optionally joined by internal hyphens or
/// apostrophes. English clitics are split off the way treebank tokenizers do
/// (`don't` -> `do` + `n't`, `I'm` -> `I` + `'m`).
pub fn scan(text: &str) -> Vec<Piece> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut pieces = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if !c.is_alphanumeric() {
            pieces.push(Piece {
                range: start..start + c.len_utf8(),
                kind: PieceKind::Punct,
            });
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() {
            let cj = chars[j].1;
            if cj.is_alphanumeric() {
                j += 1;
            } else if is_joiner(cj) && j + 1 < chars.len() && chars[j + 1].1.is_alphanumeric() {
                j += 2;
            } else {
                break;
            }
        }
        let end = if j < chars.len() { chars[j].0 } else { text.len() };
        split_clitics(text, start..end, &mut pieces);
        i = j;
    }
    pieces
}

fn split_clitics(text: &str, range: Range<usize>, out: &mut Vec<Piece>) {
    let word = &text[range.clone()];
    let lower = word.to_lowercase();
    let apostrophe = lower
        .char_indices()
        .find(|&(_, c)| c == '\'' || c == '\u{2019}');
    if let Some((pos, ap)) = apostrophe {
        let after = &lower[pos + ap.len_utf8()..];
        let split_at = if after == "t" && pos > 0 && lower[..pos].ends_with('n') && pos > 1 {
            Some(pos - 1)
        } else if matches!(after, "s" | "m" | "re" | "ve" | "ll" | "d") && pos > 0 {
            Some(pos)
        } else {
            None
        };
        // lowercase never changes byte lengths for the ASCII clitics handled here
        if let Some(at) = split_at.filter(|&at| word.is_char_boundary(at)) {
            out.push(Piece {
                range: range.start..range.start + at,
                kind: PieceKind::Word,
            });
            out.push(Piece {
                range: range.start + at..range.end,
                kind: PieceKind::Word,
            });
            return;
        }
    }
    out.push(Piece {
        range,
        kind: PieceKind::Word,
    });
}


/// Characters that carry structure inside rendered strings and must be
/// escaped with a backslash when they appear in literal text.
pub fn needs_escape(c: char) -> bool {
    matches!(c, '\\' | '[' | ']')
}

/// Undo [`needs_escape`]-style escaping.
pub fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            if let Some(next) = chars.next() {
                out.push(next);
                continue;
            }
        }
        out.push(c);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Segment {
    rendered: Range<usize>,
    source: Option<Range<usize>>,
    linear: bool,
}

/// Byte-offset correspondence between a rendered string and the source text
/// it was built from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OffsetMap {
    segments: Vec<Segment>,
}

impl OffsetMap {
    /// Map a rendered byte range back to the source range it covers, or
    /// `None` when the range only touches material with no source
    /// (separators, generated aspect text).
    pub fn to_source(&self, rendered: Range<usize>) -> Option<Range<usize>> {
        let mut start = None;
        let mut end = None;
        for seg in &self.segments {
            if seg.rendered.end <= rendered.start || seg.rendered.start >= rendered.end {
                continue;
            }
            let Some(src) = &seg.source else { continue };
            let (s, e) = if seg.linear {
                let lo = rendered.start.max(seg.rendered.start) - seg.rendered.start;
                let hi = rendered.end.min(seg.rendered.end) - seg.rendered.start;
                (src.start + lo, src.start + hi)
            } else {
                (src.start, src.end)
            };
            start.get_or_insert(s);
            end = Some(e);
        }
        match (start, end) {
            (Some(s), Some(e)) if s < e => Some(s..e),
            _ => None,
        }
    }
}

/// Incrementally builds a rendered string together with its [`OffsetMap`].
#[derive(Debug, Default)]
pub struct Renderer {
    out: String,
    map: OffsetMap,
}

impl Renderer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append source text verbatim, escaping reserved characters.
    pub fn literal(&mut self, source: &str, offset: usize) {
        let mut run_start = 0;
        for (i, c) in source.char_indices() {
            if needs_escape(c) {
                self.linear(&source[run_start..i], offset + run_start);
                let at = self.out.len();
                self.out.push('\\');
                self.out.push(c);
                self.map.segments.push(Segment {
                    rendered: at..self.out.len(),
                    source: Some(offset + i..offset + i + c.len_utf8()),
                    linear: false,
                });
                run_start = i + c.len_utf8();
            }
        }
        self.linear(&source[run_start..], offset + run_start);
    }

    fn linear(&mut self, run: &str, offset: usize) {
        if run.is_empty() {
            return;
        }
        let at = self.out.len();
        self.out.push_str(run);
        self.map.segments.push(Segment {
            rendered: at..self.out.len(),
            source: Some(offset..offset + run.len()),
            linear: true,
        });
    }

    /// Append `rendered` as one unit standing for `source` as a whole.
    pub fn atomic(&mut self, rendered: &str, source: Range<usize>) {
        let at = self.out.len();
        self.out.push_str(rendered);
        self.map.segments.push(Segment {
            rendered: at..self.out.len(),
            source: Some(source),
            linear: false,
        });
    }

    /// Append material with no counterpart in the source.
    pub fn synthetic(&mut self, rendered: &str) {
        let at = self.out.len();
        self.out.push_str(rendered);
        self.map.segments.push(Segment {
            rendered: at..self.out.len(),
            source: None,
            linear: false,
        });
    }

    pub fn finish(self) -> (String, OffsetMap) {
        (self.out, self.map)
    }
}

#[cfg(test)]
mod render_tests {
    use super::*;

    #[test]
    fn literal_escapes_and_maps_back() {
        let src = "a [b] c";
        let mut r = Renderer::new();
        r.literal(src, 0);
        let (out, map) = r.finish();
        assert_eq!(out, r"a \[b\] c");
        assert_eq!(unescape(&out), src);
        // "b" sits at rendered 4..5, source 3..4
        assert_eq!(map.to_source(4..5), Some(3..4));
        assert_eq!(map.to_source(0..out.len()), Some(0..src.len()));
    }

    #[test]
    fn atomic_and_synthetic_segments() {
        let mut r = Renderer::new();
        r.literal("I cut my ", 0);
        r.atomic("[[wrist|c1]]", 9..14);
        r.synthetic(" [SEP] none");
        let (out, map) = r.finish();
        let tag = out.find("[[").unwrap();
        assert_eq!(map.to_source(tag + 2..tag + 7), Some(9..14));
        let sep = out.find("[SEP]").unwrap();
        assert_eq!(map.to_source(sep..sep + 5), None);
    }
}
