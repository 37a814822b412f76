use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::ops::Range;
use std::time::Duration;

use kinn::backend::BackendError;
use kinn::encoding::{StubEncoder, TableEncoder};
use kinn::explain::{
    map_to_concepts, merge_positions, percentile, salient_spans, Block, Explainer, ExplainSettings, ExplanationReport,
    HttpLlm, LlmBackend, SalientSpan, SourcePositions, API_KEY_ENV,
};
use kinn::lexicon::{Concept, Lexicon, NoUmls, SimilarityIndex};
use kinn::network::{AttentionMap, ForwardTrace};
use kinn::tagging::{tag_document, TaggedDocument};
use kinn::Task;
use ndarray::{array, Array2};
use proptest::prelude::*;

/// Trace whose fused attention puts most mass on domain columns 2 and 3.
fn hand_trace() -> ForwardTrace {
    let n = 8;
    let mut fused = Array2::from_elem((n, n), 0.05);
    for mut row in fused.rows_mut() {
        row[2] = 0.35;
        row[3] = 0.45;
    }
    let uniform = |r: usize, c: usize| AttentionMap { heads: vec![Array2::from_elem((r, c), 1.0 / c as f64)] };
    ForwardTrace {
        a_domain: uniform(6, 6),
        a_commonsense: uniform(2, 2),
        a_fused: AttentionMap { heads: vec![fused.clone(), fused] },
        h: Array2::zeros((n, 4)),
        z: array![0.0],
        logits: array![0.0, 1.0],
        probs: array![0.3, 0.8],
        domain_len: 6,
        fused_mask: vec![true; n],
    }
}

#[test]
fn saliency_follows_received_attention() {
    // "I cut my wrist last night"; "my" and "wrist" both clear the 75th
    // percentile and merge
    let positions = night_positions();
    let spans = salient_spans(&hand_trace(), &positions, 25, 5, Block::Fused).unwrap();
    assert_eq!((spans[0].char_start, spans[0].char_end), (6, 14));
    assert!((spans[0].score - 0.45).abs() < 1e-12);
    assert_eq!(spans.len(), 5);
    assert_eq!(spans[1].char_start, 0);
    assert!((spans[1].score - 0.05).abs() < 1e-12);
    assert!(spans.windows(2).all(|w| w[0].score >= w[1].score));

    let top1 = salient_spans(&hand_trace(), &positions, 25, 1, Block::Fused).unwrap();
    assert_eq!(top1.len(), 1);
    let short = SourcePositions { domain: vec![Some(0..1)], ..positions.clone() };
    assert!(salient_spans(&hand_trace(), &short, 25, 5, Block::Fused).is_err());
    assert!(salient_spans(&hand_trace(), &positions, 14, 5, Block::Fused).is_err());
    // positions without a source (separators) are skipped
    let mut gaps = positions.clone();
    gaps.domain[0] = None;
    let spans = salient_spans(&hand_trace(), &gaps, 25, 10, Block::Fused).unwrap();
    assert!(spans.iter().all(|s| s.char_start != 0));
}

fn night_positions() -> SourcePositions {
    SourcePositions {
        domain: vec![Some(0..1), Some(2..5), Some(6..8), Some(9..14), Some(15..19), Some(20..25)],
        commonsense: vec![Some(0..25), None],
    }
}

/// Union-find over positions: neighbours join when both score strictly above
/// the 75th percentile, any two positions join when their sources overlap.
fn merge_oracle(positions: &[(Range<usize>, f64)]) -> Vec<(Range<usize>, f64)> {
    let n = positions.len();
    let mut sorted: Vec<f64> = positions.iter().map(|p| p.1).collect();
    sorted.sort_by(f64::total_cmp);
    let cut = if n == 0 {
        0.0
    } else {
        let rank = 0.75 * (n - 1) as f64;
        let (lo, hi) = (rank.floor() as usize, rank.ceil() as usize);
        sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
    };
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, i: usize) -> usize {
        if p[i] != i {
            let r = find(p, p[i]);
            p[i] = r;
        }
        p[i]
    }
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&positions[i], &positions[j]);
            let adjacent_high = j == i + 1 && a.1 > cut && b.1 > cut;
            let overlap = a.0.start < b.0.end && b.0.start < a.0.end;
            if adjacent_high || overlap {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[rj] = ri;
            }
        }
    }
    let mut groups: Vec<(usize, Range<usize>, f64)> = Vec::new();
    for (i, (range, score)) in positions.iter().enumerate() {
        let root = find(&mut parent, i);
        match groups.iter_mut().find(|g| g.0 == root) {
            Some(g) => {
                g.1 = g.1.start.min(range.start)..g.1.end.max(range.end);
                g.2 = g.2.max(*score);
            }
            None => groups.push((root, range.clone(), *score)),
        }
    }
    groups.into_iter().map(|(_, r, s)| (r, s)).collect()
}

/// Source ranges in document order; a repeated range stands for several
/// encoder units inside one tagged phrase.
fn arb_positions() -> impl Strategy<Value = Vec<(Range<usize>, f64)>> {
    proptest::collection::vec((0usize..3, 1usize..4, any::<bool>(), 0u8..8), 0..16).prop_map(|steps| {
        let mut at = 0;
        let mut out: Vec<(Range<usize>, f64)> = Vec::new();
        for (gap, len, repeat, score) in steps {
            let range = match out.last() {
                Some((r, _)) if repeat => r.clone(),
                _ => {
                    let r = at + gap..at + gap + len;
                    at = r.end;
                    r
                }
            };
            out.push((range, f64::from(score) / 8.0));
        }
        out
    })
}

proptest! {
    #[test]
    fn merge_matches_union_find(positions in arb_positions()) {
        prop_assert_eq!(merge_positions(&positions), merge_oracle(&positions));
    }

    #[test]
    fn percentile_is_bounded(values in proptest::collection::vec(-5.0f64..5.0, 1..20), q in 0.0f64..=1.0) {
        let p = percentile(&values, q);
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(p >= lo && p <= hi);
    }
}

fn tagged(text: &str, lex: &Lexicon) -> TaggedDocument {
    tag_document("d", text, lex, &StubEncoder::new(16), &NoUmls).unwrap()
}

#[test]
fn concept_mapping_threshold_is_inclusive() {
    let lex = Lexicon::from_concepts([Concept::new("c1", "abc").with_phq9(9)]).unwrap();
    // cos((4,3),(5,0)) = 0.8, cos((4,3),(3,4)) = 0.96, cos((4,3),(0,5)) = 0.6
    let enc = TableEncoder::new(2)
        .with("abc", vec![4.0, 3.0])
        .with("xyz", vec![5.0, 0.0])
        .with("near", vec![3.0, 4.0])
        .with("far", vec![0.0, 5.0]);
    let index = SimilarityIndex::build(&lex, &enc).unwrap();
    let doc = TaggedDocument {
        doc_id: "d".into(),
        text: "xyz near far".into(),
        tokens: Vec::new(),
        spans: Vec::new(),
        tagged_text: "xyz near far".into(),
    };
    let span = |r: Range<usize>| SalientSpan { char_start: r.start, char_end: r.end, score: 0.5, block: Block::Fused };
    let spans = [span(0..3), span(4..8), span(9..12)];
    let found = map_to_concepts(&spans, &doc, &lex, &index, &enc, 0.80).unwrap();
    let hits: Vec<(usize, f64)> = found.iter().map(|a| (a.span.char_start, a.similarity)).collect();
    assert_eq!(hits.len(), 2);
    assert_eq!(hits[0], (0, 0.8));
    assert!((hits[1].1 - 0.96).abs() < 1e-12);
    assert!(found.iter().all(|a| a.phq9 == Some(9) && a.preferred_label == "abc"));
}

#[test]
fn tagged_phrase_inside_a_wider_span_is_attributed() {
    let lex = Lexicon::from_concepts([Concept::new("c1", "wrist")]).unwrap();
    let doc = tagged("I cut my wrist", &lex);
    let enc = StubEncoder::new(16);
    let index = SimilarityIndex::build(&lex, &enc).unwrap();
    let spans = [SalientSpan { char_start: 6, char_end: 14, score: 0.4, block: Block::Fused }];
    let found = map_to_concepts(&spans, &doc, &lex, &index, &enc, 0.80).unwrap();
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].concept_id, "c1");
    assert_eq!(found[0].similarity, 1.0);
}

struct Down;

impl LlmBackend for Down {
    fn name(&self) -> &str {
        "down"
    }
    fn complete(&self, _: &str) -> Result<String, BackendError> {
        Err(BackendError::Unreachable { backend: "down".into(), message: "offline".into() })
    }
}

#[test]
fn failing_generator_leaves_explanation_empty() {
    let lex = Lexicon::from_concepts([Concept::new("c1", "wrist")]).unwrap();
    let enc = StubEncoder::new(16);
    let index = SimilarityIndex::build(&lex, &enc).unwrap();
    let doc = tagged("I cut my wrist last night", &lex);
    let positions = night_positions();
    let explainer = Explainer { lexicon: &lex, index: &index, encoder: &enc, llm: &Down, settings: ExplainSettings::default() };
    let report = explainer.explain(&doc, &hand_trace(), &positions, Task::Binary).unwrap();
    assert!(report.llm_explanation.is_none());
    assert!(!report.to_json().unwrap().contains("llm_explanation"));
    assert!(report.prompt.contains("concepts: wrist\n"));
    let json = report.to_json().unwrap();
    assert_eq!(ExplanationReport::from_json(&json).unwrap().to_json().unwrap(), json);
}

/// One-shot HTTP server; returns the raw request it received.
fn serve_once(status: &str, body: &str, delay: Duration) -> (String, std::thread::JoinHandle<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
    let (status, body) = (status.to_string(), body.to_string());
    let handle = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut request = String::new();
        let mut length = 0;
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap_or(0);
            }
            request.push_str(&line);
        }
        if request.to_ascii_lowercase().contains("transfer-encoding: chunked") {
            loop {
                let mut size = String::new();
                reader.read_line(&mut size).unwrap_or(0);
                let n = usize::from_str_radix(size.trim(), 16).unwrap_or(0);
                let mut chunk = vec![0; n + 2];
                reader.read_exact(&mut chunk).unwrap_or(());
                if n == 0 {
                    break;
                }
                request.push_str(&String::from_utf8_lossy(&chunk[..n]));
            }
        } else {
            let mut payload = vec![0; length];
            reader.read_exact(&mut payload).unwrap_or(());
            request.push_str(&String::from_utf8_lossy(&payload));
        }
        std::thread::sleep(delay);
        let mut stream = stream;
        let _ = write!(
            stream,
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        request
    });
    (url, handle)
}

#[test]
fn http_backend_round_trips_and_maps_failures() {
    let (url, server) = serve_once("200 OK", r#"{"choices":[{"text":"  the post mentions self harm \n"}]}"#, Duration::ZERO);
    std::env::set_var(API_KEY_ENV, "test-key");
    let client = HttpLlm::new(&url, "m", Duration::from_secs(5), 64).with_env_credential();
    std::env::remove_var(API_KEY_ENV);
    assert_eq!(client.complete("explain this").unwrap(), "the post mentions self harm");
    let request = server.join().unwrap();
    assert!(request.to_ascii_lowercase().contains("authorization: bearer test-key"));
    let body: serde_json::Value = serde_json::from_str(&request[request.find('{').unwrap()..]).unwrap();
    assert_eq!(body["prompt"], "explain this");
    assert_eq!(body["temperature"], 0);
    assert_eq!(body["max_tokens"], 64);

    let (url, server) = serve_once("500 Internal Server Error", "{}", Duration::ZERO);
    let err = HttpLlm::new(&url, "m", Duration::from_secs(5), 64).complete("p").unwrap_err();
    assert!(matches!(err, BackendError::Failed { .. }), "{err:?}");
    assert!(!server.join().unwrap().to_ascii_lowercase().contains("authorization"));

    let (url, server) = serve_once("200 OK", r#"{"unexpected":true}"#, Duration::ZERO);
    let err = HttpLlm::new(&url, "m", Duration::from_secs(5), 64).complete("p").unwrap_err();
    assert!(matches!(err, BackendError::Failed { .. }), "{err:?}");
    server.join().unwrap();

    let (url, server) = serve_once("200 OK", "{}", Duration::from_millis(1500));
    let err = HttpLlm::new(&url, "m", Duration::from_millis(200), 64).complete("p").unwrap_err();
    assert!(matches!(err, BackendError::Timeout { .. }), "{err:?}");
    server.join().unwrap();

    let closed = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", closed.local_addr().unwrap());
    drop(closed);
    let err = HttpLlm::new(&url, "m", Duration::from_secs(2), 64).complete("p").unwrap_err();
    assert!(matches!(err, BackendError::Unreachable { .. }), "{err:?}");
    assert!(err.is_retriable());
}
