//! Line-delimited dataset records, split assignment and per-user aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Label, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// How a record holding several posts becomes one document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Posts joined in order into one text.
    #[default]
    Concat,
    /// Each post is its own document; the user-level decision is the
    /// majority vote over post predictions.
    Majority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub doc_id: String,
    pub text: String,
    pub label: Label,
    pub split: Split,
    /// Posts of the record before concatenation (single entry for plain text).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub posts: Vec<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawText {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    doc_id: String,
    text: RawText,
    label: Label,
    #[serde(default)]
    split: Option<Split>,
}

/// Separator placed between posts when they are concatenated.
pub const POST_SEPARATOR: &str = "\n";

/// Load and validate a dataset. Records without a split are assigned one by
/// [`assign_splits`] using `seed`.
pub fn load_dataset(path: &Path, task: Task, num_classes: usize, seed: u64) -> Result<Vec<DatasetRecord>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut missing_split = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        raw.label
            .check(task, num_classes)
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        if raw.doc_id.trim().is_empty() {
            return Err(Error::parse(path, lineno, "empty doc_id"));
        }
        if !ids.insert(raw.doc_id.clone()) {
            return Err(Error::parse(path, lineno, format!("duplicate doc_id {:?}", raw.doc_id)));
        }
        let posts = match raw.text {
            RawText::One(t) => vec![t],
            RawText::Many(p) => p,
        };
        if posts.iter().all(|p| p.trim().is_empty()) {
            return Err(Error::parse(path, lineno, "empty text"));
        }
        if raw.split.is_none() {
            missing_split.push(records.len());
        }
        records.push(DatasetRecord {
            doc_id: raw.doc_id,
            text: posts.join(POST_SEPARATOR),
            label: raw.label,
            split: raw.split.unwrap_or(Split::Train),
            posts: if posts.len() > 1 { posts } else { Vec::new() },
        });
    }
    if records.is_empty() {
        log::warn!("{}: dataset is empty", path.display());
    }
    if !missing_split.is_empty() {
        let labels: Vec<Label> = missing_split.iter().map(|&i| records[i].label.clone()).collect();
        let splits = assign_splits(&labels, seed);
        for (&i, split) in missing_split.iter().zip(splits) {
            records[i].split = split;
        }
        log::info!(
            "{}: assigned 70/15/15 stratified splits to {} records (seed {seed})",
            path.display(),
            missing_split.len()
        );
    }
    Ok(records)
}

/// Stratified 70/15/15 split: within each label group (shuffled with `seed`)
/// the first 70% go to train, the next 15% to dev, the rest to test.
pub fn assign_splits(labels: &[Label], seed: u64) -> Vec<Split> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        groups.entry(label.key()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Split::Train; labels.len()];
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        let n = members.len();
        let train = (n as f64 * 0.70).round() as usize;
        let dev = (n as f64 * 0.85).round() as usize;
        for (rank, &i) in members.iter().enumerate() {
            out[i] = if rank < train {
                Split::Train
            } else if rank < dev {
                Split::Dev
            } else {
                Split::Test
            };
        }
    }
    out
}

/// Expand multi-post records into one record per post (for majority voting).
/// Post records are named `<doc_id>#<index>`.
pub fn explode_posts(records: &[DatasetRecord]) -> Vec<(usize, DatasetRecord)> {
    let mut out = Vec::new();
    for (owner, r) in records.iter().enumerate() {
        if r.posts.is_empty() {
            out.push((owner, r.clone()));
            continue;
        }
        for (i, post) in r.posts.iter().enumerate() {
            if post.trim().is_empty() {
                continue;
            }
            out.push((
                owner,
                DatasetRecord {
                    doc_id: format!("{}#{i}", r.doc_id),
                    text: post.clone(),
                    label: r.label.clone(),
                    split: r.split,
                    posts: Vec::new(),
                },
            ));
        }
    }
    out
}

/// Majority vote over post-level decisions. Class votes break ties toward the
/// lower class; label vectors take each label that at least half the posts set.
pub fn majority_vote(votes: &[Label]) -> Option<Label> {
    let first = votes.first()?;
    Some(match first {
        Label::Class(_) => {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for v in votes {
                if let Label::Class(c) = v {
                    *counts.entry(*c).or_default() += 1;
                }
            }
            let best = counts
                .iter()
                .fold((0usize, 0usize), |best, (&c, &n)| if n > best.1 { (c, n) } else { best });
            Label::Class(best.0)
        }
        Label::Multi(bits) => {
            let mut counts = vec![0usize; bits.len()];
            for v in votes {
                if let Label::Multi(b) = v {
                    for (c, &set) in counts.iter_mut().zip(b) {
                        *c += usize::from(set);
                    }
                }
            }
            Label::Multi(counts.iter().map(|&c| 2 * c >= votes.len()).collect())
        }
    })
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        let line = serde_json::json!({
            "doc_id": r.doc_id,
            "text": if r.posts.is_empty() { serde_json::json!(r.text) } else { serde_json::json!(r.posts) },
            "label": r.label,
            "split": r.split,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
