//! Commonsense layer: ATOMIC-style if-then inferences for a post.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, Gated};
use crate::error::{Error, Result};
use crate::text::{scan, unescape, OffsetMap, PieceKind, Renderer};

/// Separator placed between the post and each aspect in the
/// aspect-augmented string. Occurrences inside inputs are escaped.
pub const ASPECT_SEPARATOR: &str = " [SEP] ";

/// Empty-inference sentinel.
pub const NO_INFERENCE: &str = "none";

/// The nine ATOMIC if-then relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "xIntent")]
    XIntent,
    #[serde(rename = "xNeed")]
    XNeed,
    #[serde(rename = "xAttr")]
    XAttr,
    #[serde(rename = "xEffect")]
    XEffect,
    #[serde(rename = "xWant")]
    XWant,
    #[serde(rename = "xReact")]
    XReact,
    #[serde(rename = "oEffect")]
    OEffect,
    #[serde(rename = "oWant")]
    OWant,
    #[serde(rename = "oReact")]
    OReact,
}

impl Relation {
    pub const ALL: [Relation; 9] = [
        Relation::XIntent,
        Relation::XNeed,
        Relation::XAttr,
        Relation::XEffect,
        Relation::XWant,
        Relation::XReact,
        Relation::OEffect,
        Relation::OWant,
        Relation::OReact,
    ];

    /// The five relations kept as mental-health aspects, in concatenation
    /// order: intent, effect and reaction of the writer, then effect and
    /// reaction of the listeners.
    pub const SELECTED: [Relation; 5] = [
        Relation::XIntent,
        Relation::XEffect,
        Relation::XReact,
        Relation::OEffect,
        Relation::OReact,
    ];

    fn template_prefix(self) -> &'static str {
        match self {
            Relation::XIntent => "intent",
            Relation::XNeed => "need",
            Relation::XAttr => "attribute",
            Relation::XEffect => "effect",
            Relation::XWant => "want",
            Relation::XReact => "reaction",
            Relation::OEffect => "others effect",
            Relation::OWant => "others want",
            Relation::OReact => "others reaction",
        }
    }
}

/// The five selected aspects of a post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectSet {
    pub intent_w: String,
    pub effect_w: String,
    pub reaction_w: String,
    pub effect_l: String,
    pub reaction_l: String,
}

impl AspectSet {
    pub fn none() -> Self {
        AspectSet {
            intent_w: NO_INFERENCE.into(),
            effect_w: NO_INFERENCE.into(),
            reaction_w: NO_INFERENCE.into(),
            effect_l: NO_INFERENCE.into(),
            reaction_l: NO_INFERENCE.into(),
        }
    }

    /// Aspects in concatenation order.
    pub fn ordered(&self) -> [&str; 5] {
        [
            &self.intent_w,
            &self.effect_w,
            &self.reaction_w,
            &self.effect_l,
            &self.reaction_l,
        ]
    }
}

/// Port for the commonsense model.
pub trait CommonsenseBackend: Send + Sync {
    fn name(&self) -> &str;
    fn max_parallelism(&self) -> usize {
        usize::MAX
    }
    /// Inferences for `text`, possibly several per relation, best first.
    fn infer(&self, text: &str) -> std::result::Result<Vec<(Relation, String)>, BackendError>;
}

impl<B: CommonsenseBackend> CommonsenseBackend for Gated<B> {
    fn name(&self) -> &str {
        self.inner().name()
    }
    fn max_parallelism(&self) -> usize {
        self.gate().limit()
    }
    fn infer(&self, text: &str) -> std::result::Result<Vec<(Relation, String)>, BackendError> {
        self.gate().run(|| self.inner().infer(text))
    }
}

/// Query all nine relations and keep the first inference for each of the
/// five selected ones. Missing or blank inferences become `"none"`.
pub fn extract_aspects(backend: &dyn CommonsenseBackend, text: &str) -> Result<AspectSet> {
    if text.trim().is_empty() {
        return Err(Error::Input("cannot extract aspects from empty text".into()));
    }
    let inferences = backend.infer(text)?;
    let pick = |rel: Relation| {
        inferences
            .iter()
            .find(|(r, s)| *r == rel && !s.trim().is_empty())
            .map(|(_, s)| s.trim().to_string())
            .unwrap_or_else(|| NO_INFERENCE.to_string())
    };
    Ok(AspectSet {
        intent_w: pick(Relation::XIntent),
        effect_w: pick(Relation::XEffect),
        reaction_w: pick(Relation::XReact),
        effect_l: pick(Relation::OEffect),
        reaction_l: pick(Relation::OReact),
    })
}

/// Render `text ⊕ sep ⊕ E_IW ⊕ sep ⊕ E_EW ⊕ sep ⊕ E_RW ⊕ sep ⊕ E_EL ⊕ sep ⊕ E_RL`
/// along with a map from the rendered string back into `text`.
pub fn render_with_aspects(text: &str, aspects: &AspectSet) -> (String, OffsetMap) {
    let mut r = Renderer::new();
    r.literal(text, 0);
    for aspect in aspects.ordered() {
        r.synthetic(ASPECT_SEPARATOR);
        let mut escaped = String::with_capacity(aspect.len());
        for c in aspect.chars() {
            if crate::text::needs_escape(c) {
                escaped.push('\\');
            }
            escaped.push(c);
        }
        r.synthetic(&escaped);
    }
    r.finish()
}

/// The aspect-augmented string fed to the commonsense branch.
pub fn concat_with_aspects(text: &str, aspects: &AspectSet) -> String {
    render_with_aspects(text, aspects).0
}

/// Inverse of [`concat_with_aspects`]: the post followed by the five aspects.
pub fn split_concatenated(s: &str) -> Vec<String> {
    s.split(ASPECT_SEPARATOR).map(unescape).collect()
}

/// Offline commonsense model producing templated inferences from the first
/// five words of the post.
#[derive(Debug, Clone, Default)]
pub struct StubCommonsense;

impl CommonsenseBackend for StubCommonsense {
    fn name(&self) -> &str {
        "stub"
    }

    fn infer(&self, text: &str) -> std::result::Result<Vec<(Relation, String)>, BackendError> {
        let head: Vec<&str> = scan(text)
            .into_iter()
            .filter(|p| p.kind == PieceKind::Word)
            .take(5)
            .map(|p| &text[p.range])
            .collect();
        let head = head.join(" ").to_lowercase();
        Ok(Relation::ALL
            .iter()
            .map(|&rel| (rel, format!("{}: {head}", rel.template_prefix())))
            .collect())
    }
}

#[derive(Debug, Deserialize)]
struct FixtureRecord {
    text: String,
    relation: Relation,
    inference: String,
}

/// Replays recorded inferences keyed by exact post text.
#[derive(Debug, Clone, Default)]
pub struct FixtureCommonsense {
    records: HashMap<String, Vec<(Relation, String)>>,
}

impl FixtureCommonsense {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records: HashMap<String, Vec<(Relation, String)>> = HashMap::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: FixtureRecord =
                serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            records
                .entry(rec.text)
                .or_default()
                .push((rec.relation, rec.inference));
        }
        Ok(FixtureCommonsense { records })
    }
}

impl CommonsenseBackend for FixtureCommonsense {
    fn name(&self) -> &str {
        "fixture"
    }

    fn infer(&self, text: &str) -> std::result::Result<Vec<(Relation, String)>, BackendError> {
        self.records
            .get(text)
            .cloned()
            .ok_or_else(|| BackendError::Failed {
                backend: "commonsense fixture".into(),
                message: "no recorded inferences for this text".into(),
            })
    }
}
