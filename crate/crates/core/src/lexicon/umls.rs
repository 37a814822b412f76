use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, Gated};
use crate::error::{Error, Result};
use crate::text::normalize_phrase;

/// A UMLS concept as returned by a terminology lookup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UmlsEntry {
    pub cui: String,
    pub name: String,
    pub definition: String,
}

impl UmlsEntry {
    pub fn new(cui: &str, name: &str, definition: &str) -> Result<Self> {
        if !is_cui(cui) {
            return Err(Error::Data(format!("{cui:?} is not a concept unique identifier")));
        }
        Ok(UmlsEntry {
            cui: cui.to_string(),
            name: name.to_string(),
            definition: definition.to_string(),
        })
    }
}

fn is_cui(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next() == Some('C') && s.len() > 1 && chars.all(|c| c.is_ascii_digit())
}

/// Port for a UMLS / SNOMED CT terminology service.
pub trait UmlsBackend: Send + Sync {
    fn name(&self) -> &str;
    fn max_parallelism(&self) -> usize {
        usize::MAX
    }
    /// Concepts for `term` in the service's ranking order. An unknown term
    /// is an empty list, not an error.
    fn search(&self, term: &str) -> std::result::Result<Vec<UmlsEntry>, BackendError>;
}

impl<B: UmlsBackend> UmlsBackend for Gated<B> {
    fn name(&self) -> &str {
        self.inner().name()
    }
    fn max_parallelism(&self) -> usize {
        self.gate().limit()
    }
    fn search(&self, term: &str) -> std::result::Result<Vec<UmlsEntry>, BackendError> {
        self.gate().run(|| self.inner().search(term))
    }
}

/// At most `k` top-ranked concepts for `term`.
pub fn umls_top_concepts(client: &dyn UmlsBackend, term: &str, k: usize) -> Result<Vec<UmlsEntry>> {
    if term.trim().is_empty() {
        return Err(Error::Input("UMLS term must be non-empty".into()));
    }
    let mut hits = client.search(term)?;
    hits.truncate(k);
    Ok(hits)
}

#[derive(Debug, Deserialize)]
struct FixtureRecord {
    term: String,
    cui: String,
    name: String,
    definition: String,
    rank: u32,
}

/// Offline UMLS backend serving entries from a local fixture table.
#[derive(Debug, Clone, Default)]
pub struct FixtureUmls {
    by_term: HashMap<String, Vec<UmlsEntry>>,
}

impl FixtureUmls {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut ranked: HashMap<String, Vec<(u32, UmlsEntry)>> = HashMap::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: FixtureRecord =
                serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            let entry = UmlsEntry::new(&rec.cui, &rec.name, &rec.definition)
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            ranked
                .entry(normalize_phrase(&rec.term))
                .or_default()
                .push((rec.rank, entry));
        }
        let by_term = ranked
            .into_iter()
            .map(|(term, mut entries)| {
                entries.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cui.cmp(&b.1.cui)));
                (term, entries.into_iter().map(|(_, e)| e).collect())
            })
            .collect();
        Ok(FixtureUmls { by_term })
    }
}

impl UmlsBackend for FixtureUmls {
    fn name(&self) -> &str {
        "fixture"
    }

    fn search(&self, term: &str) -> std::result::Result<Vec<UmlsEntry>, BackendError> {
        Ok(self
            .by_term
            .get(&normalize_phrase(term))
            .cloned()
            .unwrap_or_default())
    }
}

/// Backend that knows no terms.
#[derive(Debug, Clone, Default)]
pub struct NoUmls;

impl UmlsBackend for NoUmls {
    fn name(&self) -> &str {
        "none"
    }

    fn search(&self, _term: &str) -> std::result::Result<Vec<UmlsEntry>, BackendError> {
        Ok(Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn fixture() -> FixtureUmls {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        let rows = [
            ("wrist laceration", "C0273950", "Laceration of wrist", 2),
            ("wrist laceration", "C0160985", "Wrist injury", 3),
            ("wrist laceration", "C0043262", "Wrist wound", 1),
            ("wrist laceration", "C0000001", "Fourth", 4),
            ("insomnia", "C0917801", "Sleeplessness", 1),
        ];
        for (term, cui, name, rank) in rows {
            writeln!(
                f,
                r#"{{"term":"{term}","cui":"{cui}","name":"{name}","definition":"d","rank":{rank}}}"#
            )
            .unwrap();
        }
        FixtureUmls::load(f.path()).unwrap()
    }

    #[test]
    fn top_three_in_rank_order() {
        let hits = umls_top_concepts(&fixture(), "wrist laceration", 3).unwrap();
        let cuis: Vec<_> = hits.iter().map(|h| h.cui.as_str()).collect();
        assert_eq!(cuis, vec!["C0043262", "C0273950", "C0160985"]);
    }

    #[test]
    fn no_padding_and_unknown_terms() {
        assert_eq!(umls_top_concepts(&fixture(), "Insomnia", 3).unwrap().len(), 1);
        assert!(umls_top_concepts(&fixture(), "haircut", 3).unwrap().is_empty());
        assert!(umls_top_concepts(&fixture(), " ", 3).is_err());
    }

    #[test]
    fn unreachable_is_distinct_from_not_found() {
        struct Down;
        impl UmlsBackend for Down {
            fn name(&self) -> &str {
                "down"
            }
            fn search(&self, _: &str) -> std::result::Result<Vec<UmlsEntry>, BackendError> {
                Err(BackendError::Unreachable {
                    backend: "down".into(),
                    message: "connection refused".into(),
                })
            }
        }
        let err = umls_top_concepts(&Down, "wrist", 3).unwrap_err();
        match err {
            Error::Backend(b) => assert!(b.is_retriable()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cui_pattern() {
        assert!(UmlsEntry::new("C0011570", "Depression", "").is_ok());
        assert!(UmlsEntry::new("X001", "bad", "").is_err());
        assert!(UmlsEntry::new("C", "bad", "").is_err());
    }
}
