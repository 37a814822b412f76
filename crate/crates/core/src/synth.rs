//! Deterministic synthetic corpora with planted lexicon signal.
//!
//! Each concept has surface forms split into a "seen" half, used in training
//! documents, and a "held-out" half with disjoint vocabulary that only shows
//! up in dev and test documents. A model that sees the concept markers can
//! carry what it learned to the held-out forms; a model reading raw words
//! cannot.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{DatasetRecord, Split};
use crate::error::Result;
use crate::label::{Label, Task};
use crate::lexicon::{Concept, Lexicon};

pub const SYNTH_DOCS: usize = 500;
pub const SYNTH_SEED: u64 = 7;

struct SynthConcept {
    id: &'static str,
    phq9: u8,
    definition: &'static str,
    seen: [&'static str; 2],
    held_out: [&'static str; 2],
}

const CONCEPTS: [SynthConcept; 9] = [
    SynthConcept {
        id: "syn:interest",
        phq9: 1,
        definition: "little interest or pleasure in doing things",
        seen: ["anhedonia", "hobby apathy"],
        held_out: ["pleasure deficit", "interest collapse"],
    },
    SynthConcept {
        id: "syn:mood",
        phq9: 2,
        definition: "feeling down, depressed or hopeless",
        seen: ["hopelessness", "despair"],
        held_out: ["gloom spiral", "misery"],
    },
    SynthConcept {
        id: "syn:sleep",
        phq9: 3,
        definition: "trouble falling or staying asleep, or sleeping too much",
        seen: ["insomnia", "restlessness"],
        held_out: ["nightmares", "wakefulness"],
    },
    SynthConcept {
        id: "syn:energy",
        phq9: 4,
        definition: "feeling tired or having little energy",
        seen: ["fatigue", "burnout"],
        held_out: ["lethargy", "energy drain"],
    },
    SynthConcept {
        id: "syn:appetite",
        phq9: 5,
        definition: "poor appetite or overeating",
        seen: ["appetite loss", "weight gain"],
        held_out: ["food aversion", "hunger pangs"],
    },
    SynthConcept {
        id: "syn:worth",
        phq9: 6,
        definition: "feeling bad about yourself or that you are a failure",
        seen: ["self doubt", "worthlessness"],
        held_out: ["guilt trips", "shame"],
    },
    SynthConcept {
        id: "syn:focus",
        phq9: 7,
        definition: "trouble concentrating on things",
        seen: ["brain fog", "concentration problems"],
        held_out: ["attention lapses", "memory gaps"],
    },
    SynthConcept {
        id: "syn:motor",
        phq9: 8,
        definition: "moving or speaking slowly, or being fidgety or restless",
        seen: ["agitation", "fidget urges"],
        held_out: ["sluggishness", "tremors"],
    },
    SynthConcept {
        id: "syn:selfharm",
        phq9: 9,
        definition: "thoughts of being better off dead or of self-harm",
        seen: ["suicide plans", "death wishes"],
        held_out: ["overdose thoughts", "farewell letters"],
    },
];

const DISTRACTORS_SEEN: [&str; 8] = [
    "guitar lessons",
    "soccer practice",
    "pizza night",
    "road trip",
    "coffee shop",
    "garden project",
    "book club",
    "movie marathon",
];
const DISTRACTORS_HELD_OUT: [&str; 4] = ["chess tournament", "bike repair", "piano recital", "beach vacation"];

/// Sentence frames with one slot for a noun phrase.
const FRAMES: [&str; 8] = [
    "lately my {} has been on my mind a lot .",
    "i keep thinking about the {} and i do not know what to do .",
    "this week the {} took up most of my evenings .",
    "honestly the {} is all i talk about with my sister .",
    "my friends asked me about the {} yesterday .",
    "i told my mom about my {} on sunday .",
    "since january the {} has been a big part of my life .",
    "nobody at work knows about my {} .",
];

/// Slot-free sentences mixed into every document.
const FILLERS: [&str; 6] = [
    "work was long today .",
    "i am not sure why i am posting this .",
    "anyway thanks for reading .",
    "my roommate moved out last month .",
    "it rained all weekend here .",
    "i have an exam on friday .",
];

/// Multi-class cause groups: class 0 has no concept, classes 1..=5 each own
/// a group of concepts.
const CLASS_GROUPS: [&[usize]; 5] = [&[0, 1], &[2, 3], &[4, 5], &[6, 7], &[8]];

/// The lexicon behind the synthetic corpora: label = first seen form,
/// synonyms = the other seen form and both held-out forms.
pub fn synthetic_lexicon() -> Lexicon {
    let concepts = CONCEPTS.iter().map(|c| {
        let synonyms = [c.seen[1], c.held_out[0], c.held_out[1]];
        Concept::new(c.id, c.seen[0])
            .with_synonyms(&synonyms)
            .with_phq9(c.phq9)
            .with_definition(c.definition)
    });
    Lexicon::from_concepts(concepts).expect("synthetic lexicon is valid")
}

/// Every surface form used by the generator, as (form, held_out) pairs.
pub fn surface_forms() -> Vec<(&'static str, bool)> {
    let mut out = Vec::new();
    for c in &CONCEPTS {
        out.extend(c.seen.iter().map(|&f| (f, false)));
        out.extend(c.held_out.iter().map(|&f| (f, true)));
    }
    out.extend(DISTRACTORS_SEEN.iter().map(|&f| (f, false)));
    out.extend(DISTRACTORS_HELD_OUT.iter().map(|&f| (f, true)));
    out
}

fn split_of(i: usize) -> Split {
    match i % 20 {
        0..=13 => Split::Train,
        14..=16 => Split::Dev,
        _ => Split::Test,
    }
}

struct Writer {
    rng: ChaCha8Rng,
    held_out: bool,
}

impl Writer {
    fn pick_form(&mut self, seen: &[&'static str], held_out: &[&'static str]) -> &'static str {
        if self.held_out && self.rng.random_bool(0.5) {
            held_out.choose(&mut self.rng).copied().unwrap_or(seen[0])
        } else {
            seen.choose(&mut self.rng).copied().unwrap_or(seen[0])
        }
    }

    fn concept_phrase(&mut self, concept: usize) -> &'static str {
        let c = &CONCEPTS[concept];
        self.pick_form(&c.seen, &c.held_out)
    }

    fn distractor(&mut self) -> &'static str {
        self.pick_form(&DISTRACTORS_SEEN, &DISTRACTORS_HELD_OUT)
    }

    /// One document: a filler sentence, then one framed sentence per slot.
    fn document(&mut self, slots: &[&str]) -> String {
        let mut sentences = vec![FILLERS.choose(&mut self.rng).copied().unwrap_or(FILLERS[0]).to_string()];
        let mut frames: Vec<&str> = FRAMES.to_vec();
        for slot in slots {
            let at = self.rng.random_range(0..frames.len());
            let frame = frames.swap_remove(at);
            sentences.push(frame.replacen("{}", slot, 1));
        }
        let mut text = sentences.join(" ");
        if let Some(first) = text.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        text
    }
}

/// `n` documents for `task`, split 70/15/15 by position.
pub fn synthetic_dataset(task: Task, n: usize, seed: u64) -> Vec<DatasetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ task_salt(task));
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let split = split_of(i);
        let mut w = Writer {
            rng: ChaCha8Rng::seed_from_u64(rng.random()),
            held_out: split != Split::Train,
        };
        let (label, slots) = match task {
            Task::Binary => {
                let positive = w.rng.random_bool(0.5);
                let mut slots = vec![w.distractor()];
                slots.push(if positive {
                    let c = w.rng.random_range(0..CONCEPTS.len());
                    w.concept_phrase(c)
                } else {
                    w.distractor()
                });
                (Label::Class(usize::from(positive)), slots)
            }
            Task::MultiClass => {
                let class = w.rng.random_range(0..=CLASS_GROUPS.len());
                let mut slots = vec![w.distractor()];
                slots.push(if class == 0 {
                    w.distractor()
                } else {
                    let group = CLASS_GROUPS[class - 1];
                    let c = *group.choose(&mut w.rng).unwrap_or(&group[0]);
                    w.concept_phrase(c)
                });
                (Label::Class(class), slots)
            }
            Task::MultiLabel => {
                let k = w.rng.random_range(1..=2);
                let mut bits = vec![false; CONCEPTS.len()];
                let mut slots = Vec::new();
                while slots.len() < k {
                    let c = w.rng.random_range(0..CONCEPTS.len());
                    if !bits[c] {
                        bits[c] = true;
                        slots.push(w.concept_phrase(c));
                    }
                }
                if k < 2 {
                    slots.push(w.distractor());
                }
                (Label::Multi(bits), slots)
            }
        };
        let mut order = slots;
        if w.rng.random_bool(0.5) {
            order.reverse();
        }
        out.push(DatasetRecord {
            doc_id: format!("{}-{i:04}", task_name(task)),
            text: w.document(&order),
            label,
            split,
            posts: Vec::new(),
        });
    }
    out
}

fn task_salt(task: Task) -> u64 {
    match task {
        Task::Binary => 0x0b1,
        Task::MultiLabel => 0x0b9,
        Task::MultiClass => 0x0b6,
    }
}

pub fn task_name(task: Task) -> &'static str {
    match task {
        Task::Binary => "binary",
        Task::MultiLabel => "multilabel",
        Task::MultiClass => "multiclass",
    }
}

/// Number of classes (or labels) of the synthetic corpus for `task`.
pub fn synthetic_classes(task: Task) -> usize {
    match task {
        Task::Binary => 2,
        Task::MultiLabel => CONCEPTS.len(),
        Task::MultiClass => CLASS_GROUPS.len() + 1,
    }
}

/// Write the lexicon and all three corpora into `dir`.
pub fn write_bundle(dir: &std::path::Path, seed: u64) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    let lex_path = dir.join("lexicon.jsonl");
    synthetic_lexicon().save(&lex_path)?;
    let mut written = vec![lex_path];
    for task in [Task::Binary, Task::MultiLabel, Task::MultiClass] {
        let path = dir.join(format!("{}.jsonl", task_name(task)));
        crate::data::write_dataset(&path, &synthetic_dataset(task, SYNTH_DOCS, seed))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn words(forms: impl Iterator<Item = &'static str>) -> BTreeSet<&'static str> {
        forms.flat_map(|f| f.split(' ')).collect()
    }

    #[test]
    fn held_out_vocabulary_is_disjoint() {
        let forms = surface_forms();
        let seen = words(forms.iter().filter(|f| !f.1).map(|f| f.0));
        let held = words(forms.iter().filter(|f| f.1).map(|f| f.0));
        let frames = words(FRAMES.iter().chain(&FILLERS).copied());
        assert!(seen.is_disjoint(&held));
        assert!(frames.is_disjoint(&held));
        assert!(frames.is_disjoint(&seen));
    }

    #[test]
    fn training_documents_avoid_held_out_forms() {
        for task in [Task::Binary, Task::MultiLabel, Task::MultiClass] {
            let docs = synthetic_dataset(task, 200, 3);
            for d in docs.iter().filter(|d| d.split == Split::Train) {
                for (form, held) in surface_forms() {
                    if held {
                        assert!(!d.text.contains(form), "{}: {}", d.doc_id, d.text);
                    }
                }
            }
            assert!(docs.iter().all(|d| d.label.check(task, synthetic_classes(task)).is_ok()));
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = synthetic_dataset(Task::MultiClass, 50, 1);
        assert_eq!(a, synthetic_dataset(Task::MultiClass, 50, 1));
        assert_ne!(a, synthetic_dataset(Task::MultiClass, 50, 2));
        let splits: Vec<Split> = a.iter().take(20).map(|d| d.split).collect();
        assert_eq!(splits.iter().filter(|&&s| s == Split::Train).count(), 14);
    }

    #[test]
    fn lexicon_has_nine_categories() {
        let lex = synthetic_lexicon();
        assert_eq!(lex.len(), 9);
        let cats: BTreeSet<u8> = lex.concepts().filter_map(|c| c.phq9_category).collect();
        assert_eq!(cats, (1..=9).collect());
    }
}
