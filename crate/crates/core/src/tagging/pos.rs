//! Rule-based part-of-speech tagger over the Universal POS tagset.
//!
//! Closed-class words come from fixed lists; open-class words are resolved
//! with a small verb/adjective lexicon, suffix rules and one token of left
//! context. Anything unresolved is a noun.

use serde::{Deserialize, Serialize};

use crate::text::{scan, PieceKind};

/// Universal POS tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Noun,
    Propn,
    Verb,
    Aux,
    Adj,
    Adv,
    Pron,
    Det,
    Adp,
    Cconj,
    Sconj,
    Part,
    Num,
    Intj,
    Punct,
}

impl PosTag {
    pub fn is_noun(self) -> bool {
        matches!(self, PosTag::Noun | PosTag::Propn)
    }
}

const PRON: &[&str] = &[
    "i", "me", "myself", "you", "yourself", "he", "him", "himself", "she", "herself", "it",
    "itself", "we", "us", "ourselves", "they", "them", "themselves", "mine", "yours", "hers",
    "ours", "theirs", "who", "whom", "what", "which", "someone", "somebody", "anyone", "anybody",
    "everyone", "everybody", "nobody", "something", "anything", "everything", "nothing", "im",
    "ive", "id", "youre", "hes", "shes", "theyre",
];
const DET: &[&str] = &[
    "a", "an", "the", "my", "your", "his", "her", "its", "our", "their", "this", "that",
    "these", "those", "some", "any", "no", "every", "each", "all", "another", "such", "both",
    "either", "neither", "much", "many", "few", "several",
];
const ADP: &[&str] = &[
    "about", "above", "across", "after", "against", "along", "among", "around", "as", "at",
    "before", "behind", "below", "beneath", "beside", "between", "beyond", "by", "despite",
    "down", "during", "except", "for", "from", "in", "inside", "into", "like", "near", "of",
    "off", "on", "onto", "out", "outside", "over", "past", "since", "through", "throughout",
    "toward", "towards", "under", "until", "up", "upon", "with", "within", "without",
];
const CCONJ: &[&str] = &["and", "or", "but", "nor", "yet", "plus"];
const SCONJ: &[&str] = &[
    "if", "because", "when", "while", "although", "though", "unless", "whether", "whereas",
    "once", "cause", "cuz", "than",
];
const AUX: &[&str] = &[
    "am", "is", "are", "was", "were", "be", "been", "being", "do", "does", "did", "will",
    "would", "can", "could", "shall", "should", "may", "might", "must", "ca", "wo", "'m", "'re",
    "'ve", "'ll", "'d", "'s", "dont", "doesnt", "didnt", "cant", "couldnt", "wont", "wouldnt",
    "shouldnt", "isnt", "arent", "wasnt", "werent", "havent", "hasnt", "hadnt", "ain't",
    "gonna", "wanna", "gotta",
];
const PART: &[&str] = &["not", "n't", "to"];
const INTJ: &[&str] = &["oh", "yes", "yeah", "ok", "okay", "hey", "hi", "hello", "wow", "lol", "ugh", "please", "thanks"];
const ADV: &[&str] = &[
    "very", "really", "just", "lately", "often", "always", "sometimes", "usually", "too",
    "also", "still", "even", "again", "here", "there", "now", "then", "today", "tonight",
    "yesterday", "tomorrow", "quite", "maybe", "perhaps", "only", "almost", "already", "ever",
    "soon", "away", "back", "so", "never", "how", "why", "where", "anymore", "anyway", "else",
    "together", "alone", "enough", "rather", "barely", "hardly", "much", "more", "most",
    "less", "least", "well", "far", "once", "twice", "recently", "constantly",
];
const ADJ: &[&str] = &[
    "bad", "worse", "worst", "good", "better", "best", "sad", "happy", "tired", "lazy",
    "normal", "fine", "little", "afraid", "dramatic", "specific", "suicidal", "empty",
    "lonely", "anxious", "depressed", "new", "old", "great", "big", "small", "long", "short",
    "high", "low", "own", "same", "different", "real", "sure", "whole", "last", "next",
    "other", "able", "free", "full", "hard", "easy", "close", "dark", "okay", "numb", "sick",
    "scared", "angry", "upset", "alive", "dead", "ill", "weak", "strong", "ready", "nice",
    "awful", "terrible", "horrible", "crazy", "stupid", "weird", "strange", "first", "second",
    "third", "few", "fewer", "several", "certain", "various", "single", "young", "early",
    "late", "quiet", "calm", "busy", "lost", "broken", "guilty", "ashamed", "alright",
    "overwhelmed", "stressed", "exhausted", "sleepy", "hungry",
];
const VERB: &[&str] = &[
    "cut", "feel", "felt", "want", "wanted", "need", "needed", "go", "went", "gone", "goes",
    "think", "thought", "know", "knew", "known", "keep", "kept", "get", "got", "gotten",
    "make", "made", "take", "took", "taken", "see", "saw", "seen", "come", "came", "say",
    "said", "tell", "told", "try", "tried", "cry", "cried", "kill", "look", "seem", "start",
    "stop", "help", "hate", "love", "eat", "ate", "decide", "decided", "believe", "struggle",
    "act", "have", "has", "had", "give", "gave", "given", "find", "found", "leave", "left",
    "let", "put", "become", "became", "lose", "hurt", "hurts", "wish", "hope", "sleep", "slept",
    "wake", "woke", "talk", "call", "called", "live", "die", "died", "run", "ran", "sit",
    "sat", "stay", "bring", "brought", "begin", "began", "mean", "meant", "hear", "heard",
    "worry", "worried", "bother", "bothers", "care", "cares", "miss", "missed", "skip",
    "skipped", "lie", "lay", "read", "write", "wrote", "eat", "drink", "drank", "watch",
    "play", "walk", "ride", "rode", "cook", "clean", "visit", "enjoy", "enjoyed", "feels",
    "wants", "needs", "thinks", "knows", "keeps", "gets", "makes", "takes", "seems", "tries",
    "cries", "looks", "says", "tells", "helps", "comes", "likes", "loves", "hates", "gives",
    "finds", "lives", "sleeps", "eats", "works", "happens", "happened", "ruin", "ruins",
    "ruined", "fail", "failed", "fails", "hide", "hid", "avoid", "avoided", "dread",
    "deserve", "deserves", "imagine", "remember", "forget", "forgot", "understand",
    "understood", "cope", "handle", "manage", "managed", "understands", "tastes",
];
const NOUN_ING: &[&str] = &[
    "morning", "evening", "thing", "nothing", "something", "anything", "everything", "ceiling",
    "wedding", "building", "feeling", "feelings", "ring", "king", "spring", "string", "wing",
    "sibling", "siblings", "meeting", "painting", "clothing", "housing", "pudding", "dumpling",
    "counseling", "counselling", "wellbeing", "being", "training", "parenting",
];
const NOUN_LY: &[&str] = &["family", "belly", "lily", "rally", "jelly", "bully", "ally", "holly", "assembly", "anomaly", "monopoly", "butterfly"];
const NOUN_ADJ_SUFFIX: &[&str] = &["vegetable", "timetable", "olive", "detective", "motive", "relative", "relatives", "initiative", "executive", "objective", "perspective", "narrative", "native", "explosive", "furlough", "sedative", "sedatives"];

fn in_list(list: &[&str], w: &str) -> bool {
    list.contains(&w)
}

fn open_class(word: &str, lower: &str, prev: Option<PosTag>, sentence_start: bool) -> PosTag {
    let after_determiner = matches!(prev, Some(PosTag::Det | PosTag::Adj));
    if in_list(VERB, lower) {
        return if after_determiner { PosTag::Noun } else { PosTag::Verb };
    }
    if in_list(ADJ, lower) {
        return PosTag::Adj;
    }
    let n = lower.chars().count();
    if lower.ends_with("ing") && n >= 5 && !in_list(NOUN_ING, lower) {
        return if after_determiner { PosTag::Noun } else { PosTag::Verb };
    }
    if lower.ends_with("ed") && n >= 5 {
        return if after_determiner { PosTag::Adj } else { PosTag::Verb };
    }
    if lower.ends_with("ly") && n >= 5 && !in_list(NOUN_LY, lower) {
        return PosTag::Adv;
    }
    const ADJ_SUFFIXES: &[&str] = &["ous", "ful", "less", "ive", "able", "ible", "ish"];
    if n >= 6
        && ADJ_SUFFIXES.iter().any(|s| lower.ends_with(s))
        && !in_list(NOUN_ADJ_SUFFIX, lower)
    {
        return PosTag::Adj;
    }
    let capitalized = word.chars().next().is_some_and(char::is_uppercase);
    if capitalized && !sentence_start {
        return PosTag::Propn;
    }
    PosTag::Noun
}

fn closed_class(lower: &str) -> Option<PosTag> {
    let lists: [(&[&str], PosTag); 10] = [
        (PRON, PosTag::Pron),
        (DET, PosTag::Det),
        (AUX, PosTag::Aux),
        (PART, PosTag::Part),
        (CCONJ, PosTag::Cconj),
        (SCONJ, PosTag::Sconj),
        (ADP, PosTag::Adp),
        (INTJ, PosTag::Intj),
        (ADV, PosTag::Adv),
        (&["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "hundred", "thousand"], PosTag::Num),
    ];
    lists
        .iter()
        .find(|(list, _)| in_list(list, lower))
        .map(|(_, tag)| *tag)
}

/// Tag each scanned piece of `text`; returns `(byte range, tag)` pairs.
pub(crate) fn tag_pieces(text: &str) -> Vec<(std::ops::Range<usize>, PosTag)> {
    let mut out: Vec<(std::ops::Range<usize>, PosTag)> = Vec::new();
    for piece in scan(text) {
        let word = &text[piece.range.clone()];
        let prev = out.last().map(|(_, t)| *t);
        let sentence_start = match out.last() {
            None => true,
            Some((r, PosTag::Punct)) => matches!(&text[r.clone()], "." | "!" | "?"),
            Some(_) => false,
        };
        let tag = if piece.kind == PieceKind::Punct {
            PosTag::Punct
        } else {
            let lower = word.to_lowercase().replace('\u{2019}', "'");
            if lower.chars().all(|c| c.is_ascii_digit()) {
                PosTag::Num
            } else if lower == "'s" && prev.is_some_and(PosTag::is_noun) {
                // Possessive after a noun; after a pronoun it is a contracted "is".
                PosTag::Part
            } else if let Some(t) = closed_class(&lower) {
                t
            } else {
                open_class(word, &lower, prev, sentence_start)
            }
        };
        out.push((piece.range, tag));
    }
    out
}
