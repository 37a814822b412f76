//! Task shapes and labels shared by data loading, training and metrics.

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    MultiLabel,
    MultiClass,
}

impl Task {
    pub fn is_single_label(self) -> bool {
        !matches!(self, Task::MultiLabel)
    }
}

/// A class index for single-label tasks, or one flag per label.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Label {
    Class(usize),
    Multi(Vec<bool>),
}

impl Label {
    /// Check that the label has the shape `task` and `num_classes` require.
    pub fn check(&self, task: Task, num_classes: usize) -> Result<()> {
        match (self, task) {
            (Label::Class(c), Task::Binary | Task::MultiClass) if *c < num_classes => Ok(()),
            (Label::Class(c), Task::Binary | Task::MultiClass) => Err(Error::Input(format!(
                "class {c} out of range for {num_classes} classes"
            ))),
            (Label::Multi(bits), Task::MultiLabel) if bits.len() == num_classes => Ok(()),
            (Label::Multi(bits), Task::MultiLabel) => Err(Error::Input(format!(
                "expected {num_classes} label flags, got {}",
                bits.len()
            ))),
            (Label::Class(_), Task::MultiLabel) => {
                Err(Error::Input("multi-label task needs a label vector".into()))
            }
            (Label::Multi(_), _) => Err(Error::Input("single-label task needs a class index".into())),
        }
    }

    /// Indices of active labels (one entry for a class label).
    pub fn active(&self) -> Vec<usize> {
        match self {
            Label::Class(c) => vec![*c],
            Label::Multi(bits) => bits
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| i)
                .collect(),
        }
    }

    /// Stable key used for stratification.
    pub fn key(&self) -> String {
        match self {
            Label::Class(c) => c.to_string(),
            Label::Multi(bits) => bits.iter().map(|&b| if b { '1' } else { '0' }).collect(),
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Class(c) => write!(f, "class {c}"),
            Label::Multi(_) => {
                let active = self.active();
                if active.is_empty() {
                    write!(f, "labels (none)")
                } else {
                    let parts: Vec<String> = active.iter().map(usize::to_string).collect();
                    write!(f, "labels {{{}}}", parts.join(", "))
                }
            }
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Label::Class(c) => s.serialize_u64(*c as u64),
            Label::Multi(bits) => {
                let mut seq = s.serialize_seq(Some(bits.len()))?;
                for b in bits {
                    seq.serialize_element(&u8::from(*b))?;
                }
                seq.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct LabelVisitor;

        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Flag {
            Bool(bool),
            Int(u64),
        }

        impl<'de> Visitor<'de> for LabelVisitor {
            type Value = Label;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a class index or an array of 0/1 flags")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Label, E> {
                Ok(Label::Class(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Label, E> {
                usize::try_from(v)
                    .map(Label::Class)
                    .map_err(|_| E::custom(format!("negative class index {v}")))
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Label, A::Error> {
                let mut bits = Vec::new();
                while let Some(flag) = seq.next_element::<Flag>()? {
                    bits.push(match flag {
                        Flag::Bool(b) => b,
                        Flag::Int(0) => false,
                        Flag::Int(1) => true,
                        Flag::Int(n) => {
                            return Err(de::Error::custom(format!("label flag must be 0 or 1, got {n}")))
                        }
                    });
                }
                Ok(Label::Multi(bits))
            }
        }

        d.deserialize_any(LabelVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serde_shapes() {
        let c: Label = serde_json::from_str("3").unwrap();
        assert_eq!(c, Label::Class(3));
        let m: Label = serde_json::from_str("[1,0,true,false]").unwrap();
        assert_eq!(m, Label::Multi(vec![true, false, true, false]));
        assert_eq!(serde_json::to_string(&m).unwrap(), "[1,0,1,0]");
        assert!(serde_json::from_str::<Label>("[2]").is_err());
        assert!(serde_json::from_str::<Label>("-1").is_err());
    }

    #[test]
    fn shape_checks() {
        assert!(Label::Class(1).check(Task::Binary, 2).is_ok());
        assert!(Label::Class(2).check(Task::Binary, 2).is_err());
        assert!(Label::Multi(vec![false; 8]).check(Task::MultiLabel, 9).is_err());
        assert!(Label::Multi(vec![false; 9]).check(Task::MultiLabel, 9).is_ok());
        assert!(Label::Class(0).check(Task::MultiLabel, 9).is_err());
    }

    #[test]
    fn display() {
        assert_eq!(Label::Class(1).to_string(), "class 1");
        assert_eq!(Label::Multi(vec![true, false, true]).to_string(), "labels {0, 2}");
        assert_eq!(Label::Multi(vec![false]).to_string(), "labels (none)");
    }
}
