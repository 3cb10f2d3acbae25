//! Class labels shared by annotation, benchmarking and evaluation.

use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A closed set of class labels that metrics can be computed over.
pub trait ClassSet: Copy + Eq + Ord + Hash + fmt::Debug + Send + Sync + 'static {
    /// Every class, in canonical order.
    const ALL: &'static [Self];

    fn index(self) -> usize;

    fn name(self) -> &'static str;

    fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

/// Top-level annotation class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    /// The speaker's own aporophobic view.
    Direct,
    /// Stating or criticising aporophobic views or actions of others.
    Reporting,
    None,
}

impl ClassSet for Label {
    const ALL: &'static [Self] = &[Label::Direct, Label::Reporting, Label::None];

    fn index(self) -> usize {
        self as usize
    }

    fn name(self) -> &'static str {
        match self {
            Label::Direct => "Direct",
            Label::Reporting => "Reporting",
            Label::None => "None",
        }
    }
}

/// Binary toxicity view of [`Label`]: `Direct` is toxic, everything else is not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BinaryLabel {
    Toxic,
    NonToxic,
}

impl ClassSet for BinaryLabel {
    const ALL: &'static [Self] = &[BinaryLabel::Toxic, BinaryLabel::NonToxic];

    fn index(self) -> usize {
        self as usize
    }

    fn name(self) -> &'static str {
        match self {
            BinaryLabel::Toxic => "Toxic",
            BinaryLabel::NonToxic => "NonToxic",
        }
    }
}

impl From<Label> for BinaryLabel {
    fn from(label: Label) -> Self {
        match label {
            Label::Direct => BinaryLabel::Toxic,
            Label::Reporting | Label::None => BinaryLabel::NonToxic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label `{0}`")]
pub struct UnknownLabel(pub String);

fn parse_named<C: ClassSet>(s: &str, aliases: &[(&str, C)]) -> Result<C, UnknownLabel> {
    let trimmed = s.trim();
    for class in C::ALL {
        if class.name().eq_ignore_ascii_case(trimmed) {
            return Ok(*class);
        }
    }
    for (alias, class) in aliases {
        if alias.eq_ignore_ascii_case(trimmed) {
            return Ok(*class);
        }
    }
    Err(UnknownLabel(s.to_string()))
}

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_named(
            s,
            &[
                ("direct aporophobia", Label::Direct),
                ("reporting aporophobia", Label::Reporting),
                ("D", Label::Direct),
                ("R", Label::Reporting),
                ("N", Label::None),
            ],
        )
    }
}

impl FromStr for BinaryLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_named(
            s,
            &[
                ("non-toxic", BinaryLabel::NonToxic),
                ("non_toxic", BinaryLabel::NonToxic),
                ("nontoxic", BinaryLabel::NonToxic),
            ],
        )
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip() {
        for l in Label::ALL {
            assert_eq!(l.name().parse::<Label>().unwrap(), *l);
            assert_eq!(Label::from_index(l.index()), Some(*l));
        }
        for l in BinaryLabel::ALL {
            assert_eq!(l.name().parse::<BinaryLabel>().unwrap(), *l);
        }
        assert_eq!("Non-toxic".parse::<BinaryLabel>().unwrap(), BinaryLabel::NonToxic);
        assert!("maybe".parse::<Label>().is_err());
    }

    #[test]
    fn binary_mapping() {
        assert_eq!(BinaryLabel::from(Label::Direct), BinaryLabel::Toxic);
        assert_eq!(BinaryLabel::from(Label::Reporting), BinaryLabel::NonToxic);
        assert_eq!(BinaryLabel::from(Label::None), BinaryLabel::NonToxic);
    }
}
