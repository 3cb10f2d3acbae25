//! Three-level taxonomy: speech type, degree of action, fine category, plus
//! bias aggravators.
//!
//! Fine categories live in a data file so the catalog can grow without code
//! changes. The file format is one `id | degree | description` per line.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

const BUILTIN: &str = include_str!("../data/catalog.txt");

const HEADER: &str = "# Fine-grained categories: id | degree | description\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SpeechType {
    Direct,
    Reporting,
}

impl SpeechType {
    pub const ALL: [SpeechType; 2] = [SpeechType::Direct, SpeechType::Reporting];
}

/// Degrees of prejudiced action, mildest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DegreeOfAction {
    Antilocution,
    AvoidanceFear,
    Discrimination,
    PhysicalAttack,
    Extermination,
}

impl DegreeOfAction {
    pub const ALL: [DegreeOfAction; 5] = [
        DegreeOfAction::Antilocution,
        DegreeOfAction::AvoidanceFear,
        DegreeOfAction::Discrimination,
        DegreeOfAction::PhysicalAttack,
        DegreeOfAction::Extermination,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DegreeOfAction::Antilocution => "Antilocution",
            DegreeOfAction::AvoidanceFear => "AvoidanceFear",
            DegreeOfAction::Discrimination => "Discrimination",
            DegreeOfAction::PhysicalAttack => "PhysicalAttack",
            DegreeOfAction::Extermination => "Extermination",
        }
    }

    /// Whether speakers can express this degree directly; the three most
    /// severe degrees are only ever reported.
    pub fn allows_direct(self) -> bool {
        matches!(self, DegreeOfAction::Antilocution | DegreeOfAction::AvoidanceFear)
    }
}

impl fmt::Display for DegreeOfAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DegreeOfAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        DegreeOfAction::ALL
            .into_iter()
            .find(|d| d.name().to_lowercase() == norm)
            .ok_or_else(|| format!("unknown degree `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Aggravator {
    Racism,
    Xenophobia,
    Sexism,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineCategory {
    pub id: String,
    pub degree: DegreeOfAction,
    pub description: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("catalog line {line}: duplicate category id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Fine categories in canonical order: by degree, then id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    categories: Vec<FineCategory>,
}

impl Catalog {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("builtin catalog parses")
    }

    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut categories = Vec::new();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| CatalogError::Syntax { line: idx + 1, message };
            let mut parts = line.splitn(3, '|').map(str::trim);
            let (Some(id), Some(degree), Some(description)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err("expected `id | degree | description`".into()));
            };
            if id.is_empty() || id.contains(char::is_whitespace) {
                return Err(err(format!("bad category id `{id}`")));
            }
            if description.contains('\n') {
                return Err(err("description spans lines".into()));
            }
            if !seen.insert(id.to_string()) {
                return Err(CatalogError::DuplicateId { line: idx + 1, id: id.into() });
            }
            categories.push(FineCategory {
                id: id.into(),
                degree: degree.parse().map_err(err)?,
                description: description.into(),
            });
        }
        if categories.is_empty() {
            log::warn!("category catalog is empty");
        }
        categories.sort_by(|a, b| (a.degree, &a.id).cmp(&(b.degree, &b.id)));
        Ok(Catalog { categories })
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Canonical text form; `parse(to_text(c)) == c` and saving a loaded
    /// canonical file reproduces it byte for byte.
    pub fn to_text(&self) -> String {
        let mut out = String::from(HEADER);
        for c in &self.categories {
            out.push_str(&format!("{} | {} | {}\n", c.id, c.degree, c.description));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CatalogError> {
        std::fs::write(path, self.to_text()).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn categories(&self) -> &[FineCategory] {
        &self.categories
    }

    pub fn get(&self, id: &str) -> Option<&FineCategory> {
        self.categories.iter().find(|c| c.id == id)
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyAssignment {
    pub item_id: String,
    pub speech_type: SpeechType,
    pub degree: DegreeOfAction,
    #[serde(default)]
    pub categories: BTreeSet<String>,
    #[serde(default)]
    pub aggravators: BTreeSet<Aggravator>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    DirectRequiresMildDegree { degree: DegreeOfAction },
    UnknownCategory { id: String },
    CategoryDegreeMismatch {
        id: String,
        category_degree: DegreeOfAction,
        assigned: DegreeOfAction,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DirectRequiresMildDegree { degree } => {
                write!(f, "{degree} can only be reported, not expressed directly")
            }
            Violation::UnknownCategory { id } => write!(f, "unknown category `{id}`"),
            Violation::CategoryDegreeMismatch { id, category_degree, assigned } => {
                write!(f, "category `{id}` belongs to {category_degree}, not {assigned}")
            }
        }
    }
}

/// Every violated invariant of `a`, in a stable order.
pub fn validate_assignment(a: &TaxonomyAssignment, catalog: &Catalog) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    if a.speech_type == SpeechType::Direct && !a.degree.allows_direct() {
        v.push(Violation::DirectRequiresMildDegree { degree: a.degree });
    }
    for id in &a.categories {
        match catalog.get(id) {
            None => v.push(Violation::UnknownCategory { id: id.clone() }),
            Some(c) if c.degree != a.degree => v.push(Violation::CategoryDegreeMismatch {
                id: id.clone(),
                category_degree: c.degree,
                assigned: a.degree,
            }),
            Some(_) => {}
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}
