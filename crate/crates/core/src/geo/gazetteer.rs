use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Region;

const BUILTIN: &str = include_str!("../../data/gazetteer.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Country,
    Subdivision,
    City,
    /// ISO country codes; only consulted for the place field.
    Iso,
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "country" => Ok(Tier::Country),
            "subdivision" | "state" | "province" => Ok(Tier::Subdivision),
            "city" => Ok(Tier::City),
            "iso" => Ok(Tier::Iso),
            other => Err(format!("unknown tier `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub name: String,
    pub tier: Tier,
    pub region: Region,
}

impl GazetteerEntry {
    fn is_code(&self) -> bool {
        self.name.len() == 2 && self.name.bytes().all(|b| b.is_ascii_uppercase())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GazetteerError {
    #[error("cannot read gazetteer {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("gazetteer line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Name → region lookup table, in file order.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    lowered: Vec<String>,
}

impl Gazetteer {
    /// The gazetteer shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("builtin gazetteer parses")
    }

    pub fn load(path: &Path) -> Result<Self, GazetteerError> {
        let text = std::fs::read_to_string(path).map_err(|source| GazetteerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parse `name | tier | region` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, GazetteerError> {
        let mut gaz = Gazetteer::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('|').map(str::trim).collect();
            let err = |message: String| GazetteerError::Parse {
                line: idx + 1,
                message,
            };
            let [name, tier, region] = fields[..] else {
                return Err(err(format!("expected 3 `|`-separated fields, got {}", fields.len())));
            };
            if name.is_empty() {
                return Err(err("empty name".into()));
            }
            gaz.push(GazetteerEntry {
                name: name.to_string(),
                tier: tier.parse().map_err(err)?,
                region: region.parse().map_err(err)?,
            });
        }
        Ok(gaz)
    }

    pub fn push(&mut self, entry: GazetteerEntry) {
        self.lowered.push(entry.name.to_lowercase());
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup_exact(&self, name: &str) -> Option<Region> {
        let wanted = name.trim().to_lowercase();
        if wanted.is_empty() {
            return None;
        }
        self.entries
            .iter()
            .zip(&self.lowered)
            .find(|(e, l)| matches!(e.tier, Tier::Country | Tier::Iso) && **l == wanted)
            .map(|(e, _)| e.region)
    }

    /// Best entry of `tier` found in `location`: longest surface wins, ties
    /// go to the earlier entry.
    fn best_in_tier(&self, tier: Tier, lowered: &str, tokens: &[&str]) -> Option<Region> {
        let mut best: Option<(usize, Region)> = None;
        for (entry, low) in self.entries.iter().zip(&self.lowered) {
            if entry.tier != tier {
                continue;
            }
            let hit = if entry.is_code() {
                tokens.contains(&entry.name.as_str())
            } else {
                contains_word(lowered, low)
            };
            if hit && best.is_none_or(|(len, _)| entry.name.len() > len) {
                best = Some((entry.name.len(), entry.region));
            }
        }
        best.map(|(_, r)| r)
    }

    /// Resolve a place field and a free-text location to a region.
    pub fn resolve(&self, place_country: Option<&str>, user_location: Option<&str>) -> Region {
        if let Some(region) = place_country.and_then(|p| self.lookup_exact(p)) {
            return region;
        }
        let Some(location) = user_location.map(str::trim).filter(|s| !s.is_empty()) else {
            return Region::Other;
        };
        let lowered = location.to_lowercase();
        let tokens: Vec<&str> = location
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        [Tier::Country, Tier::Subdivision, Tier::City]
            .into_iter()
            .find_map(|tier| self.best_in_tier(tier, &lowered, &tokens))
            .unwrap_or(Region::Other)
    }
}

/// `needle` occurs in `haystack` with non-alphanumeric characters (or the
/// string ends) on both sides.
fn contains_word(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        let before_ok = haystack[..start]
            .chars()
            .next_back()
            .is_none_or(|c| !c.is_alphanumeric());
        let after_ok = haystack[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        if before_ok && after_ok {
            return true;
        }
        from = start + haystack[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}
