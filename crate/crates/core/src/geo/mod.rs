//! Region resolution from the tweet place field and free-text user
//! locations.

mod gazetteer;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::PostRecord;

pub use gazetteer::{Gazetteer, GazetteerEntry, GazetteerError, Tier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub enum Region {
    NorthAmerica,
    Europe,
    Africa,
    SouthAsia,
    Oceania,
    #[default]
    Other,
}

impl Region {
    pub const ALL: [Region; 6] = [
        Region::NorthAmerica,
        Region::Europe,
        Region::Africa,
        Region::SouthAsia,
        Region::Oceania,
        Region::Other,
    ];

    /// Human-readable name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Region::NorthAmerica => "North America",
            Region::Europe => "Europe",
            Region::Africa => "Africa",
            Region::SouthAsia => "South Asia",
            Region::Oceania => "Oceania",
            Region::Other => "Other",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Region::NorthAmerica => "NorthAmerica",
            Region::Europe => "Europe",
            Region::Africa => "Africa",
            Region::SouthAsia => "SouthAsia",
            Region::Oceania => "Oceania",
            Region::Other => "Other",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        Region::ALL
            .into_iter()
            .find(|r| r.key().to_lowercase() == norm)
            .ok_or_else(|| format!("unknown region `{s}`"))
    }
}

/// Region of a record: the place field wins when it names a known country,
/// otherwise the user location is matched tier by tier, otherwise `Other`.
pub fn resolve_region(record: &PostRecord, gaz: &Gazetteer) -> Region {
    gaz.resolve(record.place_country.as_deref(), record.user_location_raw.as_deref())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDistribution {
    pub total: usize,
    pub counts: BTreeMap<Region, usize>,
    pub fractions: BTreeMap<Region, f64>,
}

/// Counts and fractions per region. Every region appears, with zero counts
/// if absent; fractions are all zero for empty input.
pub fn region_distribution<I: IntoIterator<Item = Region>>(regions: I) -> RegionDistribution {
    let mut counts: BTreeMap<Region, usize> = Region::ALL.iter().map(|r| (*r, 0)).collect();
    let mut total = 0;
    for r in regions {
        *counts.entry(r).or_default() += 1;
        total += 1;
    }
    let fractions = counts
        .iter()
        .map(|(r, c)| {
            let f = if total == 0 { 0.0 } else { *c as f64 / total as f64 };
            (*r, f)
        })
        .collect();
    RegionDistribution {
        total,
        counts,
        fractions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use rand::distr::{weighted::WeightedIndex, Distribution};
    use rand::SeedableRng;

    fn rec(place: Option<&str>, loc: Option<&str>) -> PostRecord {
        let mut r = PostRecord::new("1", "x", Utc.with_ymd_and_hms(2022, 9, 1, 0, 0, 0).unwrap());
        r.place_country = place.map(Into::into);
        r.user_location_raw = loc.map(Into::into);
        r
    }

    #[test]
    fn spec_examples() {
        let gaz = Gazetteer::builtin();
        assert_eq!(resolve_region(&rec(None, Some("Lagos, Nigeria")), &gaz), Region::Africa);
        assert_eq!(resolve_region(&rec(None, Some("Austin, TX")), &gaz), Region::NorthAmerica);
        assert_eq!(resolve_region(&rec(None, None), &gaz), Region::Other);
        assert_eq!(resolve_region(&rec(Some(""), Some("  ")), &gaz), Region::Other);
        assert_eq!(resolve_region(&rec(None, Some("somewhere on Earth")), &gaz), Region::Other);
    }

    #[test]
    fn place_overrides_user_location() {
        let gaz = Gazetteer::builtin();
        assert_eq!(
            resolve_region(&rec(Some("Australia"), Some("London, UK")), &gaz),
            Region::Oceania
        );
        assert_eq!(resolve_region(&rec(Some("AU"), Some("London, UK")), &gaz), Region::Oceania);
        // unknown place falls through to the user location
        assert_eq!(resolve_region(&rec(Some("Atlantis"), Some("London, UK")), &gaz), Region::Europe);
    }

    #[test]
    fn table_countries_covered() {
        let gaz = Gazetteer::builtin();
        let cases = [
            ("United States", Region::NorthAmerica),
            ("Canada", Region::NorthAmerica),
            ("United Kingdom", Region::Europe),
            ("Ireland", Region::Europe),
            ("France", Region::Europe),
            ("Germany", Region::Europe),
            ("Nigeria", Region::Africa),
            ("South Africa", Region::Africa),
            ("Kenya", Region::Africa),
            ("Uganda", Region::Africa),
            ("Ghana", Region::Africa),
            ("India", Region::SouthAsia),
            ("Pakistan", Region::SouthAsia),
            ("Philippines", Region::SouthAsia),
            ("Australia", Region::Oceania),
            ("New Zealand", Region::Oceania),
        ];
        for (name, region) in cases {
            assert_eq!(gaz.resolve(None, Some(name)), region, "{name}");
            assert_eq!(gaz.resolve(Some(name), None), region, "{name}");
        }
    }

    #[test]
    fn tiers_and_codes() {
        let gaz = Gazetteer::builtin();
        assert_eq!(gaz.resolve(None, Some("Toronto")), Region::NorthAmerica);
        assert_eq!(gaz.resolve(None, Some("Manchester")), Region::Europe);
        assert_eq!(gaz.resolve(None, Some("Vancouver, BC")), Region::NorthAmerica);
        // a code embedded in a longer word does not match; the full name does
        assert_eq!(gaz.resolve(None, Some("CAfe dreaming")), Region::Other);
        assert_eq!(gaz.resolve(None, Some("CAlifornia dreaming")), Region::NorthAmerica);
        assert_eq!(gaz.resolve(None, Some("Portland, OR")), Region::NorthAmerica);
        // codes are case-sensitive tokens
        assert_eq!(gaz.resolve(None, Some("living in my head")), Region::Other);
        // Indiana must not match inside "Indianapolis" and India not inside "Indiana"
        assert_eq!(gaz.resolve(None, Some("Indiana")), Region::NorthAmerica);
        // country tier beats city tier: London, Ontario vs London
        assert_eq!(gaz.resolve(None, Some("London, Canada")), Region::NorthAmerica);
    }

    #[test]
    fn distribution_counts() {
        let d = region_distribution(std::iter::repeat_n(Region::Europe, 10));
        assert_eq!(d.counts[&Region::Europe], 10);
        assert_eq!(d.counts.values().sum::<usize>(), 10);
        assert!(Region::ALL.iter().filter(|r| **r != Region::Europe).all(|r| d.counts[r] == 0));
        let empty = region_distribution(std::iter::empty());
        assert_eq!(empty.total, 0);
        assert!(empty.fractions.values().all(|f| *f == 0.0));
    }

    #[test]
    fn synthetic_corpus_proportions() {
        // Draw locations from a fixed multinomial matching the collection
        // proportions and check the resolved shares.
        let gaz = Gazetteer::builtin();
        let pools: [(&[&str], f64); 6] = [
            (&["", "the moon", "Dubai", "everywhere"], 0.62),
            (&["Austin, TX", "Toronto", "New York City", "United States"], 0.26),
            (&["London, UK", "Dublin", "Ireland"], 0.07),
            (&["Lagos, Nigeria", "Nairobi, Kenya"], 0.01667),
            (&["Mumbai, India", "Karachi, Pakistan"], 0.01667),
            (&["Sydney, Australia", "Auckland, New Zealand"], 0.01666),
        ];
        let expected = [
            Region::Other,
            Region::NorthAmerica,
            Region::Europe,
            Region::Africa,
            Region::SouthAsia,
            Region::Oceania,
        ];
        let dist = WeightedIndex::new(pools.iter().map(|p| p.1)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let mut truth = BTreeMap::new();
        let mut resolved = Vec::with_capacity(n);
        for i in 0..n {
            let k = dist.sample(&mut rng);
            let loc = pools[k].0[i % pools[k].0.len()];
            *truth.entry(expected[k]).or_insert(0usize) += 1;
            resolved.push(gaz.resolve(None, Some(loc)));
        }
        let d = region_distribution(resolved);
        for (region, count) in &truth {
            assert_eq!(d.counts[region], *count, "{region:?}");
        }
        assert!((d.fractions.values().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(d.fractions[&Region::Other] > 0.60);
        assert!((d.fractions[&Region::NorthAmerica] - 0.26).abs() < 0.02);
        assert!((d.fractions[&Region::Europe] - 0.07).abs() < 0.01);
    }

    #[test]
    fn region_parse() {
        assert_eq!("North America".parse::<Region>().unwrap(), Region::NorthAmerica);
        assert_eq!("southasia".parse::<Region>().unwrap(), Region::SouthAsia);
        assert!("Mars".parse::<Region>().is_err());
    }
}
