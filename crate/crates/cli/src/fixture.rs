//! A small synthetic corpus for exercising the whole pipeline offline.
//!
//! Posts fall into five themes with distinct vocabulary, carry a class cue
//! that determines their reference label, and come from every region. A
//! few posts are retweets, duplicates, bot accounts, link shares or hashtag
//! spam, so the collection filters have something to remove.

use std::path::Path;

use aporo_core::ingest::{write_jsonl, PostRecord};
use aporo_core::{ClassSet, Label};
use chrono::{DateTime, Duration, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Config;

pub const FIXTURE_SEED: u64 = 20220825;
pub const FIXTURE_POSTS: usize = 500;

const THEMES: [&[&str]; 5] = [
    &["rent", "eviction", "landlord", "apartment", "lease", "housing", "mortgage", "tenants"],
    &["overdose", "fentanyl", "addiction", "rehab", "naloxone", "opioid", "clinic", "treatment"],
    &["winter", "freezing", "blankets", "snow", "heating", "coats", "frostbite", "storm"],
    &["election", "candidate", "ballot", "campaign", "senator", "voters", "policy", "debate"],
    &["food", "pantry", "groceries", "meals", "hunger", "soup", "kitchen", "donations"],
];

const TERMS: [&str; 6] = ["homeless", "poor people", "low-income", "disadvantaged", "poor families", "welfare recipients"];

const DIRECT: [&str; 6] = [
    "{t} are lazy parasites, {w1} and {w2} are wasted on them",
    "disgusting how {t} ruin every {w1} and {w2}",
    "get rid of {t}, filthy leeches living off {w1} and {w2}",
    "{t} are scum, no more {w1} or {w2} for junkies",
    "sick of {t} begging about {w1}, lazy and disgusting {w2}",
    "{t} are parasites who will never deserve {w1} or {w2}",
];

const REPORTING: [&str; 6] = [
    "it is unfair how people blame {t} for {w1} and {w2}",
    "the stigma against {t} around {w1} is real, stop the {w2} discrimination",
    "cities criminalize {t} instead of fixing {w1} and {w2}",
    "so much hate aimed at {t} over {w1}, the blame on {w2} is wrong",
    "politicians harass {t} and call it {w1} policy, pure discrimination about {w2}",
    "stop the stigma, {t} did not cause the {w1} or {w2} crisis",
];

const NONE: [&str; 6] = [
    "volunteers brought {w1} and {w2} help to {t} this morning",
    "new report on {w1} and {w2} for {t} published today",
    "our town opened a {w1} program for {t} with {w2} support",
    "reading about {w1} options for {t}, the {w2} numbers surprised me",
    "meeting tonight on {w1} and {w2} services for {t}",
    "local group collecting {w1} and {w2} for {t} this week",
];

/// Phrasings without any of the usual cue words.
const SUBTLE: [(Label, &str); 6] = [
    (Label::Direct, "{t} should just get a job instead of asking for {w1} and {w2}"),
    (Label::Direct, "keep {t} away from my street, their {w1} and {w2} is not my problem"),
    (Label::Reporting, "my neighbour says {t} deserve no {w1}, that attitude about {w2} needs to change"),
    (Label::Reporting, "heard a man shout at {t} near the {w1} line, awful {w2} behaviour"),
    (Label::None, "honestly {t} and the {w1} question, not sure what to think about {w2}"),
    (Label::None, "i hate how expensive {w1} and {w2} got, even for {t}"),
];

/// Region-specific wording, indexed like `LOCATIONS`.
const REGIONAL: [[&str; 2]; 6] = [
    [
        "{t} are idlers who eat up the {w1} and {w2} money",
        "chiefs keep shaming {t} at every {w1} and {w2} meeting",
    ],
    [
        "{t} are scroungers and chavs milking {w1} and {w2}",
        "tabloids sneer at {t} as scroungers over {w1} and {w2}",
    ],
    [
        "{t} are freeloaders, zero sympathy on {w1} or {w2}",
        "talk radio mocks {t} as freeloaders again over {w1} and {w2}",
    ],
    [
        "{t} are dole bludgers soaking up {w1} and {w2}",
        "pollies calling {t} dole bludgers over {w1} and {w2} is rubbish",
    ],
    [
        "{t} are a burden and a nuisance for our {w1} and {w2}",
        "relatives treat {t} like a burden over {w1} and {w2}, shameful",
    ],
    [
        "{t} are good for nothing, forget {w1} and {w2}",
        "people online call {t} good for nothing over {w1} and {w2}",
    ],
];

const LOCATIONS: [(&str, &[&str]); 6] = [
    ("Africa", &["Lagos, Nigeria", "Nairobi, Kenya", "Nigeria", "Kenya"]),
    ("Europe", &["London", "Berlin, Germany", "France", "Ireland"]),
    ("NorthAmerica", &["Chicago", "Toronto", "Canada", "United States"]),
    ("Oceania", &["Sydney, Australia", "Australia", "New Zealand", "Perth, Australia"]),
    ("SouthAsia", &["Mumbai, India", "India", "Pakistan", "Lahore, Pakistan"]),
    ("Other", &["", "the moon", "wherever the wifi is", "planet earth"]),
];

const FIRST: [&str; 8] = ["alex", "sam", "jo", "kim", "lee", "pat", "max", "ria"];

pub struct Fixture {
    pub posts: Vec<PostRecord>,
    /// Reference labels for every post that survives filtering.
    pub gold: Vec<(String, Label)>,
}

fn window() -> (DateTime<Utc>, DateTime<Utc>) {
    let d = Config::default();
    let parse = |s: &str| DateTime::parse_from_rfc3339(s).expect("default window").with_timezone(&Utc);
    (parse(&d.sample.window_start), parse(&d.sample.window_end))
}

/// Generate the corpus. The same seed always gives the same posts.
pub fn generate(seed: u64, n: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (start, end) = window();
    let span = (end - start).num_seconds();
    let mut posts = Vec::with_capacity(n);
    let mut gold = Vec::new();
    for i in 0..n {
        let theme = THEMES[i % THEMES.len()];
        let region = rng.random_range(0..LOCATIONS.len());
        let mut label = Label::ALL[rng.random_range(0..3)];
        let style = rng.random_range(0..100);
        let template = if style < 15 {
            let (l, t) = *SUBTLE.choose(&mut rng).expect("subtle");
            label = l;
            t
        } else if style < 40 && label != Label::None {
            REGIONAL[region][label.index()]
        } else {
            let templates = match label {
                Label::Direct => &DIRECT,
                Label::Reporting => &REPORTING,
                Label::None => &NONE,
            };
            *templates.choose(&mut rng).expect("templates")
        };
        // a few reference labels disagree with the wording
        if rng.random_bool(0.06) {
            label = Label::ALL[(label.index() + rng.random_range(1..3)) % 3];
        }
        let pick = |rng: &mut ChaCha8Rng| *theme.choose(rng).expect("non-empty theme");
        let (w1, w2, w3, w4) = (pick(&mut rng), pick(&mut rng), pick(&mut rng), pick(&mut rng));
        let term = *TERMS.choose(&mut rng).expect("terms");
        let body = template.replace("{t}", term).replace("{w1}", w1).replace("{w2}", w2);
        let mut text = format!("{body}. {w3} {w4} #{}", theme[0]);
        let ts = start + Duration::seconds(rng.random_range(0..span));
        let location = *LOCATIONS[region].1.choose(&mut rng).expect("places");
        let user = format!("{}{}", FIRST[rng.random_range(0..FIRST.len())], rng.random_range(10..9999));

        let mut rec = PostRecord::new(format!("p{i:04}"), String::new(), ts);
        rec.user_name = user.clone();
        rec.screen_name = user;
        if !location.is_empty() {
            rec.user_location_raw = Some(location.to_string());
        }
        let mut keep = true;
        match i % 50 {
            7 | 31 => {
                rec.is_retweet = true;
                keep = false;
            }
            13 => {
                text.push_str(" https://example.org/story");
                keep = false;
            }
            19 => {
                rec.screen_name = format!("news_bot_{i}");
                keep = false;
            }
            23 => {
                text.push_str(" #a #b #c #d #e");
                keep = false;
            }
            29 => {
                text = format!("{w1} and {w2} prices again, {w3} everywhere");
                keep = false;
            }
            _ => {}
        }
        rec.text = text;
        if i % 50 == 41 {
            if let Some(prev) = posts.last() {
                let prev: &PostRecord = prev;
                rec.text = prev.text.to_uppercase();
                keep = false;
            }
        }
        if keep {
            gold.push((rec.id.clone(), label));
        }
        posts.push(rec);
    }
    Fixture { posts, gold }
}

/// Pipeline configuration for the fixture, with paths relative to it.
pub fn fixture_config() -> Config {
    let mut c = Config {
        seed: 42,
        workdir: "work".into(),
        ..Config::default()
    };
    c.ingest.input = "posts.jsonl".into();
    c.topics.min_cluster_size = 15;
    c.topics.selection = "all".into();
    c.sample.quotas = String::new();
    c.sample.default_quota = 80;
    c.annotate.gold = "gold.csv".into();
    c.bench.hash_dim = 1 << 14;
    c.eval.min_support = 5;
    c
}

/// Write `posts.jsonl`, `gold.csv` and `config.toml` into `dir`.
pub fn write_fixture(dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let f = generate(FIXTURE_SEED, FIXTURE_POSTS);
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &f.posts)?;
    std::fs::write(dir.join("posts.jsonl"), buf)?;
    let mut gold = String::from("id,label\n");
    for (id, label) in &f.gold {
        gold.push_str(&format!("{id},{}\n", label.name()));
    }
    std::fs::write(dir.join("gold.csv"), gold)?;
    let config = toml::to_string(&fixture_config()).map_err(std::io::Error::other)?;
    std::fs::write(
        dir.join("config.toml"),
        format!("# Pipeline configuration for the synthetic end-to-end fixture.\n\n{config}"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_filterable() {
        let a = generate(1, 120);
        let b = generate(1, 120);
        assert_eq!(a.posts, b.posts);
        assert_ne!(a.posts, generate(2, 120).posts);
        assert!(a.gold.len() < a.posts.len());
        let labels: std::collections::BTreeSet<Label> = a.gold.iter().map(|g| g.1).collect();
        assert_eq!(labels.len(), 3);
    }
}
