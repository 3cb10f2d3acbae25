use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::TopicError;

/// Topics chosen by a human reviewer, with an optional rationale each.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSelection {
    pub selected_topic_ids: Vec<i32>,
    pub rationale: Vec<String>,
}

impl TopicSelection {
    pub fn contains(&self, topic_id: i32) -> bool {
        self.selected_topic_ids.contains(&topic_id)
    }
}

/// Parse a selection file: one `id` or `id | rationale` per line, `#`
/// comments and blank lines ignored.
pub fn parse_selection(text: &str) -> Result<TopicSelection, TopicError> {
    let mut sel = TopicSelection::default();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id_part, rationale) = match line.split_once('|') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (line, ""),
        };
        let id: i32 = id_part.parse().map_err(|_| TopicError::Syntax {
            line: idx + 1,
            message: format!("`{id_part}` is not a topic id"),
        })?;
        if id < 0 {
            return Err(TopicError::Syntax {
                line: idx + 1,
                message: "the outlier set cannot be selected".into(),
            });
        }
        if !seen.insert(id) {
            return Err(TopicError::Syntax {
                line: idx + 1,
                message: format!("topic {id} listed twice"),
            });
        }
        sel.selected_topic_ids.push(id);
        sel.rationale.push(rationale.to_string());
    }
    Ok(sel)
}

/// Parse a selection and check every id against `known_ids`.
pub fn select_topics(known_ids: &[i32], text: &str) -> Result<TopicSelection, TopicError> {
    let sel = parse_selection(text)?;
    if let Some(bad) = sel.selected_topic_ids.iter().find(|id| !known_ids.contains(id)) {
        return Err(TopicError::UnknownTopic(*bad));
    }
    if sel.selected_topic_ids.is_empty() {
        log::warn!("topic selection is empty");
    }
    Ok(sel)
}

#[cfg(test)]
mod tests {
    use super::*;

    const REVIEWED_IDS: [i32; 15] = [5, 6, 10, 14, 38, 49, 56, 67, 88, 91, 96, 100, 106, 118, 139];

    #[test]
    fn reviewed_selection_valid() {
        let known: Vec<i32> = (0..142).collect();
        let text: String = REVIEWED_IDS.iter().map(|id| format!("{id} | relevant\n")).collect();
        let sel = select_topics(&known, &format!("# chosen topics\n{text}")).unwrap();
        assert_eq!(sel.selected_topic_ids, REVIEWED_IDS);
        assert_eq!(sel.rationale[0], "relevant");
    }

    #[test]
    fn empty_and_unknown() {
        let known: Vec<i32> = (0..142).collect();
        assert!(select_topics(&known, "").unwrap().selected_topic_ids.is_empty());
        assert!(matches!(select_topics(&known, "5\n9999\n"), Err(TopicError::UnknownTopic(9999))));
        assert!(matches!(select_topics(&known, "5\nfive\n"), Err(TopicError::Syntax { line: 2, .. })));
        assert!(matches!(select_topics(&known, "5\n5\n"), Err(TopicError::Syntax { .. })));
        assert!(matches!(select_topics(&known, "-1\n"), Err(TopicError::Syntax { .. })));
    }
}
