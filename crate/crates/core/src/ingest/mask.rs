use super::{IngestError, PostRecord, TermMatch};

pub const DEFAULT_PLACEHOLDER: &str = "[GROUP]";

/// Replace every matched span of `record.text` with `placeholder`.
///
/// Sets `masked_text` and `matched_terms`; `text` is left untouched and every
/// byte outside the spans is copied verbatim.
pub fn mask_terms(
    mut record: PostRecord,
    matches: &[TermMatch],
    placeholder: &str,
) -> Result<PostRecord, IngestError> {
    let text = &record.text;
    let mut spans: Vec<&TermMatch> = matches.iter().collect();
    spans.sort_by_key(|m| (m.start, m.end));
    for m in &spans {
        if m.start >= m.end
            || m.end > text.len()
            || !text.is_char_boundary(m.start)
            || !text.is_char_boundary(m.end)
        {
            return Err(IngestError::InvalidSpan {
                start: m.start,
                end: m.end,
                len: text.len(),
            });
        }
    }
    for pair in spans.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(IngestError::OverlappingSpans {
                first: (pair[0].start, pair[0].end),
                second: (pair[1].start, pair[1].end),
            });
        }
    }
    let mut masked = String::with_capacity(text.len());
    let mut cursor = 0;
    for m in &spans {
        masked.push_str(&text[cursor..m.start]);
        masked.push_str(placeholder);
        cursor = m.end;
    }
    masked.push_str(&text[cursor..]);
    record.matched_terms = spans.iter().map(|m| m.term_id.clone()).collect();
    record.masked_text = masked;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{match_query_terms, QueryTermSet};
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn rec(text: &str) -> PostRecord {
        PostRecord::new("1", text, Utc.with_ymd_and_hms(2022, 9, 1, 0, 0, 0).unwrap())
    }

    fn m(id: &str, start: usize, end: usize) -> TermMatch {
        TermMatch { term_id: id.into(), start, end }
    }

    #[test]
    fn single_span() {
        let out = mask_terms(rec("the homeless need help"), &[m("homeless", 4, 12)], "[GROUP]").unwrap();
        assert_eq!(out.masked_text, "the [GROUP] need help");
        assert_eq!(out.text, "the homeless need help");
        assert_eq!(out.matched_terms, ["homeless"]);
    }

    #[test]
    fn zero_matches_is_identity() {
        let out = mask_terms(rec("nothing here"), &[], DEFAULT_PLACEHOLDER).unwrap();
        assert_eq!(out.masked_text, "nothing here");
        assert!(out.matched_terms.is_empty());
    }

    #[test]
    fn overlapping_spans_rejected() {
        let err = mask_terms(rec("poor people"), &[m("a", 0, 6), m("b", 5, 11)], "X").unwrap_err();
        assert!(matches!(err, IngestError::OverlappingSpans { .. }));
        let err = mask_terms(rec("poor"), &[m("a", 0, 9)], "X").unwrap_err();
        assert!(matches!(err, IngestError::InvalidSpan { .. }));
        let err = mask_terms(rec("é"), &[m("a", 1, 2)], "X").unwrap_err();
        assert!(matches!(err, IngestError::InvalidSpan { .. }));
    }

    const WORDS: &[&str] = &[
        "the", "poor", "people", "homeless", "help", "on", "welfare", "low-income", "are", "lazy",
        "performance", "folks", "café", ",", ".", "!", "lower", "class",
    ];

    proptest! {
        // Oracle: count placeholders in the output and compare with the
        // number of matches; check that removing placeholders and matched
        // surfaces leaves the same residue.
        #[test]
        fn placeholder_count_equals_match_count(words in prop::collection::vec(prop::sample::select(WORDS), 1..25)) {
            let text = words.join(" ");
            let matches = match_query_terms(&text, &QueryTermSet::collection_default());
            let out = mask_terms(rec(&text), &matches, "\u{1}").unwrap();
            prop_assert_eq!(out.masked_text.matches('\u{1}').count(), matches.len());
            prop_assert_eq!(out.matched_terms.len(), matches.len());

            let mut residue = String::new();
            let mut cursor = 0;
            for mt in &matches {
                residue.push_str(&text[cursor..mt.start]);
                cursor = mt.end;
            }
            residue.push_str(&text[cursor..]);
            prop_assert_eq!(out.masked_text.replace('\u{1}', ""), residue);

            let ws_text = text.split_whitespace().count();
            let ws_masked = out.masked_text.split_whitespace().count();
            let collapsed: usize = matches.iter().map(|mt| text[mt.start..mt.end].split_whitespace().count() - 1).sum();
            prop_assert_eq!(ws_masked, ws_text - collapsed);
        }
    }
}
