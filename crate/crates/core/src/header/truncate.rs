use serde::{Deserialize, Serialize};

use crate::profile::QuirkProfile;

/// Characters that make a tolerant parser stop reading a string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationCause {
    Nul,
    InvisibleUnicode,
    SemanticChar,
}

/// Whether `c` counts as invisible under `profile`. NUL is reported
/// separately as its own cause and is not considered here.
pub fn is_invisible(c: char, profile: &QuirkProfile, latin1_context: bool) -> bool {
    if c == '\0' {
        return false;
    }
    if latin1_context && profile.invisible_high_bytes && ('\u{81}'..='\u{ff}').contains(&c) {
        return true;
    }
    profile.invisible_ranges.iter().any(|r| r.contains(c))
}

fn cause_of(c: char, profile: &QuirkProfile, enabled: &std::collections::BTreeSet<TruncationCause>, latin1: bool) -> Option<TruncationCause> {
    if c == '\0' && enabled.contains(&TruncationCause::Nul) {
        Some(TruncationCause::Nul)
    } else if enabled.contains(&TruncationCause::InvisibleUnicode) && is_invisible(c, profile, latin1) {
        Some(TruncationCause::InvisibleUnicode)
    } else if enabled.contains(&TruncationCause::SemanticChar) && profile.semantic_chars.contains(&c) {
        Some(TruncationCause::SemanticChar)
    } else {
        None
    }
}

/// Cut `text` at the first character whose cause is enabled in the
/// profile's verification-side `truncation` set.
pub fn apply_truncation(text: &str, profile: &QuirkProfile) -> (String, Option<TruncationCause>) {
    let (s, t) = apply_truncation_in(text, profile, &profile.truncation, false);
    (s, t.map(|(_, c)| c))
}

/// As [`apply_truncation`] with an explicit cause set. Returns the prefix
/// and, when cut, the byte offset and cause.
pub fn apply_truncation_in(
    text: &str,
    profile: &QuirkProfile,
    enabled: &std::collections::BTreeSet<TruncationCause>,
    latin1_context: bool,
) -> (String, Option<(usize, TruncationCause)>) {
    if enabled.is_empty() {
        return (text.to_owned(), None);
    }
    for (i, c) in text.char_indices() {
        if let Some(cause) = cause_of(c, profile, enabled, latin1_context) {
            return (text[..i].to_owned(), Some((i, cause)));
        }
    }
    (text.to_owned(), None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{strict_rfc, CodepointRange};
    use std::collections::BTreeSet;

    fn with(causes: &[TruncationCause]) -> QuirkProfile {
        QuirkProfile {
            truncation: causes.iter().copied().collect(),
            ..strict_rfc()
        }
    }

    #[test]
    fn nul_cuts_the_domain() {
        let p = with(&[TruncationCause::Nul]);
        assert_eq!(
            apply_truncation("admin@a.com\0@attack.com", &p),
            ("admin@a.com".to_owned(), Some(TruncationCause::Nul))
        );
    }

    #[test]
    fn disabled_set_is_identity() {
        let p = with(&[]);
        assert_eq!(
            apply_truncation("admin@a.com\0@attack.com", &p),
            ("admin@a.com\0@attack.com".to_owned(), None)
        );
    }

    #[test]
    fn invisible_range_from_profile() {
        let mut p = with(&[TruncationCause::InvisibleUnicode]);
        p.invisible_ranges = vec![CodepointRange::new(0xFF00, 0xFFFF)];
        assert_eq!(
            apply_truncation("user\u{FFFF}x@a.com", &p),
            ("user".to_owned(), Some(TruncationCause::InvisibleUnicode))
        );
        // outside the configured range nothing happens
        assert_eq!(apply_truncation("user\u{1}x@a.com", &p).1, None);
    }

    #[test]
    fn semantic_characters() {
        let p = with(&[TruncationCause::SemanticChar]);
        assert_eq!(
            apply_truncation("Alice@a.com;@attack.com", &p),
            ("Alice@a.com".to_owned(), Some(TruncationCause::SemanticChar))
        );
        assert_eq!(apply_truncation("Alice@a.com", &p).1, None);
    }

    #[test]
    fn first_cause_wins() {
        let p = with(&[TruncationCause::Nul, TruncationCause::SemanticChar]);
        assert_eq!(apply_truncation("a;b\0c", &p).1, Some(TruncationCause::SemanticChar));
        assert_eq!(apply_truncation("a\0b;c", &p).1, Some(TruncationCause::Nul));
    }

    #[test]
    fn high_bytes_only_in_latin1_context() {
        let p = strict_rfc();
        let set: BTreeSet<_> = [TruncationCause::InvisibleUnicode].into_iter().collect();
        assert_eq!(apply_truncation_in("ab\u{e9}c", &p, &set, false).1, None);
        assert_eq!(
            apply_truncation_in("ab\u{e9}c", &p, &set, true),
            ("ab".to_owned(), Some((2, TruncationCause::InvisibleUnicode)))
        );
    }

    #[test]
    fn tab_is_not_invisible_by_default() {
        assert!(!is_invisible('\t', &strict_rfc(), false));
        assert!(is_invisible('\u{b}', &strict_rfc(), false));
    }
}
