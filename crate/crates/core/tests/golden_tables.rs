//! Identity pairs for the duplicate-From, multi-address and address-parsing
//! payloads, written down by hand before running any parser.

use spoofchain_core::chain::{extract_auth_identity, extract_display_identity};
use spoofchain_core::corpus::{default_bindings, generate, AttackId, GenOptions};
use spoofchain_core::header::{HeaderField, TruncationCause, Violation};
use spoofchain_core::profile::{
    profile_by_name, strict_rfc, DisplayFrom, MultipleFrom, ParseMode, QuirkProfile, LENIENT_BASE,
};

fn use_first() -> QuirkProfile {
    QuirkProfile {
        display_truncation: [TruncationCause::Nul, TruncationCause::InvisibleUnicode, TruncationCause::SemanticChar]
            .into_iter()
            .collect(),
        multiple_from: MultipleFrom::UseFirst,
        display_from: DisplayFrom::First,
        ..profile_by_name(LENIENT_BASE).unwrap().named("use-first")
    }
}

fn use_last() -> QuirkProfile {
    QuirkProfile { multiple_from: MultipleFrom::UseLast, display_from: DisplayFrom::Last, ..use_first().named("use-last") }
}

type Pair = Option<(&'static str, &'static str)>;

struct Row {
    id: AttackId,
    variant: u32,
    /// Name and value of the last From-like field, byte for byte.
    payload: (&'static [u8], &'static [u8]),
    first: Pair,
    last: Pair,
    strict: Pair,
}

const A: &str = "a.com";
const X: &str = "attack.com";
const ALICE: &str = "Alice@a.com";
const OSCAR: &str = "Oscar@attack.com";

/// (domain handed to DMARC, address shown to the reader); `None` when the
/// profile refuses the message.
const TABLE: &[Row] = &[
    Row { id: AttackId::A4, variant: 0, payload: (b"From", b" <Alice@a.com>"), first: Some((X, OSCAR)), last: Some((A, ALICE)), strict: None },
    Row { id: AttackId::A4, variant: 1, payload: (b"From ", b" <Alice@a.com>"), first: Some((X, OSCAR)), last: Some((X, ALICE)), strict: None },
    Row { id: AttackId::A4, variant: 2, payload: (b"FROM", b" <Alice@a.com>"), first: Some((X, OSCAR)), last: Some((A, ALICE)), strict: None },
    Row { id: AttackId::A4, variant: 3, payload: (b"\x0bFrom", b" <Alice@a.com>"), first: Some((X, OSCAR)), last: Some((X, ALICE)), strict: None },
    Row { id: AttackId::A5, variant: 0, payload: (b"From", b" <Alice@a.com>, <Oscar@attack.com>"), first: Some((A, ALICE)), last: Some((X, OSCAR)), strict: None },
    Row { id: AttackId::A5, variant: 1, payload: (b"From", b" <Alice@a.com>, <>, <Oscar@attack.com>"), first: Some((A, ALICE)), last: Some((X, OSCAR)), strict: None },
    Row { id: AttackId::A5, variant: 2, payload: (b"From", b" [Alice@a.com], <Oscar@attack.com>"), first: Some((A, ALICE)), last: Some((X, OSCAR)), strict: None },
    Row { id: AttackId::A5, variant: 3, payload: (b"From", b" <Alice@a.com>, (note) <Oscar@attack.com>"), first: Some((A, ALICE)), last: Some((X, OSCAR)), strict: None },
    Row { id: AttackId::A6, variant: 0, payload: (b"From", b" <@attack.com,@a.com:Alice@a.com>"), first: Some((A, ALICE)), last: Some((A, ALICE)), strict: None },
    Row { id: AttackId::A6, variant: 1, payload: (b"From", b" <Alice@a.com>, ,<Oscar@attack.com>"), first: Some((A, ALICE)), last: Some((X, OSCAR)), strict: None },
    Row { id: AttackId::A6, variant: 2, payload: (b"From", b" <Alice(Oscar)@a.com(attack.com)>"), first: Some((A, ALICE)), last: Some((A, ALICE)), strict: Some((A, ALICE)) },
    Row { id: AttackId::A6, variant: 3, payload: (b"From", b" <Alice@a.com\x00@attack.com>"), first: Some((X, ALICE)), last: Some((X, ALICE)), strict: None },
    Row { id: AttackId::A6, variant: 4, payload: (b"From", " <Alice@a.com\u{FFFF}@attack.com>".as_bytes()), first: Some((X, ALICE)), last: Some((X, ALICE)), strict: None },
    Row { id: AttackId::A6, variant: 5, payload: (b"From", b" <Alice@a.com;@attack.com>"), first: Some((X, ALICE)), last: Some((X, ALICE)), strict: None },
];

fn observe(case_msg: &spoofchain_core::header::RawMessage, p: &QuirkProfile) -> Option<(String, String)> {
    let auth = extract_auth_identity(case_msg, p);
    if auth.rejected.is_some() {
        return None;
    }
    Some((auth.domain().unwrap_or_default(), extract_display_identity(case_msg, p).displayed_address()))
}

fn last_from_like(fields: &[HeaderField]) -> &HeaderField {
    fields.iter().rev().find(|f| f.name.to_ascii_lowercase().contains("from")).expect("a From field")
}

#[test]
fn payloads_are_the_documented_bytes() {
    for r in TABLE {
        let case = generate(r.id, &default_bindings(r.id), &GenOptions { variant: r.variant, ..GenOptions::default() }).unwrap();
        let fields = case.messages[0].lenient_headers().fields;
        let f = last_from_like(&fields);
        assert_eq!((f.name.as_bytes(), f.raw_value.as_slice()), r.payload, "{} v{}", r.id, r.variant);
    }
}

#[test]
fn identity_pairs_match_hand_derivation() {
    let profiles = [use_first(), use_last(), strict_rfc()];
    let mut checked = 0;
    for r in TABLE {
        let case = generate(r.id, &default_bindings(r.id), &GenOptions { variant: r.variant, ..GenOptions::default() }).unwrap();
        let m = &case.messages[0];
        for (p, want) in profiles.iter().zip([r.first, r.last, r.strict]) {
            let want = want.map(|(d, a)| (d.to_owned(), a.to_owned()));
            assert_eq!(observe(m, p), want, "{} v{} under {}", r.id, r.variant, p.name);
            checked += 1;
        }
    }
    assert_eq!(checked, 42);
}

#[test]
fn strict_reports_every_payload() {
    for r in TABLE {
        let case = generate(r.id, &default_bindings(r.id), &GenOptions { variant: r.variant, ..GenOptions::default() }).unwrap();
        let auth = extract_auth_identity(&case.messages[0], &strict_rfc());
        assert_eq!(auth.rejected.is_some(), r.strict.is_none(), "{} v{}", r.id, r.variant);
        assert!(auth.rejected.is_some() || !auth.violations.is_empty(), "{} v{}", r.id, r.variant);
    }
    for v in 0..AttackId::A4.variants() {
        let case = generate(AttackId::A4, &default_bindings(AttackId::A4), &GenOptions { variant: v, ..GenOptions::default() }).unwrap();
        assert!(case.messages[0].headers(ParseMode::Strict).map_or(true, |h| h.violations.contains(&Violation::MultipleFrom)));
    }
}
