use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, Ipv4Addr};
use std::sync::OnceLock;

use proptest::prelude::*;
use proptest::sample::{select, subsequence};

use spoofchain_core::auth::{
    dmarc_evaluate, AuthVerdict, DkimOutcome, DkimResult, DmarcResult, DnsZone, IdentitySource, SpfOutcome,
    SpfResult, SuffixSet,
};
use spoofchain_core::chain::{builtin_scenarios, run_chain, success_rule, ChainReport, SuccessInputs};
use spoofchain_core::corpus::generate_all;
use spoofchain_core::header::{apply_truncation, parse_message, serialize_message, HeaderBlock, RawMessage, TruncationCause};
use spoofchain_core::profile::{strict_rfc, Alert, Disposition, ParseMode, LENIENT_BASE};
use spoofchain_core::report::{advise, aggregate, emit, parse_matrix, Format};

fn cfg() -> ProptestConfig {
    ProptestConfig { cases: 1000, ..ProptestConfig::default() }
}

// ---- DMARC ----

const DOMAINS: [&str; 6] = ["a.com", "mail.a.com", "x.mail.a.com", "attack.com", "b.org", "mail.b.org"];

/// Registrable domain for the fixed domain set above: the last two labels.
fn org(d: &str) -> String {
    let labels: Vec<&str> = d.split('.').collect();
    labels[labels.len().saturating_sub(2)..].join(".")
}

fn oracle_aligned(id: &str, from: &str, strict: bool) -> bool {
    if strict {
        id.eq_ignore_ascii_case(from)
    } else {
        org(&id.to_ascii_lowercase()) == org(&from.to_ascii_lowercase())
    }
}

fn spf_result() -> impl Strategy<Value = SpfResult> {
    select(vec![
        SpfResult::Pass,
        SpfResult::Fail,
        SpfResult::SoftFail,
        SpfResult::Neutral,
        SpfResult::None,
        SpfResult::TempError,
        SpfResult::PermError,
    ])
}

fn dkim_result() -> impl Strategy<Value = DkimResult> {
    select(vec![DkimResult::Pass, DkimResult::Fail, DkimResult::None, DkimResult::PermError, DkimResult::TempError])
}

/// (p, adkim strict, aspf strict) per domain that publishes a record.
type Records = BTreeMap<&'static str, (&'static str, bool, bool)>;

fn records() -> impl Strategy<Value = Records> {
    proptest::collection::btree_map(
        select(DOMAINS.to_vec()),
        (select(vec!["none", "quarantine", "reject"]), any::<bool>(), any::<bool>()),
        0..4,
    )
}

fn zone_of(r: &Records) -> DnsZone {
    let mut z = DnsZone::new();
    for (d, (p, adkim, aspf)) in r {
        let s = |b: bool| if b { "s" } else { "r" };
        z.txt_record(&format!("_dmarc.{d}"), format!("v=DMARC1; p={p}; adkim={}; aspf={}", s(*adkim), s(*aspf)));
    }
    z
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn dmarc_pass_implies_an_aligned_passing_mechanism(
        from in proptest::option::of(select(DOMAINS.to_vec())),
        spf in (spf_result(), select(DOMAINS.to_vec())),
        dkim in proptest::collection::vec((select(DOMAINS.to_vec()), dkim_result()), 0..3),
        recs in records(),
        org_fallback in any::<bool>(),
    ) {
        let zone = zone_of(&recs);
        let profile = spoofchain_core::profile::QuirkProfile { dmarc_org_fallback: org_fallback, ..strict_rfc() };
        let spf = SpfOutcome { result: spf.0, identity_domain: spf.1.to_owned(), identity_source: IdentitySource::MailFrom };
        let dkim: Vec<DkimOutcome> = dkim
            .into_iter()
            .map(|(d, r)| DkimOutcome { domain: d.to_owned(), selector: "s1".into(), result: r, reason: None })
            .collect();
        let out = dmarc_evaluate(from, &spf, &dkim, &zone, &profile, &SuffixSet::default());
        let verdict = AuthVerdict { spf: spf.clone(), dkim: dkim.clone(), dmarc: out.clone(), arc: None };
        prop_assert!(verdict.invariant_violations(true).is_empty());

        if out.result == DmarcResult::Pass {
            let from = from.unwrap();
            let rd = out.record_domain.as_deref().unwrap();
            let (_, adkim, aspf) = recs[rd];
            let spf_ok = spf.result == SpfResult::Pass && oracle_aligned(&spf.identity_domain, from, aspf);
            let dkim_ok = dkim.iter().any(|d| d.result == DkimResult::Pass && oracle_aligned(&d.domain, from, adkim));
            prop_assert!(spf_ok || dkim_ok, "{out:?}");
        }
        if from.is_none() {
            prop_assert_eq!(out.result, DmarcResult::None);
        }
    }
}

// ---- header round trip ----

fn field_name() -> impl Strategy<Value = String> {
    "[!-9;-~]{1,12}"
}

fn field_value() -> impl Strategy<Value = String> {
    ("[ -~]{0,30}", proptest::collection::vec("[!-~][ -~]{0,10}", 0..3))
        .prop_map(|(head, folds)| folds.iter().fold(format!(" {head}"), |acc, f| format!("{acc}\r\n\t{f}")))
}

fn message(fields: &[(String, Vec<u8>)], body: &[u8]) -> RawMessage {
    let mut m = RawMessage::new("h.test", IpAddr::V4(Ipv4Addr::LOCALHOST), vec!["b@b.com".into()]);
    let mut h = HeaderBlock::new();
    for (n, v) in fields {
        h.push_raw(n.as_bytes(), v);
    }
    m.header_block = h.into_bytes();
    m.body = body.to_vec();
    m
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn serialize_parse_round_trip(
        fields in proptest::collection::vec((field_name(), field_value()), 1..8),
        body in "[ -~\r\n]{0,60}",
    ) {
        let fields: Vec<(String, Vec<u8>)> = fields.into_iter().map(|(n, v)| (n, v.into_bytes())).collect();
        let m = message(&fields, body.as_bytes());
        let eml = serialize_message(&m);
        let (parsed, parsed_body) = parse_message(&eml, ParseMode::Strict).unwrap();
        prop_assert_eq!(parsed.fields.len(), fields.len());
        for (i, (f, (n, v))) in parsed.fields.iter().zip(&fields).enumerate() {
            prop_assert_eq!(&f.name, n);
            prop_assert_eq!(&f.raw_value, v);
            prop_assert_eq!(f.ordinal, i);
        }
        prop_assert_eq!(&parsed_body, body.as_bytes());
        let again: Vec<(String, Vec<u8>)> = parsed.fields.iter().map(|f| (f.name.clone(), f.raw_value.clone())).collect();
        prop_assert_eq!(serialize_message(&message(&again, &parsed_body)), eml);
    }

    #[test]
    fn lenient_parse_keeps_adversarial_bytes(
        values in proptest::collection::vec(proptest::collection::vec(prop_oneof![Just(0u8), 0x20u8..0x7f, 0x80u8..=0xff], 0..20), 1..5),
    ) {
        let fields: Vec<(String, Vec<u8>)> = values
            .into_iter()
            .map(|mut v| {
                v.insert(0, b' ');
                ("From".to_owned(), v)
            })
            .collect();
        let m = message(&fields, b"");
        let (parsed, _) = parse_message(&serialize_message(&m), ParseMode::Lenient).unwrap();
        let got: Vec<&Vec<u8>> = parsed.fields.iter().map(|f| &f.raw_value).collect();
        let want: Vec<&Vec<u8>> = fields.iter().map(|(_, v)| v).collect();
        prop_assert_eq!(got, want);
    }
}

// ---- truncation ----

fn tricky_text() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        select(vec!['a', 'Z', '@', '.', ' ', '\0', '\u{FFFF}', '\u{FF10}', ';', '[', '"', ':', '\t', 'é', '\u{200B}', '\u{202E}']),
        0..24,
    )
    .prop_map(|v| v.into_iter().collect())
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn truncation_returns_a_prefix(
        text in tricky_text(),
        causes in subsequence(vec![TruncationCause::Nul, TruncationCause::InvisibleUnicode, TruncationCause::SemanticChar], 0..=3),
    ) {
        let profile = spoofchain_core::profile::QuirkProfile {
            truncation: causes.iter().copied().collect(),
            ..spoofchain_core::profile::profile_by_name(LENIENT_BASE).unwrap()
        };
        let (out, cause) = apply_truncation(&text, &profile);
        prop_assert!(text.starts_with(&out));
        match cause {
            None => prop_assert_eq!(&out, &text),
            Some(c) => {
                prop_assert!(causes.contains(&c));
                prop_assert!(out.len() < text.len());
            }
        }
    }
}

// ---- aggregation and success ----

fn pool() -> &'static [ChainReport] {
    static POOL: OnceLock<Vec<ChainReport>> = OnceLock::new();
    POOL.get_or_init(|| {
        let cases = generate_all(11);
        builtin_scenarios()
            .iter()
            .flat_map(|s| cases.iter().map(move |c| run_chain(c, s).unwrap()))
            .collect()
    })
}

fn successes() -> Vec<ChainReport> {
    pool().iter().filter(|r| r.success).cloned().collect()
}

fn sample_reports() -> impl Strategy<Value = (Vec<ChainReport>, Vec<ChainReport>)> {
    let n = pool().len();
    proptest::collection::vec(0..n, 0..40).prop_flat_map(|idx| {
        let picked: Vec<ChainReport> = idx.iter().map(|&i| pool()[i].clone()).collect();
        (Just(picked.clone()), Just(picked).prop_shuffle())
    })
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn aggregate_ignores_order((reports, shuffled) in sample_reports()) {
        let m = aggregate(&reports);
        prop_assert_eq!(&m, &aggregate(&shuffled));
        for row in &m.rows {
            for ids in row.cells.values() {
                for id in ids {
                    prop_assert!(reports.iter().any(|r| r.scenario == row.name && r.success && r.ids.contains(id)));
                }
            }
        }
        prop_assert_eq!(parse_matrix(&emit(&m, Format::Json)).unwrap(), m);
    }

    #[test]
    fn success_rule_is_the_conjunction(a in any::<bool>(), b in any::<bool>(), c in any::<bool>(), d in any::<bool>()) {
        let i = SuccessInputs { displayed_matches: a, dmarc_ok: b, inbox: c, no_alerts: d };
        prop_assert_eq!(success_rule(i), a && b && c && d);
    }

    #[test]
    fn flipping_one_conjunct_breaks_a_success(
        pick in any::<prop::sample::Index>(),
        conjunct in 0usize..4,
        alt in 0usize..5,
    ) {
        let wins = successes();
        let mut r = pick.get(&wins).clone();
        let before = r.success_inputs().unwrap();
        prop_assert!(success_rule(before));
        let recv = r.receiving.as_mut().unwrap();
        let shown = r.rendering.as_mut().unwrap();
        match conjunct {
            0 => shown.displayed_address = ["Oscar@attack.com", "", "Alice@a.co", "bob@b.com", "admin@paypa1.org"][alt].into(),
            1 => recv.effective_dmarc = [DmarcResult::Fail, DmarcResult::TempError][alt % 2],
            2 => recv.disposition = [Disposition::Spam, Disposition::Reject][alt % 2],
            _ => {
                shown.alerts.insert(Alert::ALL[alt]);
            }
        }
        let after = r.success_inputs().unwrap();
        prop_assert!(!success_rule(after));
        let flags = |i: SuccessInputs| [i.displayed_matches, i.dmarc_ok, i.inbox, i.no_alerts];
        let changed: Vec<usize> = (0..4).filter(|&k| flags(before)[k] != flags(after)[k]).collect();
        prop_assert_eq!(changed, vec![conjunct]);
    }
}

#[test]
fn the_pool_has_both_outcomes() {
    let wins = successes();
    assert!(!wins.is_empty() && wins.len() < pool().len());
    let ids: BTreeSet<_> = wins.iter().flat_map(|r| r.ids.clone()).collect();
    assert_eq!(ids.len(), 14);
}

#[test]
fn every_success_gets_an_advisory_per_id() {
    for r in successes() {
        let lines = advise(&r);
        for id in &r.ids {
            assert!(lines.iter().any(|l| l.starts_with(&format!("{id}:"))), "{id} in {}", r.case_id);
        }
    }
    for r in pool().iter().filter(|r| !r.success) {
        assert!(advise(r).is_empty());
    }
}

#[test]
fn runs_are_deterministic() {
    let cases = generate_all(11);
    for s in builtin_scenarios() {
        for c in cases.iter().step_by(5) {
            assert_eq!(run_chain(c, &s).unwrap(), run_chain(c, &s).unwrap());
        }
    }
    assert_eq!(generate_all(11), cases);
}
