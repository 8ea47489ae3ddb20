//! Shipped profiles. The `*-like` fixtures are labelled approximations
//! assembled from published measurements of each vendor; they are test
//! fixtures, not claims about how those services behave today.

use std::collections::BTreeSet;

use super::*;
use crate::header::TruncationCause;

/// Name of the tolerant-but-not-broken baseline.
pub const LENIENT_BASE: &str = "lenient-baseline";

/// Follows the RFCs everywhere and raises every alert it knows.
pub fn strict_rfc() -> QuirkProfile {
    QuirkProfile {
        name: "strict-rfc".into(),
        parse_mode: ParseMode::Strict,
        check_auth_mail_from: true,
        sender_from_check: SenderFromCheck::Exact,
        auth_name_matching: NameMatching::Exact,
        display_name_matching: NameMatching::Exact,
        multiple_from: MultipleFrom::Reject,
        decode_encoded_word_for_auth: true,
        decode_encoded_word_for_display: true,
        truncation: BTreeSet::new(),
        display_truncation: BTreeSet::new(),
        invisible_ranges: default_invisible_ranges(),
        invisible_high_bytes: true,
        semantic_chars: default_semantic_chars(),
        null_list_members: NullMembers::Reject,
        route_handling: RouteHandling::Reject,
        spf_helo_fallback: true,
        spf_fail_action: Disposition::Reject,
        dmarc_org_fallback: true,
        honor_arc: false,
        spam_triggers: BTreeSet::new(),
        forward_adds_dkim: ForwardDkim::OnlyIfVerified,
        forward_requires_auth: true,
        forward_before_filtering: false,
        arc_seal: ArcSealMode::Faithful,
        display_from: DisplayFrom::All,
        display_drop: BTreeSet::new(),
        display_drop_invisible: false,
        display_unicode_idn: false,
        sic_enabled: true,
        alerts: Alert::ALL.into_iter().collect(),
    }
}

fn lenient_base() -> QuirkProfile {
    QuirkProfile {
        name: LENIENT_BASE.into(),
        parse_mode: ParseMode::Lenient,
        sender_from_check: SenderFromCheck::Extracted,
        display_name_matching: NameMatching::Loose,
        multiple_from: MultipleFrom::UseFirst,
        null_list_members: NullMembers::Skip,
        route_handling: RouteHandling::Strip,
        arc_seal: ArcSealMode::Off,
        display_from: DisplayFrom::First,
        sic_enabled: false,
        alerts: BTreeSet::new(),
        ..strict_rfc()
    }
}

fn all_truncation() -> BTreeSet<TruncationCause> {
    [
        TruncationCause::Nul,
        TruncationCause::InvisibleUnicode,
        TruncationCause::SemanticChar,
    ]
    .into_iter()
    .collect()
}

fn set<T: Ord, const N: usize>(items: [T; N]) -> BTreeSet<T> {
    items.into_iter().collect()
}

/// Every shipped profile, strict first.
pub fn builtin_profiles() -> Vec<QuirkProfile> {
    let base = lenient_base();
    vec![
        strict_rfc(),
        base.clone(),
        // Rejects duplicate From, shows IDNs in Unicode, and cuts the shown
        // address at NUL while verifying the full string.
        QuirkProfile {
            display_truncation: set([TruncationCause::Nul]),
            multiple_from: MultipleFrom::Reject,
            display_unicode_idn: true,
            sic_enabled: true,
            alerts: set([Alert::Sic, Alert::RtlOverride, Alert::InvisibleChars, Alert::MultipleFrom]),
            ..base.clone().named("gmail-like")
        },
        // Verifies the first From but shows the last one.
        QuirkProfile {
            sender_from_check: SenderFromCheck::Off,
            multiple_from: MultipleFrom::UseFirst,
            display_from: DisplayFrom::Last,
            decode_encoded_word_for_auth: false,
            forward_requires_auth: false,
            forward_before_filtering: true,
            display_unicode_idn: true,
            ..base.clone().named("icloud-like")
        },
        // Membership-only sender check; strict about duplicate From on
        // receipt; signs everything it forwards.
        QuirkProfile {
            sender_from_check: SenderFromCheck::AnyMailbox,
            multiple_from: MultipleFrom::Reject,
            spf_helo_fallback: false,
            decode_encoded_word_for_auth: false,
            forward_adds_dkim: ForwardDkim::Always,
            forward_before_filtering: true,
            ..base.clone().named("yahoo-like")
        },
        QuirkProfile {
            sender_from_check: SenderFromCheck::Off,
            decode_encoded_word_for_auth: false,
            spam_triggers: set([SpamTrigger::MultipleFrom, SpamTrigger::MultipleMailboxes]),
            forward_requires_auth: false,
            forward_before_filtering: true,
            ..base.clone().named("outlook-like")
        },
        // Forwards without checks, signs, and seals a fabricated pass.
        QuirkProfile {
            sender_from_check: SenderFromCheck::Off,
            display_from: DisplayFrom::Last,
            forward_requires_auth: false,
            forward_before_filtering: true,
            forward_adds_dkim: ForwardDkim::Always,
            arc_seal: ArcSealMode::Falsified,
            honor_arc: true,
            sic_enabled: true,
            alerts: set([Alert::Sic]),
            ..base.clone().named("office365-like")
        },
        QuirkProfile {
            sender_from_check: SenderFromCheck::Off,
            display_from: DisplayFrom::Last,
            arc_seal: ArcSealMode::Falsified,
            honor_arc: true,
            display_drop: default_display_drop(),
            sic_enabled: true,
            alerts: set([Alert::Sic]),
            spam_triggers: set([SpamTrigger::MultipleMailboxes, SpamTrigger::EmptyMailFrom]),
            ..base.clone().named("zoho-like")
        },
        QuirkProfile {
            display_from: DisplayFrom::Last,
            spf_helo_fallback: false,
            decode_encoded_word_for_auth: false,
            display_truncation: all_truncation(),
            dmarc_org_fallback: false,
            forward_requires_auth: false,
            forward_before_filtering: true,
            ..base.clone().named("yandex-like")
        },
        // Verifies the last mailbox, shows the first.
        QuirkProfile {
            sender_from_check: SenderFromCheck::Off,
            multiple_from: MultipleFrom::UseLast,
            display_from: DisplayFrom::First,
            forward_requires_auth: false,
            forward_before_filtering: true,
            display_drop: default_display_drop(),
            ..base.clone().named("sohu-like")
        },
        QuirkProfile {
            sender_from_check: SenderFromCheck::Off,
            spf_helo_fallback: false,
            display_from: DisplayFrom::Last,
            decode_encoded_word_for_auth: false,
            dmarc_org_fallback: false,
            forward_requires_auth: false,
            forward_before_filtering: true,
            display_unicode_idn: true,
            display_drop: default_display_drop(),
            display_drop_invisible: true,
            sic_enabled: true,
            alerts: set([Alert::Sic]),
            ..base.clone().named("netease-like")
        },
        QuirkProfile {
            sender_from_check: SenderFromCheck::Off,
            spf_helo_fallback: false,
            display_from: DisplayFrom::Last,
            dmarc_org_fallback: false,
            forward_adds_dkim: ForwardDkim::Always,
            forward_before_filtering: true,
            display_drop: default_display_drop(),
            sic_enabled: true,
            alerts: set([Alert::Sic]),
            ..base.clone().named("aliyun-like")
        },
        // Sending side checks nothing.
        QuirkProfile {
            check_auth_mail_from: false,
            sender_from_check: SenderFromCheck::Off,
            spf_helo_fallback: false,
            dmarc_org_fallback: false,
            forward_requires_auth: false,
            forward_before_filtering: true,
            display_unicode_idn: true,
            display_drop: default_display_drop(),
            sic_enabled: true,
            alerts: set([Alert::Sic]),
            ..base.clone().named("zimbra-like")
        },
        QuirkProfile {
            sender_from_check: SenderFromCheck::Off,
            multiple_from: MultipleFrom::ShowAll,
            display_from: DisplayFrom::All,
            display_drop: default_display_drop(),
            sic_enabled: true,
            alerts: set([Alert::Sic, Alert::MultipleFrom]),
            ..base.clone().named("qq-like")
        },
        // Shows every From and flags homographs.
        QuirkProfile {
            sender_from_check: SenderFromCheck::Off,
            dmarc_org_fallback: false,
            multiple_from: MultipleFrom::ShowAll,
            display_from: DisplayFrom::All,
            forward_requires_auth: false,
            forward_before_filtering: true,
            display_unicode_idn: true,
            sic_enabled: true,
            alerts: set([Alert::Sic, Alert::Homograph, Alert::MultipleFrom]),
            ..base.named("coremail-like")
        },
    ]
}

pub fn profile_by_name(name: &str) -> Result<QuirkProfile, ProfileError> {
    builtin_profiles()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| ProfileError::Unknown(name.to_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_valid() {
        let all = builtin_profiles();
        let names: BTreeSet<_> = all.iter().map(|p| p.name.clone()).collect();
        assert_eq!(names.len(), all.len());
        for p in &all {
            p.validate().unwrap();
        }
    }

    #[test]
    fn lookup() {
        assert_eq!(profile_by_name("strict-rfc").unwrap(), strict_rfc());
        assert!(profile_by_name("nope").is_err());
    }
}
