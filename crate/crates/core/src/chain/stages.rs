use std::collections::BTreeSet;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use super::confusable::{is_homograph, ConfusableTable};
use super::identity::{extract_auth_identity, extract_display_identity, from_fields, is_bidi_control, TraceStep};
use crate::auth::{
    arc_seal, arc_validate, dkim_sign, dkim_verify, dmarc_evaluate, falsified, format_results, next_arc_instance,
    parse_results, spf_evaluate, AuthVerdict, CanonPair, DkimKeyPair, DkimResult, DmarcResult, Policy, Resolver,
    SpfResult, SuffixSet, AUTHENTICATION_RESULTS, DEFAULT_SIGNED_HEADERS,
};
use crate::corpus::ForwardPlan;
use crate::header::{is_invisible, parse_address_list_with, same_address, AddressOptions, RawMessage};
use crate::profile::{
    Alert, ArcSealMode, DisplayFrom, Disposition, ForwardDkim, ParseMode, QuirkProfile, SenderFromCheck, SpamTrigger,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SendingReport {
    pub accepted: bool,
    /// The attacker talked to the victim's MTA directly; nothing checked.
    pub bypassed: bool,
    pub reason: Option<String>,
}

impl SendingReport {
    fn accept() -> Self {
        Self { accepted: true, bypassed: false, reason: None }
    }

    fn reject(why: impl Into<String>) -> Self {
        Self { accepted: false, bypassed: false, reason: Some(why.into()) }
    }
}

/// Every mailbox in every `From` field, parsed leniently.
fn all_from_mailboxes(msg: &RawMessage, profile: &QuirkProfile) -> Vec<String> {
    let headers = msg.lenient_headers();
    let opts = AddressOptions { mode: ParseMode::Lenient, truncation: BTreeSet::new() };
    from_fields(&headers, profile.auth_name_matching, profile)
        .into_iter()
        .filter_map(|f| parse_address_list_with(&f.unfolded(), profile, &opts).ok())
        .flat_map(|l| l.mailboxes.into_iter().map(|m| m.address()))
        .collect()
}

/// Checks a submission MTA applies to an authenticated user. Messages
/// without an authenticated user never pass through one.
pub fn run_sending_stage(msg: &RawMessage, profile: &QuirkProfile) -> SendingReport {
    let Some(user) = msg.auth_username.as_deref() else {
        return SendingReport { accepted: true, bypassed: true, reason: None };
    };
    if profile.check_auth_mail_from {
        match msg.mail_from.as_deref() {
            None => return SendingReport::reject("empty MAIL FROM from an authenticated user"),
            Some(mf) if !same_address(mf, user) => {
                return SendingReport::reject(format!("MAIL FROM {mf} is not the authenticated user {user}"))
            }
            _ => {}
        }
    }
    let sender = msg.mail_from.as_deref().unwrap_or(user);
    match profile.sender_from_check {
        SenderFromCheck::Off => SendingReport::accept(),
        SenderFromCheck::AnyMailbox => {
            if all_from_mailboxes(msg, profile).iter().any(|a| same_address(a, sender)) {
                SendingReport::accept()
            } else {
                SendingReport::reject(format!("{sender} does not appear in From"))
            }
        }
        SenderFromCheck::Extracted => match extract_auth_identity(msg, profile).address() {
            Some(a) if same_address(&a, sender) => SendingReport::accept(),
            Some(a) => SendingReport::reject(format!("From {a} differs from {sender}")),
            None => SendingReport::reject("no usable From"),
        },
        SenderFromCheck::Exact => {
            let strict = QuirkProfile { parse_mode: ParseMode::Strict, ..profile.clone() };
            let id = extract_auth_identity(msg, &strict);
            if let Some(why) = id.rejected {
                return SendingReport::reject(why);
            }
            match id.address() {
                Some(a) if id.from_fields == 1 && id.mailboxes == 1 && same_address(&a, sender) => SendingReport::accept(),
                Some(a) => SendingReport::reject(format!("From {a} differs from {sender}")),
                None => SendingReport::reject("no usable From"),
            }
        }
    }
}

/// Hand an accepted submission to the submitting domain's MTA: it now
/// connects from that MTA's address and signs if it holds a key.
pub fn relay_from_mta(msg: &RawMessage, mta_domain: &str, mta_ip: IpAddr, key: Option<&DkimKeyPair>) -> RawMessage {
    let mut out = msg.clone();
    out.helo_domain = mta_domain.to_owned();
    out.client_ip = mta_ip;
    out.auth_username = None;
    if let Some(k) = key {
        if let Ok(signed) = dkim_sign(&out, k, CanonPair::RELAXED, DEFAULT_SIGNED_HEADERS) {
            out = signed;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceivingReport {
    pub profile: String,
    pub verdict: AuthVerdict,
    /// The identity extraction's address, when it produced one.
    pub auth_from: Option<String>,
    /// The DMARC result acted on: the evaluated one, unless an upstream
    /// ARC seal was honoured in its place.
    pub effective_dmarc: DmarcResult,
    pub arc_override: bool,
    pub disposition: Disposition,
    pub reason: Option<String>,
}

fn spam_trigger(msg: &RawMessage, profile: &QuirkProfile) -> Option<SpamTrigger> {
    let headers = msg.lenient_headers();
    let froms = from_fields(&headers, crate::profile::NameMatching::Loose, profile);
    let opts = AddressOptions { mode: ParseMode::Lenient, truncation: BTreeSet::new() };
    profile.spam_triggers.iter().copied().find(|t| match t {
        SpamTrigger::MultipleFrom => froms.len() > 1,
        SpamTrigger::MultipleMailboxes => froms.iter().any(|f| {
            parse_address_list_with(&f.unfolded(), profile, &opts).is_ok_and(|l| l.mailboxes.len() > 1)
        }),
        SpamTrigger::EmptyMailFrom => msg.mail_from.is_none(),
        SpamTrigger::BidiControls => froms
            .iter()
            .any(|f| String::from_utf8_lossy(&f.unfolded()).chars().any(is_bidi_control)),
    })
}

/// Authenticate an inbound message and decide where it goes.
pub fn run_receiving_stage(
    msg: &RawMessage,
    profile: &QuirkProfile,
    resolver: &dyn Resolver,
    suffixes: &SuffixSet,
) -> ReceivingReport {
    let id = extract_auth_identity(msg, profile);
    let from_domain = id.domain();
    let spf = spf_evaluate(msg.client_ip, &msg.helo_domain, msg.mail_from.as_deref(), resolver, profile);
    let dkim = dkim_verify(msg, resolver);
    let arc = arc_validate(msg, resolver);
    let dmarc = dmarc_evaluate(from_domain.as_deref(), &spf, &dkim, resolver, profile, suffixes);

    let arc_override = profile.honor_arc
        && dmarc.result == DmarcResult::Fail
        && arc.as_ref().is_some_and(|a| {
            a.chain_valid
                && a.claimed_dmarc == Some(DmarcResult::Pass)
                && a.claimed_header_from.as_deref().map(str::to_ascii_lowercase) == from_domain
        });
    let effective_dmarc = if arc_override { DmarcResult::Pass } else { dmarc.result };
    let policy = dmarc.policy_applied;
    let spf_result = spf.result;
    let verdict = AuthVerdict { spf, dkim, dmarc, arc };

    let (mut disposition, mut reason) = if let Some(why) = &id.rejected {
        (Disposition::Reject, Some(why.clone()))
    } else {
        match effective_dmarc {
            DmarcResult::Fail => {
                let d = match policy {
                    Policy::Reject => Disposition::Reject,
                    Policy::Quarantine => Disposition::Spam,
                    Policy::None => Disposition::Inbox,
                };
                (d, Some(format!("dmarc fail, policy {policy:?}").to_lowercase()))
            }
            DmarcResult::None | DmarcResult::TempError if spf_result == SpfResult::Fail => {
                (profile.spf_fail_action, Some("spf fail without dmarc".into()))
            }
            _ => (Disposition::Inbox, None),
        }
    };
    if disposition == Disposition::Inbox {
        if let Some(t) = spam_trigger(msg, profile) {
            disposition = Disposition::Spam;
            reason = Some(format!("spam trigger {t:?}").to_lowercase());
        }
    }
    ReceivingReport {
        profile: profile.name.clone(),
        verdict,
        auth_from: id.address(),
        effective_dmarc,
        arc_override,
        disposition,
        reason,
    }
}

/// Prepend the receiver's Authentication-Results, reporting the DMARC
/// result it acted on.
pub fn stamp_results(msg: &RawMessage, report: &ReceivingReport) -> RawMessage {
    let mut shown = report.verdict.clone();
    shown.dmarc.result = report.effective_dmarc;
    let mut out = msg.clone();
    out.prepend_field(AUTHENTICATION_RESULTS, format!(" {}", format_results(&report.profile, &shown)).as_bytes());
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardReport {
    pub forwarded: bool,
    pub dkim_added: bool,
    pub arc_added: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ForwardError {
    #[error("forward target {0} was never confirmed")]
    NoForwardTarget(String),
    #[error("forwarder {0} has no signing key")]
    MissingKey(String),
    #[error("arc: {0}")]
    Arc(#[from] crate::auth::ArcError),
}

/// Re-send an inbound message to the forward target, signing and sealing
/// as the profile dictates.
pub fn run_forwarding_stage(
    msg: &RawMessage,
    profile: &QuirkProfile,
    key: Option<&DkimKeyPair>,
    prior: &AuthVerdict,
    plan: &ForwardPlan,
    forwarder_ip: IpAddr,
) -> Result<(RawMessage, ForwardReport), ForwardError> {
    if profile.forward_requires_auth && !plan.target_verified {
        return Err(ForwardError::NoForwardTarget(plan.target.clone()));
    }
    let mut out = msg.clone();
    out.mail_from = Some(plan.account.clone());
    out.rcpt_to = vec![plan.target.clone()];
    out.helo_domain = plan.forwarder_domain.clone();
    out.client_ip = forwarder_ip;
    out.auth_username = None;

    let sign = match profile.forward_adds_dkim {
        ForwardDkim::Never => false,
        ForwardDkim::Always => true,
        ForwardDkim::OnlyIfVerified => prior.dkim.iter().any(|d| d.result == DkimResult::Pass),
    };
    let needs_key = sign || profile.arc_seal != ArcSealMode::Off;
    let key = match key {
        Some(k) => Some(k),
        None if needs_key => return Err(ForwardError::MissingKey(plan.forwarder_domain.clone())),
        None => None,
    };
    let mut report = ForwardReport { forwarded: true, dkim_added: false, arc_added: false, reason: None };
    if sign {
        if let Ok(signed) = dkim_sign(&out, key.expect("checked"), CanonPair::RELAXED, DEFAULT_SIGNED_HEADERS) {
            out = signed;
            report.dkim_added = true;
        }
    }
    let claim = match profile.arc_seal {
        ArcSealMode::Off => None,
        ArcSealMode::Faithful => Some(prior.clone()),
        ArcSealMode::Falsified => Some(falsified(prior)),
    };
    if let Some(claim) = claim {
        out = arc_seal(&out, key.expect("checked"), next_arc_instance(&out), &claim)?;
        report.arc_added = true;
    }
    Ok((out, report))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderDecision {
    pub displayed_address: String,
    pub displayed_name: Option<String>,
    pub alerts: BTreeSet<Alert>,
    pub extraction_trace: Vec<TraceStep>,
}

/// Whether the receiver's own Authentication-Results vouch for `domain`.
fn receiver_vouches(msg: &RawMessage, authserv_id: &str, domain: &str) -> bool {
    let headers = msg.lenient_headers();
    let Some(field) = headers.named(AUTHENTICATION_RESULTS).next() else {
        return false;
    };
    let Some(results) = parse_results(&String::from_utf8_lossy(&field.unfolded())) else {
        return false;
    };
    results.authserv_id == authserv_id
        && results
            .dmarc()
            .is_some_and(|(r, from)| r == DmarcResult::Pass && from.is_some_and(|f| f.eq_ignore_ascii_case(domain)))
}

/// Decide what the reader sees. Never modifies the message.
pub fn run_rendering_stage(msg: &RawMessage, profile: &QuirkProfile, protected_domains: &[String]) -> RenderDecision {
    let shown = extract_display_identity(msg, profile);
    let mut alerts = BTreeSet::new();
    let envelope = msg.envelope_domain();

    if profile.sic_enabled {
        let inconsistent = shown.mailboxes.iter().any(|m| match &m.real_domain {
            Some(d) => !d.eq_ignore_ascii_case(&envelope) && !receiver_vouches(msg, &profile.name, d),
            None => true,
        });
        if inconsistent {
            alerts.insert(Alert::Sic);
        }
    }
    let table = ConfusableTable::default();
    if profile.alert_enabled(Alert::Homograph)
        && shown
            .mailboxes
            .iter()
            .filter_map(|m| m.real_domain.as_deref())
            .any(|d| is_homograph(d, protected_domains, &table))
    {
        alerts.insert(Alert::Homograph);
    }
    if profile.alert_enabled(Alert::RtlOverride) && shown.logical_text.chars().any(is_bidi_control) {
        alerts.insert(Alert::RtlOverride);
    }
    if profile.alert_enabled(Alert::InvisibleChars)
        && shown.logical_text.chars().any(|c| c == '\0' || is_invisible(c, profile, false))
    {
        alerts.insert(Alert::InvisibleChars);
    }
    if profile.alert_enabled(Alert::MultipleFrom) && shown.from_fields > 1 && profile.display_from == DisplayFrom::All {
        alerts.insert(Alert::MultipleFrom);
    }
    RenderDecision {
        displayed_address: shown.displayed_address(),
        displayed_name: shown.displayed_name(),
        alerts,
        extraction_trace: shown.trace,
    }
}
