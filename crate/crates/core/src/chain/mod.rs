//! Four-stage delivery chain: sending, receiving, forwarding, rendering.

mod confusable;
mod identity;
mod stages;
mod world;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::auth::DmarcResult;
use crate::corpus::{AttackCase, AttackId, CaseError, ExpectedOutcome};
use crate::header::{address_domain, RawMessage};
use crate::profile::{strict_rfc, Alert, Disposition, QuirkProfile};

pub use confusable::{
    domain_to_ascii, domain_to_unicode, is_homograph, mixed_script, perceived_equal, skeleton, ConfusableTable,
};
pub use identity::{
    apply_display_drop, extract_auth_identity, extract_display_identity, from_fields, is_bidi_control, visual_order,
    AuthIdentity, DisplayIdentity, ShownMailbox, TraceStep, FROM,
};
pub use stages::{
    relay_from_mta, run_forwarding_stage, run_receiving_stage, run_rendering_stage, run_sending_stage,
    stamp_results, ForwardError, ForwardReport, ReceivingReport, RenderDecision, SendingReport,
};
pub use world::{
    builtin_scenarios, builtin_world, default_protected_domains, fixture_key, scenario_by_name, Scenario, World,
    ATTACKER_SPF, CASE1_SCENARIO, CASE2_SCENARIO, DEFAULT_SELECTOR, SIGNING_DOMAINS, WORLD_ZONE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Sending,
    Receiving,
    Forwarding,
    Rendering,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Sending, Stage::Receiving, Stage::Forwarding, Stage::Rendering];

    /// Stage whose weakness an attack technique targets.
    pub fn home_of(id: AttackId) -> Stage {
        match id.number() {
            1..=2 => Stage::Sending,
            3..=8 => Stage::Receiving,
            9..=11 => Stage::Forwarding,
            _ => Stage::Rendering,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Stage::Sending => "Sending",
            Stage::Receiving => "Receiving",
            Stage::Forwarding => "Forwarding",
            Stage::Rendering => "UI Rendering",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

/// The profile in force at each point of a delivery.
#[derive(Debug, Clone, PartialEq)]
pub struct StageProfiles {
    pub sending: QuirkProfile,
    /// The forwarder acting as a receiver for the inbound leg.
    pub forward_receiving: QuirkProfile,
    pub forwarding: QuirkProfile,
    pub receiving: QuirkProfile,
    pub rendering: QuirkProfile,
}

impl StageProfiles {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            sending: s.sender.clone(),
            forward_receiving: s.forwarder.clone(),
            forwarding: s.forwarder.clone(),
            receiving: s.receiver.clone(),
            rendering: s.receiver.clone(),
        }
    }

    /// The same chain with strict-rfc swapped in at one stage. Receiving
    /// covers the forwarder's inbound check as well as the final one.
    pub fn with_strict(mut self, stage: Stage) -> Self {
        match stage {
            Stage::Sending => self.sending = strict_rfc(),
            Stage::Receiving => {
                self.forward_receiving = strict_rfc();
                self.receiving = strict_rfc();
            }
            Stage::Forwarding => self.forwarding = strict_rfc(),
            Stage::Rendering => self.rendering = strict_rfc(),
        }
        self
    }
}

/// Distinct stages a case passes through, in the order first reached.
pub fn stages_of(case: &AttackCase) -> Vec<Stage> {
    let mut out = Vec::new();
    if case.messages.first().is_some_and(|m| m.auth_username.is_some()) {
        out.push(Stage::Sending);
    }
    out.push(Stage::Receiving);
    if case.forward.is_some() {
        out.push(Stage::Forwarding);
    }
    out.push(Stage::Rendering);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("scenario incomplete: {0}")]
    ScenarioIncomplete(String),
    #[error("invalid case: {0}")]
    InvalidCase(#[from] CaseError),
}

/// The four facts attack success is decided from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuccessInputs {
    pub displayed_matches: bool,
    pub dmarc_ok: bool,
    pub inbox: bool,
    pub no_alerts: bool,
}

pub fn success_rule(i: SuccessInputs) -> bool {
    i.displayed_matches && i.dmarc_ok && i.inbox && i.no_alerts
}

/// Everything that happened to one case in one scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainReport {
    pub case_id: String,
    pub label: String,
    pub ids: Vec<AttackId>,
    pub variant: u32,
    pub scenario: String,
    /// The final receiver's profile.
    pub profile_name: String,
    pub spoof_identity: String,
    pub sending: SendingReport,
    pub forwarder_receiving: Option<ReceivingReport>,
    pub forwarding: Option<ForwardReport>,
    pub receiving: Option<ReceivingReport>,
    pub rendering: Option<RenderDecision>,
    /// Reached a mailbox (inbox or spam).
    pub delivered: bool,
    pub success: bool,
    /// Mechanisms the final receiver deploys.
    pub deployment: Deployment,
    /// For a success, the stage each id is blamed on.
    #[serde(default)]
    pub attribution: BTreeMap<AttackId, Stage>,
}

/// Which checks a receiving profile runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Deployment {
    pub spf: bool,
    pub dkim: bool,
    pub dmarc: bool,
    pub sic: bool,
}

impl Deployment {
    pub fn of(receiver: &QuirkProfile) -> Self {
        Self { spf: true, dkim: true, dmarc: true, sic: receiver.sic_enabled }
    }

    pub fn union(self, o: Deployment) -> Self {
        Self { spf: self.spf || o.spf, dkim: self.dkim || o.dkim, dmarc: self.dmarc || o.dmarc, sic: self.sic || o.sic }
    }
}

impl ChainReport {
    pub fn disposition(&self) -> Option<Disposition> {
        self.receiving.as_ref().map(|r| r.disposition)
    }

    pub fn displayed_address(&self) -> Option<&str> {
        self.rendering.as_ref().map(|r| r.displayed_address.as_str())
    }

    /// This report in the shape generators predict outcomes in.
    pub fn observed_outcome(&self) -> ExpectedOutcome {
        let recv = self.receiving.as_ref();
        ExpectedOutcome {
            sending_accepted: self.sending.accepted,
            spf: recv.map(|r| r.verdict.spf.result),
            dkim: recv.map(|r| r.verdict.dkim_result()),
            dmarc: recv.map(|r| r.effective_dmarc),
            displayed_address: self.rendering.as_ref().map(|r| r.displayed_address.clone()),
            sic_alert: self.rendering.as_ref().is_some_and(|r| r.alerts.contains(&Alert::Sic)),
            success: self.success,
        }
    }

    /// The success rule's inputs; `None` when the message never rendered.
    pub fn success_inputs(&self) -> Option<SuccessInputs> {
        let (recv, shown) = (self.receiving.as_ref()?, self.rendering.as_ref()?);
        Some(SuccessInputs {
            displayed_matches: perceived_equal(&shown.displayed_address, &self.spoof_identity),
            dmarc_ok: matches!(recv.effective_dmarc, DmarcResult::Pass | DmarcResult::None),
            inbox: recv.disposition == Disposition::Inbox,
            no_alerts: shown.alerts.is_empty(),
        })
    }
}

fn incomplete(what: impl Into<String>) -> ChainError {
    ChainError::ScenarioIncomplete(what.into())
}

/// Run a case through the scenario's profiles. A success is attributed
/// per id to the first stage, from the id's home stage on, where a
/// strict-rfc profile would have stopped it.
pub fn run_chain(case: &AttackCase, scenario: &Scenario) -> Result<ChainReport, ChainError> {
    let profiles = StageProfiles::from_scenario(scenario);
    let mut report = run_chain_with(case, scenario, &profiles)?;
    if report.success {
        report.attribution = attribute(case, scenario, &profiles)?;
    }
    Ok(report)
}

/// The first-stop rule behind [`run_chain`]'s attribution.
pub fn attribute(
    case: &AttackCase,
    scenario: &Scenario,
    profiles: &StageProfiles,
) -> Result<BTreeMap<AttackId, Stage>, ChainError> {
    let present = stages_of(case);
    let mut stops: BTreeMap<Stage, bool> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for &id in &case.ids {
        let home = Stage::home_of(id);
        let mut blamed = home;
        for &stage in present.iter().filter(|s| **s >= home) {
            let stopped = match stops.get(&stage) {
                Some(&s) => s,
                None => {
                    let s = !run_chain_with(case, scenario, &profiles.clone().with_strict(stage))?.success;
                    stops.insert(stage, s);
                    s
                }
            };
            if stopped {
                blamed = stage;
                break;
            }
        }
        out.insert(id, blamed);
    }
    Ok(out)
}

/// Run every case; reports are independent so order is preserved.
pub fn run_batch(cases: &[AttackCase], scenario: &Scenario) -> Vec<Result<ChainReport, ChainError>> {
    cases.iter().map(|c| run_chain(c, scenario)).collect()
}

pub fn run_chain_with(
    case: &AttackCase,
    scenario: &Scenario,
    profiles: &StageProfiles,
) -> Result<ChainReport, ChainError> {
    case.validate()?;
    let world = &scenario.world;
    let resolver = scenario.resolver();
    let mut report = ChainReport {
        case_id: case.slug(),
        label: case.label(),
        ids: case.ids.clone(),
        variant: case.variant,
        scenario: scenario.name.clone(),
        profile_name: profiles.receiving.name.clone(),
        spoof_identity: case.spoof_identity.clone(),
        sending: SendingReport { accepted: true, bypassed: true, reason: None },
        forwarder_receiving: None,
        forwarding: None,
        receiving: None,
        rendering: None,
        delivered: false,
        success: false,
        deployment: Deployment::of(&profiles.receiving),
        attribution: BTreeMap::new(),
    };

    let mut msg = case.messages[0].clone();
    if let Some(user) = msg.auth_username.clone() {
        report.sending = run_sending_stage(&msg, &profiles.sending);
        if !report.sending.accepted {
            return Ok(report);
        }
        let domain = address_domain(&user)
            .ok_or_else(|| incomplete(format!("auth user {user} has no domain")))?
            .to_ascii_lowercase();
        let ip = world.mta_ip(&domain).ok_or_else(|| incomplete(format!("no MTA address for {domain}")))?;
        msg = relay_from_mta(&msg, &domain, ip, world.key_for(&domain));
    }

    if let Some(plan) = &case.forward {
        let inbound = run_receiving_stage(&msg, &profiles.forward_receiving, resolver, &scenario.suffixes);
        let proceed = profiles.forward_receiving.forward_before_filtering || inbound.disposition == Disposition::Inbox;
        let prior = inbound.verdict.clone();
        let stamped = stamp_results(&msg, &inbound);
        report.forwarder_receiving = Some(inbound);
        if !proceed {
            report.forwarding = Some(ForwardReport {
                forwarded: false,
                dkim_added: false,
                arc_added: false,
                reason: Some("filtered before forwarding".into()),
            });
            return Ok(report);
        }
        let fwd_ip = world
            .mta_ip(&plan.forwarder_domain)
            .ok_or_else(|| incomplete(format!("no MTA address for {}", plan.forwarder_domain)))?;
        let key = world.key_for(&plan.forwarder_domain);
        match run_forwarding_stage(&stamped, &profiles.forwarding, key, &prior, plan, fwd_ip) {
            Ok((out, fr)) => {
                report.forwarding = Some(fr);
                msg = out;
            }
            Err(ForwardError::NoForwardTarget(t)) => {
                report.forwarding = Some(ForwardReport {
                    forwarded: false,
                    dkim_added: false,
                    arc_added: false,
                    reason: Some(format!("forward target {t} not confirmed")),
                });
                return Ok(report);
            }
            Err(e) => return Err(incomplete(e.to_string())),
        }
        if let Some(resend) = case.messages.get(1) {
            msg = RawMessage { header_block: msg.header_block, body: msg.body, ..resend.clone() };
        }
    }

    let recv = run_receiving_stage(&msg, &profiles.receiving, resolver, &scenario.suffixes);
    let delivered = recv.disposition != Disposition::Reject;
    let stamped = stamp_results(&msg, &recv);
    report.receiving = Some(recv);
    report.delivered = delivered;
    if delivered {
        report.rendering = Some(run_rendering_stage(&stamped, &profiles.rendering, &scenario.protected_domains));
    }
    report.success = report.success_inputs().is_some_and(success_rule);
    Ok(report)
}
