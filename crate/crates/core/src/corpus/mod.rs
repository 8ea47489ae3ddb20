//! Attack corpus: generators for the fourteen spoofing techniques, the
//! header mutation battery, combinations, and export to disk.

mod combine;
mod export;
mod generate;
mod mutate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::auth::{DkimResult, DmarcResult, SpfResult};
use crate::header::RawMessage;

pub use combine::{case_bindings, check_compatible, combine, CombineError, CASE1, CASE2};
pub use export::{export_corpus, read_manifest, ExportError, Manifest, ManifestEntry, MANIFEST_FILE, MANIFEST_VERSION};
pub use generate::{
    baseline, default_bindings, generate, generate_all, homograph_domain, rtl_payload, witness, Bindings, GenError,
    GenOptions, ATTACKER_IP,
};
pub use mutate::{fields_named, mutate, MutateError, Mutation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackId {
    A1,
    A2,
    A3,
    A4,
    A5,
    A6,
    A7,
    A8,
    A9,
    A10,
    A11,
    A12,
    A13,
    A14,
}

impl AttackId {
    pub const ALL: [AttackId; 14] = [
        AttackId::A1,
        AttackId::A2,
        AttackId::A3,
        AttackId::A4,
        AttackId::A5,
        AttackId::A6,
        AttackId::A7,
        AttackId::A8,
        AttackId::A9,
        AttackId::A10,
        AttackId::A11,
        AttackId::A12,
        AttackId::A13,
        AttackId::A14,
    ];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    /// Number of payload variants the generator knows for this id.
    pub fn variants(self) -> u32 {
        match self {
            AttackId::A2 => 2,
            AttackId::A4 | AttackId::A5 => 4,
            AttackId::A6 => 6,
            AttackId::A7 => 2,
            AttackId::A13 => 5,
            AttackId::A14 => 2,
            _ => 1,
        }
    }

    pub fn model(self) -> AttackModel {
        match self {
            AttackId::A1 | AttackId::A2 => AttackModel::SharedMta,
            AttackId::A9 | AttackId::A10 | AttackId::A11 => AttackModel::ForwardMta,
            _ => AttackModel::DirectMta,
        }
    }
}

impl fmt::Display for AttackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown attack id `{0}`")]
pub struct UnknownAttack(pub String);

impl FromStr for AttackId {
    type Err = UnknownAttack;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n: usize = s
            .trim()
            .strip_prefix(['A', 'a'])
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| UnknownAttack(s.to_owned()))?;
        n.checked_sub(1)
            .and_then(|i| AttackId::ALL.get(i).copied())
            .ok_or_else(|| UnknownAttack(s.to_owned()))
    }
}

impl Serialize for AttackId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AttackId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackModel {
    /// The attacker holds an account on the spoofed domain's own MTA.
    SharedMta,
    /// The attacker runs its own MTA and talks to the victim's directly.
    DirectMta,
    /// The message reaches the victim through a forwarding service.
    ForwardMta,
}

/// A forwarding rule on some account, set up by the attacker or the victim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardPlan {
    pub forwarder_domain: String,
    /// The account whose rule forwards; becomes the new MAIL FROM.
    pub account: String,
    pub target: String,
    /// Whether the owner of `target` confirmed the rule.
    pub target_verified: bool,
}

/// What a scenario is expected to report for a case. `None` verdicts mean
/// the message never reached that check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedOutcome {
    pub sending_accepted: bool,
    pub spf: Option<SpfResult>,
    pub dkim: Option<DkimResult>,
    pub dmarc: Option<DmarcResult>,
    pub displayed_address: Option<String>,
    pub sic_alert: bool,
    pub success: bool,
}

/// One generated attack: the message(s) to send plus who it pretends to
/// be and what should happen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackCase {
    /// A single id, or the ids of a combination in order.
    pub ids: Vec<AttackId>,
    pub model: Vec<AttackModel>,
    pub variant: u32,
    /// Two messages mean the second is re-sent by the attacker carrying
    /// whatever the forwarder produced from the first; only its envelope
    /// is meaningful.
    pub messages: Vec<RawMessage>,
    pub forward: Option<ForwardPlan>,
    pub spoof_identity: String,
    pub attacker_identity: String,
    /// The canonical payload form chosen for this variant.
    pub note: String,
    /// Keyed by scenario name.
    #[serde(default)]
    pub expectations: BTreeMap<String, ExpectedOutcome>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CaseError {
    #[error("case has no messages")]
    NoMessages,
    #[error("spoofed and attacker identities are the same")]
    SameIdentity,
    #[error("attack {0} appears twice")]
    DuplicateId(AttackId),
    #[error("forwarding case without a forward plan")]
    MissingForward,
}

impl AttackCase {
    /// `A4`, or `A2+A3+A10` for combinations.
    pub fn label(&self) -> String {
        self.ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("+")
    }

    /// File-name friendly label including the variant.
    pub fn slug(&self) -> String {
        format!("{}_v{}", self.label().replace('+', "-"), self.variant)
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        if self.messages.is_empty() {
            return Err(CaseError::NoMessages);
        }
        if crate::header::same_address(&self.spoof_identity, &self.attacker_identity) {
            return Err(CaseError::SameIdentity);
        }
        let mut seen = Vec::new();
        for id in &self.ids {
            if seen.contains(id) {
                return Err(CaseError::DuplicateId(*id));
            }
            seen.push(*id);
        }
        if (self.model.contains(&AttackModel::ForwardMta) || self.messages.len() > 1) && self.forward.is_none() {
            return Err(CaseError::MissingForward);
        }
        Ok(())
    }
}
