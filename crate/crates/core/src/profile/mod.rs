//! Quirk profiles: named bundles of parsing, verification, forwarding and
//! rendering decisions, each modelling how one mail system behaves.

mod fixtures;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::header::TruncationCause;

pub use fixtures::{builtin_profiles, profile_by_name, strict_rfc, LENIENT_BASE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseMode {
    Strict,
    Lenient,
}

/// What to do with more than one `From` field (and, at the address level,
/// more than one mailbox in a single `From`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultipleFrom {
    Reject,
    UseFirst,
    UseLast,
    ShowAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisplayFrom {
    First,
    Last,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullMembers {
    Reject,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouteHandling {
    Strip,
    Reject,
}

/// How a field name is matched against `From`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NameMatching {
    /// ASCII case-insensitive equality of the raw name.
    Exact,
    /// Whitespace and invisible characters removed first.
    Loose,
}

/// Sender-side check between the envelope and the `From` field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SenderFromCheck {
    Off,
    /// MAIL FROM must appear somewhere among the `From` mailboxes.
    AnyMailbox,
    /// MAIL FROM must equal the identity this profile extracts from `From`.
    Extracted,
    /// Exactly one `From` holding exactly one mailbox equal to MAIL FROM.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForwardDkim {
    Never,
    Always,
    OnlyIfVerified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArcSealMode {
    Off,
    /// The AAR records the forwarder's real verdict.
    Faithful,
    /// The AAR claims pass for every mechanism.
    Falsified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Disposition {
    Inbox,
    Spam,
    Reject,
}

/// Conditions that send otherwise-accepted mail to the spam folder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpamTrigger {
    MultipleFrom,
    MultipleMailboxes,
    EmptyMailFrom,
    BidiControls,
}

/// Alerts a renderer may raise next to the sender address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alert {
    Sic,
    Homograph,
    RtlOverride,
    InvisibleChars,
    MultipleFrom,
}

impl Alert {
    pub const ALL: [Alert; 5] = [
        Alert::Sic,
        Alert::Homograph,
        Alert::RtlOverride,
        Alert::InvisibleChars,
        Alert::MultipleFrom,
    ];
}

/// Inclusive range of Unicode scalar values, written `U+FF00-U+FFFF`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CodepointRange {
    pub lo: u32,
    pub hi: u32,
}

impl CodepointRange {
    pub const fn new(lo: u32, hi: u32) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, c: char) -> bool {
        (self.lo..=self.hi).contains(&(c as u32))
    }
}

impl fmt::Display for CodepointRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "U+{:04X}-U+{:04X}", self.lo, self.hi)
    }
}

impl FromStr for CodepointRange {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ProfileError::BadRange(s.to_owned());
        let parse = |p: &str| {
            let p = p.trim();
            let hex = p
                .strip_prefix("U+")
                .or_else(|| p.strip_prefix("u+"))
                .ok_or_else(bad)?;
            u32::from_str_radix(hex, 16).map_err(|_| bad())
        };
        let (lo, hi) = match s.split_once('-') {
            Some((a, b)) => (parse(a)?, parse(b)?),
            None => {
                let v = parse(s)?;
                (v, v)
            }
        };
        Ok(Self { lo, hi })
    }
}

impl Serialize for CodepointRange {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CodepointRange {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("malformed codepoint range `{0}`")]
    BadRange(String),
    #[error("codepoint range {0} has lo > hi")]
    InvertedRange(CodepointRange),
    #[error("profile `{name}`: {source}")]
    Parse {
        name: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("unknown profile `{0}`")]
    Unknown(String),
}

/// A named, deterministic bundle of behaviour. Serialized as a flat
/// key/value document; missing keys take the `strict-rfc` values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case", deny_unknown_fields)]
pub struct QuirkProfile {
    pub name: String,
    pub parse_mode: ParseMode,

    // sending
    pub check_auth_mail_from: bool,
    pub sender_from_check: SenderFromCheck,

    // identity extraction
    pub auth_name_matching: NameMatching,
    pub display_name_matching: NameMatching,
    pub multiple_from: MultipleFrom,
    pub decode_encoded_word_for_auth: bool,
    pub decode_encoded_word_for_display: bool,
    /// Truncation applied when extracting the identity that gets verified.
    pub truncation: BTreeSet<TruncationCause>,
    /// Truncation applied when extracting the identity that gets shown.
    pub display_truncation: BTreeSet<TruncationCause>,
    pub invisible_ranges: Vec<CodepointRange>,
    /// Treat bytes 0x81-0xFF as invisible when the header is not UTF-8.
    pub invisible_high_bytes: bool,
    pub semantic_chars: BTreeSet<char>,
    pub null_list_members: NullMembers,
    pub route_handling: RouteHandling,

    // receiving
    pub spf_helo_fallback: bool,
    /// Disposition for an SPF fail when DMARC has nothing to say.
    pub spf_fail_action: Disposition,
    pub dmarc_org_fallback: bool,
    /// Accept an upstream ARC-sealed DMARC pass in place of a local fail.
    pub honor_arc: bool,
    pub spam_triggers: BTreeSet<SpamTrigger>,

    // forwarding
    pub forward_adds_dkim: ForwardDkim,
    pub forward_requires_auth: bool,
    /// Forwarding rules run before the inbound verdict is acted on.
    pub forward_before_filtering: bool,
    pub arc_seal: ArcSealMode,

    // rendering
    pub display_from: DisplayFrom,
    pub display_drop: BTreeSet<char>,
    pub display_drop_invisible: bool,
    pub display_unicode_idn: bool,
    pub sic_enabled: bool,
    pub alerts: BTreeSet<Alert>,
}

impl Default for QuirkProfile {
    fn default() -> Self {
        strict_rfc()
    }
}

/// Invisible characters by default: C0 controls other than TAB/LF/CR,
/// plus the U+FF00-U+FFFF block.
pub fn default_invisible_ranges() -> Vec<CodepointRange> {
    vec![
        CodepointRange::new(0x00, 0x08),
        CodepointRange::new(0x0B, 0x0C),
        CodepointRange::new(0x0E, 0x1F),
        CodepointRange::new(0xFF00, 0xFFFF),
    ]
}

pub fn default_semantic_chars() -> BTreeSet<char> {
    ['[', ']', '{', '}', '\t', '\r', '\n', ';'].into_iter().collect()
}

/// Characters a careless renderer silently discards from an address.
pub fn default_display_drop() -> BTreeSet<char> {
    ['@', ':', ';', '"'].into_iter().collect()
}

impl QuirkProfile {
    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        for r in &self.invisible_ranges {
            if r.lo > r.hi {
                return Err(ProfileError::InvertedRange(*r));
            }
        }
        Ok(())
    }

    /// Parse a flat TOML document. Keys left out fall back to `strict-rfc`;
    /// a missing `name` falls back to `fallback_name`.
    pub fn from_toml(text: &str, fallback_name: &str) -> Result<Self, ProfileError> {
        let err = |source| ProfileError::Parse {
            name: fallback_name.to_owned(),
            source,
        };
        let table: toml::Table = text.parse().map_err(err)?;
        let has_name = table.contains_key("name");
        let mut p: QuirkProfile = toml::Value::Table(table).try_into().map_err(err)?;
        if !has_name {
            p.name = fallback_name.to_owned();
        }
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile fields are all TOML-representable")
    }

    pub fn alert_enabled(&self, alert: Alert) -> bool {
        self.alerts.contains(&alert)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codepoint_range_text_form() {
        let r: CodepointRange = "U+FF00-U+FFFF".parse().unwrap();
        assert_eq!(r, CodepointRange::new(0xFF00, 0xFFFF));
        assert_eq!(r.to_string(), "U+FF00-U+FFFF");
        assert!(r.contains('\u{FFFF}'));
        assert!(!r.contains('a'));
        let single: CodepointRange = "U+0000".parse().unwrap();
        assert_eq!(single, CodepointRange::new(0, 0));
        assert!("FF00-FFFF".parse::<CodepointRange>().is_err());
    }

    #[test]
    fn inverted_range_rejected() {
        let mut p = strict_rfc();
        p.invisible_ranges.push(CodepointRange::new(10, 1));
        assert!(matches!(p.validate(), Err(ProfileError::InvertedRange(_))));
    }

    #[test]
    fn toml_round_trip_for_every_builtin() {
        for p in builtin_profiles() {
            let text = p.to_toml();
            let back = QuirkProfile::from_toml(&text, "x").unwrap();
            assert_eq!(back, p, "{}", p.name);
        }
    }

    #[test]
    fn missing_keys_fall_back_to_strict() {
        let p = QuirkProfile::from_toml("multiple_from = \"use-last\"\n", "mine").unwrap();
        assert_eq!(p.name, "mine");
        assert_eq!(p.multiple_from, MultipleFrom::UseLast);
        assert_eq!(p.parse_mode, ParseMode::Strict);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(QuirkProfile::from_toml("bogus = 1\n", "x").is_err());
    }
}
