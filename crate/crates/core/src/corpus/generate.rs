use std::collections::BTreeMap;
use std::net::{IpAddr, Ipv4Addr};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use unicode_script::{Script, UnicodeScript};

use super::{AttackCase, AttackId, ExpectedOutcome, ForwardPlan};
use crate::auth::{DkimResult, DmarcResult, SpfResult};
use crate::chain::{domain_to_ascii, ConfusableTable};
use crate::header::{address_domain, address_local, encode_word_b64, HeaderBlock, RawMessage};

/// Where the attacker's own MTA connects from.
pub const ATTACKER_IP: IpAddr = IpAddr::V4(Ipv4Addr::new(203, 0, 113, 66));

const BODY: &str = "Hello,\r\n\r\nPlease find the quarterly summary below.\r\n\r\nRegards\r\n";

/// The three parties of an attack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bindings {
    /// Who the victim should believe sent the message.
    pub spoof: String,
    /// An address the attacker legitimately controls.
    pub attacker: String,
    /// The victim.
    pub target: String,
    pub attacker_ip: IpAddr,
}

impl Bindings {
    pub fn new(spoof: &str, attacker: &str, target: &str) -> Self {
        Self { spoof: spoof.into(), attacker: attacker.into(), target: target.into(), attacker_ip: ATTACKER_IP }
    }

    fn spoof_domain(&self) -> &str {
        address_domain(&self.spoof).unwrap_or_default()
    }

    fn attacker_domain(&self) -> &str {
        address_domain(&self.attacker).unwrap_or_default()
    }

    /// The attacker's local part on another domain.
    fn attacker_at(&self, domain: &str) -> String {
        format!("{}@{domain}", address_local(&self.attacker))
    }
}

/// Bindings matching the shipped world for `id`.
pub fn default_bindings(id: AttackId) -> Bindings {
    let spoof = match id {
        AttackId::A3 => "Alice@a.org",
        AttackId::A12 => "admin@paypal.com",
        AttackId::A13 => "admin@gmail.com",
        _ => "Alice@a.com",
    };
    Bindings::new(spoof, "Oscar@attack.com", "Bob@b.com")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GenOptions {
    pub variant: u32,
    /// Feeds the Message-ID; equal seeds give byte-identical output.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("{id} has no variant {variant} (it has {available})")]
    UnknownVariant { id: AttackId, variant: u32, available: u32 },
    #[error("unsupported knob: {0}")]
    UnsupportedKnob(String),
    #[error("not an address: {0:?}")]
    InvalidAddress(String),
}

fn check_address(a: &str) -> Result<(), GenError> {
    let ok = a.matches('@').count() == 1
        && !address_local(a).is_empty()
        && address_domain(a).is_some_and(|d| d.contains('.') && !d.starts_with('.') && !d.ends_with('.'));
    if ok {
        Ok(())
    } else {
        Err(GenError::InvalidAddress(a.to_owned()))
    }
}

/// Fields every generated message carries, with `from` lines in place of
/// the single benign `From`.
pub(super) fn build_message(b: &Bindings, from: &[(&[u8], Vec<u8>)], rcpt: &str, opts: &GenOptions) -> RawMessage {
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut block = HeaderBlock::new();
    for (name, value) in from {
        block.push_raw(name, value);
    }
    block
        .push("To", &format!("<{rcpt}>"))
        .push("Subject", "Quarterly summary")
        .push("Date", "Mon, 05 Oct 2020 09:30:00 +0000")
        .push("Message-ID", &format!("<{:016x}@{}>", rng.gen::<u64>(), b.attacker_domain()));
    let mut msg = RawMessage::new(b.attacker_domain(), b.attacker_ip, vec![rcpt.to_owned()]);
    msg.mail_from = Some(b.attacker.clone());
    msg.header_block = block.into_bytes();
    msg.body = BODY.as_bytes().to_vec();
    msg
}

pub(super) fn from_line(value: impl Into<Vec<u8>>) -> (&'static [u8], Vec<u8>) {
    let mut v = b" ".to_vec();
    v.extend(value.into());
    (b"From", v)
}

/// The benign message the attacks are measured against: the attacker
/// writing honestly as themself.
pub fn baseline(b: &Bindings, opts: &GenOptions) -> RawMessage {
    build_message(b, &[from_line(format!("<{}>", b.attacker))], &b.target, opts)
}

/// Replace the first letter that has a Cyrillic look-alike.
pub fn homograph_domain(domain: &str, table: &ConfusableTable) -> Option<String> {
    let (first, rest) = domain.split_once('.').unwrap_or((domain, ""));
    let mut chars: Vec<char> = first.chars().collect();
    let (i, sub) = chars.iter().enumerate().find_map(|(i, &c)| {
        table.lookalikes(c).into_iter().find(|l| l.script() == Script::Cyrillic).map(|l| (i, l))
    })?;
    chars[i] = sub;
    let unicode: String = chars.into_iter().collect();
    let full = if rest.is_empty() { unicode } else { format!("{unicode}.{rest}") };
    Some(domain_to_ascii(&full))
}

/// `\u{202E}` + the reversed `@domain` + `\u{202D}` + the local part.
/// Rendered bidi-aware it reads as the original address.
pub fn rtl_payload(addr: &str) -> String {
    let domain = address_domain(addr).unwrap_or_default();
    let reversed: String = format!("@{domain}").chars().rev().collect();
    format!("\u{202E}{reversed}\u{202D}{}", address_local(addr))
}

/// Characters A13 splices into the domain, by variant.
const A13_INSERTS: [char; 5] = ['@', ':', ';', '"', '\u{FF10}'];

pub fn generate(id: AttackId, b: &Bindings, opts: &GenOptions) -> Result<AttackCase, GenError> {
    for a in [&b.spoof, &b.attacker, &b.target] {
        check_address(a)?;
    }
    if opts.variant >= id.variants() {
        return Err(GenError::UnknownVariant { id, variant: opts.variant, available: id.variants() });
    }
    let v = opts.variant;
    let spoof = b.spoof.as_str();
    let sd = b.spoof_domain();
    let mut forward = None;
    let mut spoof_identity = spoof.to_owned();
    let mut attacker_identity = b.attacker.clone();
    let angle_spoof = format!("<{spoof}>");

    let (messages, note) = match id {
        AttackId::A1 | AttackId::A2 => {
            // The attacker's own account on the spoofed domain's MTA.
            let account = b.attacker_at(sd);
            attacker_identity = account.clone();
            let from = if id == AttackId::A2 && v == 1 {
                format!("<{spoof}>, <{account}>")
            } else {
                angle_spoof.clone()
            };
            let mut m = build_message(b, &[from_line(from.clone())], &b.target, opts);
            m.auth_username = Some(account.clone());
            m.mail_from = Some(if id == AttackId::A1 { spoof.to_owned() } else { account.clone() });
            let note = match id {
                AttackId::A1 => format!("auth {account}, MAIL FROM {spoof}"),
                _ => format!("auth and MAIL FROM {account}, From {from}"),
            };
            (vec![m], note)
        }
        AttackId::A3 => {
            let mut m = build_message(b, &[from_line(angle_spoof.clone())], &b.target, opts);
            m.mail_from = None;
            m.helo_domain = sd.to_owned();
            (vec![m], format!("MAIL FROM:<>, HELO {sd}"))
        }
        AttackId::A4 => {
            let name: &[u8] = match v {
                0 => b"From",
                1 => b"From ",
                2 => b"FROM",
                _ => b"\x0bFrom",
            };
            let first = from_line(format!("<{}>", b.attacker));
            let second = (name, format!(" {angle_spoof}").into_bytes());
            let m = build_message(b, &[first, second], &b.target, opts);
            let shown = String::from_utf8_lossy(name).escape_debug().to_string();
            (vec![m], format!("From: <{}> then {shown}: {angle_spoof}", b.attacker))
        }
        AttackId::A5 => {
            let list = match v {
                0 => format!("{angle_spoof}, <{}>", b.attacker),
                1 => format!("{angle_spoof}, <>, <{}>", b.attacker),
                2 => format!("[{spoof}], <{}>", b.attacker),
                _ => format!("{angle_spoof}, (note) <{}>", b.attacker),
            };
            (vec![build_message(b, &[from_line(list.clone())], &b.target, opts)], format!("From: {list}"))
        }
        AttackId::A6 => {
            let ad = b.attacker_domain();
            let (local, _) = spoof.split_once('@').unwrap_or((spoof, ""));
            let value = match v {
                0 => format!("<@{ad},@{sd}:{spoof}>"),
                1 => format!("{angle_spoof}, ,<{}>", b.attacker),
                2 => format!("<{local}({})@{sd}({ad})>", address_local(&b.attacker)),
                3 => format!("<{spoof}\0@{ad}>"),
                4 => format!("<{spoof}\u{FFFF}@{ad}>"),
                _ => format!("<{spoof};@{ad}>"),
            };
            let note = format!("From: {}", value.escape_debug());
            (vec![build_message(b, &[from_line(value)], &b.target, opts)], note)
        }
        AttackId::A7 => {
            let value = if v == 0 {
                encode_word_b64(spoof)
            } else {
                format!("{}{}@{}", encode_word_b64(spoof), encode_word_b64("\u{FFFF}"), b.attacker_domain())
            };
            let note = format!("From: {value}");
            (vec![build_message(b, &[from_line(value)], &b.target, opts)], note)
        }
        AttackId::A8 => {
            let sub = format!("mail.{sd}");
            let addr = format!("{}@{sub}", address_local(spoof));
            spoof_identity = addr.clone();
            let mut m = build_message(b, &[from_line(format!("<{addr}>"))], &b.target, opts);
            m.mail_from = Some(addr.clone());
            (vec![m], format!("MAIL FROM and From {addr}"))
        }
        AttackId::A9 | AttackId::A10 => {
            // The attacker's account at the spoofed domain's provider
            // forwards what it receives.
            let account = b.attacker_at(sd);
            let target = if id == AttackId::A9 { b.target.clone() } else { b.attacker.clone() };
            forward = Some(ForwardPlan {
                forwarder_domain: sd.to_owned(),
                account: account.clone(),
                target: target.clone(),
                target_verified: id == AttackId::A10,
            });
            let step1 = build_message(b, &[from_line(angle_spoof.clone())], &account, opts);
            if id == AttackId::A9 {
                (vec![step1], format!("via {account}, forwarding to unconfirmed {target}"))
            } else {
                let mut resend = RawMessage::new(b.attacker_domain(), b.attacker_ip, vec![b.target.clone()]);
                resend.mail_from = Some(b.attacker.clone());
                (vec![step1, resend], format!("signed by {sd} via {account}, re-sent to {}", b.target))
            }
        }
        AttackId::A11 => {
            // The victim forwards from an account elsewhere.
            let td = address_domain(&b.target).unwrap_or_default();
            let fwd = "fwd.net";
            let account = format!("{}@{fwd}", address_local(&b.target));
            if td == fwd {
                return Err(GenError::UnsupportedKnob("target already on the forwarding domain".into()));
            }
            forward = Some(ForwardPlan {
                forwarder_domain: fwd.into(),
                account: account.clone(),
                target: b.target.clone(),
                target_verified: true,
            });
            let m = build_message(b, &[from_line(angle_spoof.clone())], &account, opts);
            (vec![m], format!("through {account}, sealed with a claimed pass"))
        }
        AttackId::A12 => {
            let fake = homograph_domain(sd, &ConfusableTable::default())
                .ok_or_else(|| GenError::UnsupportedKnob(format!("no confusable letter in {sd}")))?;
            let addr = format!("{}@{fake}", address_local(spoof));
            attacker_identity = b.attacker_at(&fake);
            let mut m = build_message(b, &[from_line(format!("<{addr}>"))], &b.target, opts);
            m.mail_from = Some(attacker_identity.clone());
            m.helo_domain = fake.clone();
            (vec![m], format!("From {addr}"))
        }
        AttackId::A13 => {
            let (label, rest) = sd.split_once('.').unwrap_or((sd, ""));
            if label.chars().count() < 2 {
                return Err(GenError::UnsupportedKnob(format!("first label of {sd} is too short to split")));
            }
            let cut = label.char_indices().nth(2).map_or(label.len(), |(i, _)| i);
            let (head, tail) = label.split_at(cut);
            let c = A13_INSERTS[v as usize];
            let tail_domain = if rest.is_empty() { tail.to_owned() } else { format!("{tail}.{rest}") };
            let addr = format!("{}@{head}{c}{tail_domain}", address_local(spoof));
            if c == '@' {
                attacker_identity = b.attacker_at(&tail_domain);
            }
            let mut m = build_message(b, &[from_line(format!("<{addr}>"))], &b.target, opts);
            m.mail_from = Some(attacker_identity.clone());
            m.helo_domain = address_domain(&attacker_identity).unwrap_or_default().to_owned();
            let note = format!("From <{}>", addr.escape_debug());
            (vec![m], note)
        }
        AttackId::A14 => {
            let payload = rtl_payload(spoof);
            let value = if v == 0 { payload.clone() } else { encode_word_b64(&payload) };
            let note = format!("From: {}", value.escape_unicode_controls());
            (vec![build_message(b, &[from_line(value)], &b.target, opts)], note)
        }
    };

    let mut case = AttackCase {
        ids: vec![id],
        model: vec![id.model()],
        variant: v,
        messages,
        forward,
        spoof_identity,
        attacker_identity,
        note,
        expectations: BTreeMap::new(),
    };
    if *b == default_bindings(id) && v == witness(id).1 {
        case.expectations = expectations(id);
    }
    Ok(case)
}

trait EscapeControls {
    fn escape_unicode_controls(&self) -> String;
}

impl EscapeControls for String {
    fn escape_unicode_controls(&self) -> String {
        self.chars()
            .map(|c| if c.is_ascii() { c.to_string() } else { format!("\\u{{{:04X}}}", c as u32) })
            .collect()
    }
}

/// Every variant of every id with default bindings.
pub fn generate_all(seed: u64) -> Vec<AttackCase> {
    AttackId::ALL
        .into_iter()
        .flat_map(|id| {
            (0..id.variants()).map(move |variant| {
                generate(id, &default_bindings(id), &GenOptions { variant, seed }).expect("default bindings are valid")
            })
        })
        .collect()
}

/// Scenario and variant under which each id is known to succeed.
pub fn witness(id: AttackId) -> (&'static str, u32) {
    match id {
        AttackId::A1 | AttackId::A2 => ("zimbra-like", 0),
        AttackId::A3 | AttackId::A14 => ("yahoo-like", 0),
        AttackId::A4 => ("icloud-like", 0),
        AttackId::A5 => ("sohu-like", 0),
        AttackId::A6 => ("yandex-like", 3),
        AttackId::A7 => ("outlook-like", 0),
        AttackId::A8 | AttackId::A9 | AttackId::A13 => ("netease-like", 0),
        AttackId::A10 => ("aliyun-like", 0),
        AttackId::A11 => ("office365-like", 0),
        AttackId::A12 => ("gmail-like", 0),
    }
}

#[allow(clippy::too_many_arguments)]
fn outcome(
    sending_accepted: bool,
    spf: Option<SpfResult>,
    dkim: Option<DkimResult>,
    dmarc: Option<DmarcResult>,
    displayed: Option<&str>,
    success: bool,
) -> ExpectedOutcome {
    ExpectedOutcome {
        sending_accepted,
        spf,
        dkim,
        dmarc,
        displayed_address: displayed.map(String::from),
        sic_alert: false,
        success,
    }
}

/// Hand-walked outcomes of the witness variant under its witness scenario
/// and under strict-rfc. `dmarc` is the result the final receiver acted on.
fn expectations(id: AttackId) -> BTreeMap<String, ExpectedOutcome> {
    use DkimResult as K;
    use DmarcResult as D;
    use SpfResult as S;
    let (witness, _) = witness(id);
    let (win, strict) = match id {
        AttackId::A1 | AttackId::A2 => (
            outcome(true, Some(S::Pass), Some(K::Pass), Some(D::Pass), Some("Alice@a.com"), true),
            outcome(false, None, None, None, None, false),
        ),
        AttackId::A3 => (
            outcome(true, Some(S::None), Some(K::None), Some(D::None), Some("Alice@a.org"), true),
            outcome(true, Some(S::Fail), Some(K::None), Some(D::None), None, false),
        ),
        AttackId::A4 | AttackId::A5 | AttackId::A6 => (
            outcome(true, Some(S::Pass), Some(K::None), Some(D::Pass), Some("Alice@a.com"), true),
            outcome(true, Some(S::Pass), Some(K::None), Some(D::None), None, false),
        ),
        AttackId::A7 => (
            outcome(true, Some(S::Pass), Some(K::None), Some(D::None), Some("Alice@a.com"), true),
            outcome(true, Some(S::Pass), Some(K::None), Some(D::Fail), None, false),
        ),
        AttackId::A8 => (
            outcome(true, Some(S::None), Some(K::None), Some(D::None), Some("Alice@mail.a.com"), true),
            outcome(true, Some(S::None), Some(K::None), Some(D::Fail), None, false),
        ),
        AttackId::A9 => (
            outcome(true, Some(S::Pass), Some(K::None), Some(D::Pass), Some("Alice@a.com"), true),
            outcome(true, None, None, None, None, false),
        ),
        AttackId::A10 | AttackId::A11 => (
            outcome(true, Some(S::Pass), Some(K::Pass), Some(D::Pass), Some("Alice@a.com"), true),
            outcome(true, None, None, None, None, false),
        ),
        AttackId::A12 => (
            outcome(true, Some(S::Pass), Some(K::None), Some(D::Pass), Some("admin@\u{440}aypal.com"), true),
            outcome(true, Some(S::Pass), Some(K::None), Some(D::Pass), Some("admin@xn--aypal-uye.com"), false),
        ),
        AttackId::A13 => (
            outcome(true, Some(S::Pass), Some(K::None), Some(D::Pass), Some("admin@gmail.com"), true),
            outcome(true, Some(S::Pass), Some(K::None), Some(D::None), None, false),
        ),
        AttackId::A14 => (
            outcome(true, Some(S::Pass), Some(K::None), Some(D::None), Some("Alice@a.com"), true),
            outcome(true, Some(S::Pass), Some(K::None), Some(D::None), None, false),
        ),
    };
    BTreeMap::from([(witness.to_owned(), win), ("strict-rfc".to_owned(), strict)])
}
