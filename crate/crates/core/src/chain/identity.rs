//! Which `From` identity a profile verifies, and which one it shows.
//!
//! The two extractions run over the same bytes with different settings.
//! Every attack on the receiving and rendering stages is a way of making
//! them disagree.

use serde::{Deserialize, Serialize};

use super::confusable::{domain_to_ascii, domain_to_unicode};
use crate::header::{
    decode_encoded_words_detailed, header_text, is_invisible, parse_address_list_with, AddressOptions, HeaderField,
    Mailbox, ParsedHeaders, RawMessage, Violation,
};
use crate::profile::{DisplayFrom, MultipleFrom, NameMatching, ParseMode, QuirkProfile};

pub const FROM: &str = "From";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: String,
    pub input: String,
    pub output: String,
}

impl TraceStep {
    fn new(step: &str, input: impl Into<String>, output: impl Into<String>) -> Self {
        Self { step: step.into(), input: input.into(), output: output.into() }
    }
}

fn matches(field: &HeaderField, mode: NameMatching, profile: &QuirkProfile) -> bool {
    match mode {
        NameMatching::Exact => field.is(FROM),
        NameMatching::Loose => field.loosely_is(FROM, profile),
    }
}

/// `From` fields as a profile recognises them.
pub fn from_fields<'a>(headers: &'a ParsedHeaders, mode: NameMatching, profile: &QuirkProfile) -> Vec<&'a HeaderField> {
    headers.fields.iter().filter(|f| matches(f, mode, profile)).collect()
}

/// Unfolded field value, decoded when asked. Returns the bytes to parse
/// and their text form.
fn field_value(field: &HeaderField, decode: bool) -> (Vec<u8>, String, bool) {
    let raw = field.unfolded();
    let (text, latin1) = header_text(&raw);
    if decode {
        let d = decode_encoded_words_detailed(&text);
        if d.decoded_count > 0 {
            return (d.text.clone().into_bytes(), d.text, false);
        }
    }
    (raw, text, latin1)
}

fn pick<T>(items: &[T], policy: MultipleFrom) -> Option<&T> {
    match policy {
        MultipleFrom::UseLast => items.last(),
        _ => items.first(),
    }
}

/// The identity handed to DMARC.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthIdentity {
    pub from_fields: usize,
    pub mailboxes: usize,
    pub mailbox: Option<Mailbox>,
    /// Set when the profile refuses the message outright.
    pub rejected: Option<String>,
    pub violations: Vec<Violation>,
}

impl AuthIdentity {
    fn reject(mut self, why: impl Into<String>) -> Self {
        self.rejected = Some(why.into());
        self
    }

    pub fn address(&self) -> Option<String> {
        self.mailbox.as_ref().map(Mailbox::address)
    }

    /// Lowercased domain, `None` when nothing usable was extracted.
    pub fn domain(&self) -> Option<String> {
        self.mailbox
            .as_ref()
            .map(|m| m.domain.to_ascii_lowercase())
            .filter(|d| !d.is_empty())
    }
}

pub fn extract_auth_identity(msg: &RawMessage, profile: &QuirkProfile) -> AuthIdentity {
    let mut id = AuthIdentity { from_fields: 0, mailboxes: 0, mailbox: None, rejected: None, violations: Vec::new() };
    let strict = profile.parse_mode == ParseMode::Strict;
    let headers = match msg.headers(profile.parse_mode) {
        Ok(h) => h,
        Err(e) => return id.reject(e.to_string()),
    };
    id.violations.extend(headers.violations.iter().cloned());

    let fields = from_fields(&headers, profile.auth_name_matching, profile);
    id.from_fields = fields.len();
    if fields.is_empty() {
        id.violations.push(Violation::MissingFrom);
        return if strict { id.reject("no From field") } else { id };
    }
    if fields.len() > 1 && profile.multiple_from == MultipleFrom::Reject {
        return id.reject("multiple From fields");
    }
    let field = *pick(&fields, profile.multiple_from).expect("non-empty");

    let (bytes, _, _) = field_value(field, profile.decode_encoded_word_for_auth);
    let list = match parse_address_list_with(&bytes, profile, &AddressOptions::for_auth(profile)) {
        Ok(l) => l,
        Err(e) => return if strict { id.reject(e.to_string()) } else { id },
    };
    id.violations.extend(list.violations.iter().cloned());
    id.mailboxes = list.mailboxes.len();
    if list.mailboxes.len() > 1 {
        id.violations.push(Violation::MultipleMailboxes);
        if profile.multiple_from == MultipleFrom::Reject {
            return id.reject("multiple mailboxes in From");
        }
    }
    id.mailbox = pick(&list.mailboxes, profile.multiple_from).cloned();
    id
}

/// One mailbox as shown to the reader.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShownMailbox {
    pub shown: String,
    pub display_name: Option<String>,
    /// Domain of the same mailbox parsed without display-side truncation,
    /// in ASCII form. This is what the sender inconsistency check compares.
    pub real_domain: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplayIdentity {
    pub from_fields: usize,
    pub mailboxes: Vec<ShownMailbox>,
    /// Decoded text of the selected field values, before any mangling.
    pub logical_text: String,
    pub trace: Vec<TraceStep>,
}

impl DisplayIdentity {
    pub fn displayed_address(&self) -> String {
        self.mailboxes.iter().map(|m| m.shown.as_str()).collect::<Vec<_>>().join(", ")
    }

    pub fn displayed_name(&self) -> Option<String> {
        self.mailboxes.first().and_then(|m| m.display_name.clone())
    }
}

fn select_display<T: Clone>(items: &[T], how: DisplayFrom) -> Vec<T> {
    match how {
        DisplayFrom::First => items.first().cloned().into_iter().collect(),
        DisplayFrom::Last => items.last().cloned().into_iter().collect(),
        DisplayFrom::All => items.to_vec(),
    }
}

/// Drop the characters a careless renderer discards, keeping the first `@`.
pub fn apply_display_drop(addr: &str, profile: &QuirkProfile, latin1: bool) -> String {
    let mut seen_at = false;
    addr.chars()
        .filter(|&c| {
            if c == '@' && !seen_at {
                seen_at = true;
                return true;
            }
            let invisible = c == '\0' || is_invisible(c, profile, latin1);
            !(profile.display_drop.contains(&c) || (profile.display_drop_invisible && invisible))
        })
        .collect()
}

/// Reorder bidirectional text into what a reader sees, then remove the
/// formatting characters themselves.
pub fn visual_order(text: &str) -> String {
    if !text.chars().any(is_bidi_control) && text.is_ascii() {
        return text.to_owned();
    }
    let info = unicode_bidi::BidiInfo::new(text, Some(unicode_bidi::Level::ltr()));
    let mut out = String::new();
    for para in &info.paragraphs {
        out.push_str(&info.reorder_line(para, para.range.clone()));
    }
    out.chars().filter(|c| !is_bidi_control(*c)).collect()
}

pub fn is_bidi_control(c: char) -> bool {
    matches!(c, '\u{200E}' | '\u{200F}' | '\u{202A}'..='\u{202E}' | '\u{2066}'..='\u{2069}')
}

fn shown_form(mb: &Mailbox, profile: &QuirkProfile, latin1: bool, trace: &mut Vec<TraceStep>) -> String {
    let addr = mb.address();
    let mut shown = apply_display_drop(&addr, profile, latin1);
    if shown != addr {
        trace.push(TraceStep::new("drop", &addr, &shown));
    }
    if profile.display_unicode_idn {
        if let Some(i) = shown.rfind('@') {
            let uni = domain_to_unicode(&shown[i + 1..]);
            let next = format!("{}@{uni}", &shown[..i]);
            if next != shown {
                trace.push(TraceStep::new("idn", &shown, &next));
                shown = next;
            }
        }
    }
    let visual = visual_order(&shown);
    if visual != shown {
        trace.push(TraceStep::new("bidi", &shown, &visual));
    }
    visual
}

pub fn extract_display_identity(msg: &RawMessage, profile: &QuirkProfile) -> DisplayIdentity {
    let headers = msg.lenient_headers();
    let fields = from_fields(&headers, profile.display_name_matching, profile);
    let mut out = DisplayIdentity { from_fields: fields.len(), mailboxes: Vec::new(), logical_text: String::new(), trace: Vec::new() };
    let mut logical = Vec::new();

    let display_opts = AddressOptions { mode: ParseMode::Lenient, ..AddressOptions::for_display(profile) };
    let real_opts = AddressOptions { mode: ParseMode::Lenient, truncation: Default::default() };

    for field in select_display(&fields, profile.display_from) {
        let (bytes, text, latin1) = field_value(field, profile.decode_encoded_word_for_display);
        let raw_text = header_text(&field.unfolded()).0;
        if text != raw_text {
            out.trace.push(TraceStep::new("decode", raw_text.trim(), text.trim()));
        }
        logical.push(text.trim().to_owned());

        let real = parse_address_list_with(&bytes, profile, &real_opts).ok();
        let list = match parse_address_list_with(&bytes, profile, &display_opts) {
            Ok(l) => l,
            Err(e) => {
                out.trace.push(TraceStep::new("parse", text.trim(), format!("unparsed: {e}")));
                out.mailboxes.push(ShownMailbox { shown: visual_order(text.trim()), display_name: None, real_domain: None });
                continue;
            }
        };
        let indexed: Vec<(usize, &Mailbox)> = list.mailboxes.iter().enumerate().collect();
        for (i, mb) in select_display(&indexed, profile.display_from) {
            if let Some(t) = mb.truncated_at {
                out.trace.push(TraceStep::new("truncate", text.trim(), format!("{} ({:?} at {})", mb.address(), t.cause, t.offset)));
            }
            let real_domain = real
                .as_ref()
                .and_then(|r| r.mailboxes.get(i))
                .map(|m| m.domain.as_str())
                .filter(|d| !d.is_empty())
                .map(domain_to_ascii);
            let shown = shown_form(mb, profile, latin1, &mut out.trace);
            out.mailboxes.push(ShownMailbox { shown, display_name: mb.display_name.clone(), real_domain });
        }
    }
    out.logical_text = logical.join(", ");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::header::HeaderBlock;
    use crate::profile::{profile_by_name, strict_rfc};
    use std::net::{IpAddr, Ipv4Addr};

    fn msg(fields: &[(&[u8], &[u8])]) -> RawMessage {
        let mut m = RawMessage::new("h", IpAddr::V4(Ipv4Addr::LOCALHOST), vec!["b@b.com".into()]);
        let mut h = HeaderBlock::new();
        for (n, v) in fields {
            h.push_raw(n, v);
        }
        m.header_block = h.into_bytes();
        m
    }

    #[test]
    fn bidi_override_reads_as_plain_address() {
        assert_eq!(visual_order("\u{202E}moc.a@\u{202D}alice"), "alice@a.com");
        assert_eq!(visual_order("alice@a.com"), "alice@a.com");
    }

    #[test]
    fn display_drop_keeps_first_at() {
        let p = profile_by_name("netease-like").unwrap();
        assert_eq!(apply_display_drop("admin@gm@ail.com", &p, false), "admin@gmail.com");
        assert_eq!(apply_display_drop("admin@gm\u{FF10}ail.com", &p, false), "admin@gmail.com");
    }

    #[test]
    fn verify_first_show_last() {
        let m = msg(&[(b"From", b" <Oscar@attack.com>"), (b"From", b" <Alice@a.com>")]);
        let p = profile_by_name("icloud-like").unwrap();
        assert_eq!(extract_auth_identity(&m, &p).domain().as_deref(), Some("attack.com"));
        assert_eq!(extract_display_identity(&m, &p).displayed_address(), "Alice@a.com");

        let strict = extract_auth_identity(&m, &strict_rfc());
        assert!(strict.rejected.is_some());
    }

    #[test]
    fn encoded_from_without_decoding_has_no_domain() {
        let m = msg(&[(b"From", b" =?utf-8?b?QWxpY2VAYS5jb20=?=")]);
        let p = profile_by_name("outlook-like").unwrap();
        let id = extract_auth_identity(&m, &p);
        assert_eq!(id.domain(), None);
        assert!(id.rejected.is_none());
        let d = extract_display_identity(&m, &p);
        assert_eq!(d.displayed_address(), "Alice@a.com");
        assert_eq!(d.trace[0].step, "decode");
    }

    #[test]
    fn real_domain_ignores_display_truncation() {
        let m = msg(&[(b"From", b" Alice@a.com\x00@attack.com")]);
        let p = profile_by_name("yandex-like").unwrap();
        let d = extract_display_identity(&m, &p);
        assert_eq!(d.displayed_address(), "Alice@a.com");
        assert_eq!(d.mailboxes[0].real_domain.as_deref(), Some("attack.com"));
        assert_eq!(extract_auth_identity(&m, &p).domain().as_deref(), Some("attack.com"));
    }
}
