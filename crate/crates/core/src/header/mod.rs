//! Message model: SMTP envelope plus an RFC 5322 header block.
//!
//! Parsing comes in a strict flavour that reports every structural problem
//! and a lenient flavour that keeps going and records what it tolerated. The
//! attacks in this crate live in the space between the two.

mod address;
mod encoded_word;
mod fields;
mod truncate;

use std::net::IpAddr;
use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use address::{parse_address_list, parse_address_list_with, AddressError, AddressList, AddressOptions};
pub use encoded_word::{decode_encoded_words, decode_encoded_words_detailed, encode_word_b64, DecodedText};
pub use fields::{
    parse_header_block, parse_header_block_with, parse_message, serialize_message, split_message,
    unfold, HeaderError, ParsedHeaders,
};
pub(crate) use fields::serialize_fields;
pub use truncate::{apply_truncation, apply_truncation_in, is_invisible, TruncationCause};

use crate::profile::{ParseMode, QuirkProfile};

/// An email as it crosses one SMTP hop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawMessage {
    pub helo_domain: String,
    /// `None` is the null reverse-path, sent as `MAIL FROM:<>`.
    pub mail_from: Option<String>,
    pub rcpt_to: Vec<String>,
    pub auth_username: Option<String>,
    #[serde(with = "bytes_as_string")]
    pub header_block: Vec<u8>,
    #[serde(with = "bytes_as_string")]
    pub body: Vec<u8>,
    pub client_ip: IpAddr,
}

impl RawMessage {
    pub fn new(helo_domain: impl Into<String>, client_ip: IpAddr, rcpt_to: Vec<String>) -> Self {
        Self {
            helo_domain: helo_domain.into(),
            mail_from: None,
            rcpt_to,
            auth_username: None,
            header_block: Vec::new(),
            body: Vec::new(),
            client_ip,
        }
    }

    /// Parse the header block. Lenient parsing never fails.
    pub fn headers(&self, mode: ParseMode) -> Result<ParsedHeaders, HeaderError> {
        parse_header_block_with(&self.header_block, mode)
    }

    pub fn lenient_headers(&self) -> ParsedHeaders {
        parse_header_block_with(&self.header_block, ParseMode::Lenient)
            .expect("lenient header parsing is infallible")
    }

    /// Insert a field above every existing one, the way trace and
    /// signature fields are added by relaying MTAs.
    pub fn prepend_field(&mut self, name: &str, value: &[u8]) {
        let mut block = Vec::with_capacity(self.header_block.len() + name.len() + value.len() + 4);
        block.extend_from_slice(name.as_bytes());
        block.push(b':');
        block.extend_from_slice(value);
        block.extend_from_slice(b"\r\n");
        block.extend_from_slice(&self.header_block);
        self.header_block = block;
    }

    pub fn push_field(&mut self, name: &str, value: &[u8]) {
        let mut b = HeaderBlock::from_bytes(std::mem::take(&mut self.header_block));
        b.push_raw(name.as_bytes(), value);
        self.header_block = b.into_bytes();
    }

    /// Domain of the envelope sender, or the HELO name for a null sender.
    pub fn envelope_domain(&self) -> String {
        match self.mail_from.as_deref().and_then(address_domain) {
            Some(d) => d.to_ascii_lowercase(),
            None => self.helo_domain.to_ascii_lowercase(),
        }
    }

    pub fn to_eml(&self) -> Vec<u8> {
        serialize_message(self)
    }
}

/// Accumulates header fields as raw bytes, CRLF-terminated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HeaderBlock(Vec<u8>);

impl HeaderBlock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    /// `Name: value`
    pub fn push(&mut self, name: &str, value: &str) -> &mut Self {
        self.0.extend_from_slice(name.as_bytes());
        self.0.extend_from_slice(b": ");
        self.0.extend_from_slice(value.as_bytes());
        self.0.extend_from_slice(b"\r\n");
        self
    }

    /// Name and value are written verbatim around the colon.
    pub fn push_raw(&mut self, name: &[u8], value: &[u8]) -> &mut Self {
        self.0.extend_from_slice(name);
        self.0.push(b':');
        self.0.extend_from_slice(value);
        self.0.extend_from_slice(b"\r\n");
        self
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

/// One field of a header block, in source order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderField {
    pub name: String,
    #[serde(with = "bytes_as_string")]
    pub raw_value: Vec<u8>,
    pub ordinal: usize,
}

impl HeaderField {
    /// Case-insensitive comparison of the untouched field name.
    pub fn is(&self, name: &str) -> bool {
        self.name.eq_ignore_ascii_case(name)
    }

    /// Comparison after trimming whitespace and removing invisible
    /// characters from the name, the way tolerant readers treat `From :`
    /// or a control character glued to `From`.
    pub fn loosely_is(&self, name: &str, profile: &QuirkProfile) -> bool {
        let cleaned: String = self
            .name
            .chars()
            .filter(|c| !c.is_whitespace() && !is_invisible(*c, profile, false))
            .collect();
        cleaned.eq_ignore_ascii_case(name)
    }

    /// The value with folding removed.
    pub fn unfolded(&self) -> Vec<u8> {
        unfold(&self.raw_value)
    }
}

/// A structural problem found while parsing. Strict consumers reject on
/// most of these; lenient ones just record them. `EmbeddedComment` is
/// legal syntax and only ever reported.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Violation {
    MultipleFrom,
    MissingFrom,
    IllegalFieldName { ordinal: usize },
    MalformedFold { line: usize },
    MissingColon { line: usize },
    MultipleMailboxes,
    NullMember,
    Route,
    BracketedAddress,
    EmbeddedComment,
    UnclosedAngle,
    MissingAt,
    InvalidLocalPart,
    InvalidDomain,
    Truncated { cause: TruncationCause },
    EncodedWordDecodeFailure,
}

/// Why a mailbox text was cut short.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub offset: usize,
    pub cause: TruncationCause,
}

/// One parsed address.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mailbox {
    pub display_name: Option<String>,
    pub local_part: String,
    pub domain: String,
    pub route: Vec<String>,
    pub comments: Vec<String>,
    pub raw_span: Range<usize>,
    pub truncated_at: Option<Truncation>,
}

impl Mailbox {
    /// `local_part@domain`, never including route or comments.
    pub fn address(&self) -> String {
        format!("{}@{}", self.local_part, self.domain)
    }
}

/// Domain part of a plain `local@domain` string (rightmost `@`).
pub fn address_domain(addr: &str) -> Option<&str> {
    let addr = addr.trim().trim_start_matches('<').trim_end_matches('>');
    match addr.rfind('@') {
        Some(i) if i + 1 < addr.len() => Some(&addr[i + 1..]),
        _ => None,
    }
}

/// Local part of a plain `local@domain` string.
pub fn address_local(addr: &str) -> &str {
    let addr = addr.trim().trim_start_matches('<').trim_end_matches('>');
    match addr.rfind('@') {
        Some(i) => &addr[..i],
        None => addr,
    }
}

/// Addresses compare with ASCII case folding throughout. Mail providers do
/// not distinguish `Alice@a.com` from `alice@a.com`.
pub fn same_address(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

/// Lossless view of header bytes as text: UTF-8 when valid, otherwise one
/// char per byte (Latin-1). The flag reports which one was used.
pub fn header_text(bytes: &[u8]) -> (String, bool) {
    match std::str::from_utf8(bytes) {
        Ok(s) => (s.to_owned(), false),
        Err(_) => (bytes.iter().map(|&b| b as char).collect(), true),
    }
}

/// Serializes byte strings as text when they are UTF-8, and as an array of
/// byte values otherwise, so manifests stay readable without losing data.
pub(crate) mod bytes_as_string {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Text(String),
        Bytes(Vec<u8>),
    }

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        match std::str::from_utf8(bytes) {
            Ok(t) => Repr::Text(t.to_owned()).serialize(s),
            Err(_) => Repr::Bytes(bytes.to_vec()).serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        match Repr::deserialize(d).map_err(D::Error::custom)? {
            Repr::Text(t) => Ok(t.into_bytes()),
            Repr::Bytes(b) => Ok(b),
        }
    }
}
