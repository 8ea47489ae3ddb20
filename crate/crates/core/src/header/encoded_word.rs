//! `=?charset?encoding?text?=` decoding.
//!
//! Decoding is deliberately tolerant: encoded-words are recognised anywhere
//! in the text, including glued to surrounding characters, because that is
//! what the display side of many clients does. Anything malformed is left
//! exactly as written.

use base64::engine::general_purpose::{STANDARD, STANDARD_NO_PAD};
use base64::Engine;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecodedText {
    pub text: String,
    /// Encoded-words that looked well-formed but failed to decode.
    pub failures: Vec<String>,
    pub decoded_count: usize,
}

pub fn decode_encoded_words(raw: &str) -> String {
    decode_encoded_words_detailed(raw).text
}

pub fn decode_encoded_words_detailed(raw: &str) -> DecodedText {
    let mut out = DecodedText::default();
    let mut rest = raw;
    let mut last_was_word = false;

    while !rest.is_empty() {
        let Some(start) = rest.find("=?") else {
            out.text.push_str(rest);
            break;
        };
        let before = &rest[..start];
        match parse_word(&rest[start..]) {
            Some((word, len)) => {
                // whitespace between two adjacent encoded-words is dropped
                let separator_only = last_was_word
                    && !before.is_empty()
                    && before.chars().all(|c| matches!(c, ' ' | '\t' | '\r' | '\n'));
                if !separator_only {
                    out.text.push_str(before);
                }
                match decode_word(&word) {
                    Some(t) => {
                        out.text.push_str(&t);
                        out.decoded_count += 1;
                        last_was_word = true;
                    }
                    None => {
                        out.failures.push(rest[start..start + len].to_owned());
                        out.text.push_str(&rest[start..start + len]);
                        last_was_word = false;
                    }
                }
                rest = &rest[start + len..];
            }
            None => {
                out.text.push_str(&rest[..start + 2]);
                rest = &rest[start + 2..];
                last_was_word = false;
            }
        }
    }
    out
}

struct Word<'a> {
    charset: &'a str,
    encoding: char,
    payload: &'a str,
}

/// Recognise one encoded-word at the start of `s`, returning it and its
/// length in bytes.
fn parse_word(s: &str) -> Option<(Word<'_>, usize)> {
    let body = s.strip_prefix("=?")?;
    let q1 = body.find('?')?;
    let charset = &body[..q1];
    if charset.is_empty() || charset.chars().any(|c| c.is_whitespace() || c == '=') {
        return None;
    }
    let after = &body[q1 + 1..];
    let mut chars = after.chars();
    let encoding = chars.next()?.to_ascii_lowercase();
    if chars.next()? != '?' || !(encoding == 'b' || encoding == 'q') {
        return None;
    }
    let text_start = &after[2..];
    let end = text_start.find("?=")?;
    let payload = &text_start[..end];
    if payload.chars().any(|c| c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        return None;
    }
    let len = 2 + q1 + 1 + 2 + end + 2;
    Some((Word { charset, encoding, payload }, len))
}

fn decode_word(w: &Word<'_>) -> Option<String> {
    let bytes = match w.encoding {
        'b' => STANDARD
            .decode(w.payload)
            .or_else(|_| STANDARD_NO_PAD.decode(w.payload.trim_end_matches('=')))
            .ok()?,
        _ => decode_q(w.payload)?,
    };
    // RFC 2231 language suffix: charset*lang
    let charset = w.charset.split('*').next().unwrap_or("").to_ascii_lowercase();
    match charset.as_str() {
        "utf-8" | "utf8" => String::from_utf8(bytes).ok(),
        "us-ascii" | "ascii" => bytes.is_ascii().then(|| bytes.iter().map(|&b| b as char).collect()),
        "iso-8859-1" | "latin1" | "latin-1" => Some(bytes.iter().map(|&b| b as char).collect()),
        _ => None,
    }
}

fn decode_q(payload: &str) -> Option<Vec<u8>> {
    let src = payload.as_bytes();
    let mut out = Vec::with_capacity(src.len());
    let mut i = 0;
    while i < src.len() {
        match src[i] {
            b'_' => out.push(b' '),
            b'=' => {
                let hex = src.get(i + 1..i + 3)?;
                let hex = std::str::from_utf8(hex).ok()?;
                out.push(u8::from_str_radix(hex, 16).ok()?);
                i += 2;
            }
            b => out.push(b),
        }
        i += 1;
    }
    Some(out)
}

/// Wrap `text` as a single UTF-8 base64 encoded-word.
pub fn encode_word_b64(text: &str) -> String {
    format!("=?utf-8?b?{}?=", STANDARD.encode(text.as_bytes()))
}
